#include <benchmark/benchmark.h>

#include "grpp/events.hpp"
#include "grpp/hawkes.hpp"
#include "grpp/inference.hpp"
#include "grpp/model.hpp"
#include "grpp/training.hpp"

namespace {

grpp::model::Model bench_model(int k, int d) {
    grpp::model::Config cfg;
    cfg.node_count = k;
    cfg.embed_dim = d;
    cfg.hidden_dim = d;
    cfg.seed = 7;
    grpp::model::Model m = grpp::model::init_model(cfg);

    grpp::events::ConnectionMatrix cm;
    cm.node_count = k;
    cm.e.assign(static_cast<std::size_t>(k) * k, 0.0);
    for (int i = 0; i < k; ++i) cm.at(i, (i + 1) % k) = 1.0;
    grpp::model::set_connection(m, cm);
    return m;
}

grpp::events::EventSequence bench_sequence(int k, int n) {
    grpp::events::EventSequence s;
    for (int i = 0; i < n; ++i) s.events.push_back({0.5 * (i + 1), i % k});
    s.horizon = 0.5 * n + 1.0;
    return s;
}

void BM_SequenceNllGradient(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    auto m = bench_model(10, 32);
    auto s = bench_sequence(10, n);
    grpp::training::Integration integ{grpp::training::Integration::Mode::monte_carlo, 5, 42};
    for (auto _ : state) {
        grpp::ad::Tape tape(&m.params);
        grpp::model::TapeEngine eng{tape};
        grpp::ad::Var nll = grpp::training::sequence_nll_value(eng, m, s, integ);
        tape.backward(nll);
        std::vector<double> grad(m.params.size(), 0.0);
        tape.grad_into(grad);
        benchmark::DoNotOptimize(grad.data());
    }
    state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(BM_SequenceNllGradient)->Arg(8)->Arg(16)->Arg(32);

void BM_Thinning(benchmark::State& state) {
    grpp::hawkes::MHPParams p;
    p.node_count = 10;
    p.mu.assign(10, 0.02);
    p.a.assign(100, 0.004);
    p.omega = 0.1;
    std::uint64_t seed = 1;
    for (auto _ : state) {
        auto s = grpp::hawkes::simulate_thinning(p, 500.0, seed++);
        benchmark::DoNotOptimize(s.events.data());
    }
}
BENCHMARK(BM_Thinning);

void BM_GraphReg(benchmark::State& state) {
    const int k = static_cast<int>(state.range(0));
    std::vector<double> a(static_cast<std::size_t>(k) * k);
    std::vector<double> e(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        a[i] = 0.01 * static_cast<double>(i % 17) - 0.05;
        e[i] = static_cast<double>(i % 5) / 4.0;
    }
    for (auto _ : state) {
        benchmark::DoNotOptimize(grpp::training::graph_reg(a, e, k));
    }
}
BENCHMARK(BM_GraphReg)->Arg(10)->Arg(100);

void BM_Predict(benchmark::State& state) {
    auto m = bench_model(10, 32);
    auto s = bench_sequence(10, 12);
    for (auto _ : state) {
        auto pred = grpp::infer::predict_next(m, s);
        benchmark::DoNotOptimize(pred.t_hat);
    }
}
BENCHMARK(BM_Predict);

}  // namespace

BENCHMARK_MAIN();
