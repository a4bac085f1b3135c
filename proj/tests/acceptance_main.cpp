// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. Heavier end-to-end checks live here rather than in the unit tests.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <string>
#include <sys/wait.h>
#include <vector>

#include "grpp/autodiff.hpp"
#include "grpp/events.hpp"
#include "grpp/hawkes.hpp"
#include "grpp/inference.hpp"
#include "grpp/model.hpp"
#include "grpp/rng.hpp"
#include "grpp/training.hpp"

namespace fs = std::filesystem;
using namespace grpp;
using ad::Vec;
using events::Dataset;
using events::EventSequence;
using model::Model;
using training::Integration;
using training::TrainConfig;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, ...) {
    char buf[512];
    va_list args;
    va_start(args, f);
    std::vsnprintf(buf, sizeof(buf), f, args);
    va_end(args);
    return buf;
}

// ---------------------------------------------------------------------------
// 1. gradient correctness
// ---------------------------------------------------------------------------

Outcome criterion_gradients() {
    model::Config cfg;
    cfg.node_count = 4;
    cfg.embed_dim = 8;
    cfg.hidden_dim = 8;
    cfg.seed = 47;
    Model m = model::init_model(cfg);
    // probe at an active-parameter point; the attention paths are nearly flat
    // at the small-weight init and central differences drown in roundoff there
    for (double& v : m.params.values) v *= 3.0;
    events::ConnectionMatrix cm;
    cm.node_count = 4;
    cm.e.assign(16, 0.0);
    cm.at(0, 1) = 1.0;
    cm.at(1, 2) = 0.5;
    cm.at(2, 3) = 0.25;
    model::set_connection(m, cm);

    EventSequence s1, s2;
    for (auto [t, n] : std::vector<std::pair<double, int>>{
             {0.3, 0}, {0.8, 1}, {1.2, 2}, {1.9, 3}, {2.4, 0}, {2.8, 1}}) {
        s1.events.push_back({t, n});
    }
    s1.horizon = 3.0;
    for (auto [t, n] : std::vector<std::pair<double, int>>{
             {0.2, 3}, {0.7, 2}, {1.1, 1}, {1.6, 0}, {2.2, 2}, {2.7, 3}}) {
        s2.events.push_back({t, n});
    }
    s2.horizon = 3.0;

    auto program = training::total_loss_program(m, {s1, s2}, m.connection, 0.01,
                                                {Integration::Mode::trapezoid, 50, 0});
    const double err = ad::finite_difference_check(program, m.params, 1e-4);
    return {err < 1e-4, fmt("max rel err %.3e (tolerance 1e-4, %zu parameters)", err,
                            m.params.size())};
}

// ---------------------------------------------------------------------------
// 2. simulator statistics
// ---------------------------------------------------------------------------

Outcome criterion_simulator() {
    hawkes::MHPParams poisson;
    poisson.node_count = 1;
    poisson.mu = {0.5};
    poisson.a = {0.0};
    poisson.omega = 1.0;

    int in_band = 0;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        const auto s = hawkes::simulate_thinning(poisson, 1000.0, seed);
        const double n = static_cast<double>(s.events.size());
        if (std::abs(n - 500.0) <= 4.0 * std::sqrt(500.0)) ++in_band;
    }
    const bool counts_ok = in_band >= 9;

    hawkes::MHPParams hp;
    hp.node_count = 1;
    hp.mu = {0.2};
    hp.a = {0.5};
    hp.omega = 1.0;
    const auto hs = hawkes::simulate_thinning(hp, 5000.0, 7);
    const double rate = static_cast<double>(hs.events.size()) / 5000.0;
    const bool rate_ok = std::abs(rate - 0.4) <= 0.05 * 0.4;

    std::vector<double> gaps;
    std::uint64_t seed = 101;
    while (gaps.size() < 10000) {
        const auto s = hawkes::simulate_thinning(poisson, 4000.0, seed++);
        double prev = 0.0;
        for (const auto& ev : s.events) {
            gaps.push_back(ev.t - prev);
            prev = ev.t;
        }
    }
    gaps.resize(10000);
    std::sort(gaps.begin(), gaps.end());
    double d_stat = 0.0;
    const double n = static_cast<double>(gaps.size());
    for (std::size_t i = 0; i < gaps.size(); ++i) {
        const double f = 1.0 - std::exp(-0.5 * gaps[i]);
        d_stat = std::max({d_stat, std::abs(f - static_cast<double>(i) / n),
                           std::abs(f - static_cast<double>(i + 1) / n)});
    }
    const double d_crit = 1.628 / std::sqrt(n);
    const bool ks_ok = d_stat < d_crit;

    return {counts_ok && rate_ok && ks_ok,
            fmt("Poisson band %d/10, Hawkes rate %.4f (target 0.4 +- 5%%), KS %.4f < %.4f",
                in_band, rate, d_stat, d_crit)};
}

// ---------------------------------------------------------------------------
// 3. NLL oracles
// ---------------------------------------------------------------------------

Outcome criterion_nll_oracles() {
    // rigged constant-intensity model vs the homogeneous closed form
    model::Config cfg;
    cfg.node_count = 1;
    cfg.embed_dim = 2;
    cfg.hidden_dim = 3;
    cfg.seed = 7;
    Model m = model::init_model(cfg);
    {
        auto hw = m.params.block("head_w");
        std::fill(hw.begin(), hw.end(), 0.0);
        auto hb = m.params.block("head_b");
        const double c = 0.8;
        std::fill(hb.begin(), hb.end(), std::log(std::expm1(c)));
    }
    EventSequence rig;
    rig.horizon = 9.0;
    for (double t : {1.0, 2.5, 3.0, 5.5}) rig.events.push_back({t, 0});
    const double expected = -3.0 * std::log(0.8) + 0.8 * 8.0;
    const double got = training::sequence_nll(m, rig, {Integration::Mode::trapezoid, 64, 0});
    const double rig_err = std::abs(got - expected);
    bool ok = rig_err < 1e-6;

    // closed-form compensator vs a 1e6-point trapezoid on random stable sets
    rng::Engine gen(404);
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        hawkes::MHPParams p;
        p.node_count = 2 + static_cast<int>(gen.below(4));
        const int k = p.node_count;
        p.omega = gen.uniform(0.5, 2.0);
        p.mu.resize(static_cast<std::size_t>(k));
        for (double& mu : p.mu) mu = gen.uniform(0.05, 0.3);
        p.a.assign(static_cast<std::size_t>(k) * k, 0.0);
        for (double& a : p.a) a = gen.uniform(0.0, 1.0);
        // scale to 80% of the stability boundary
        const double scale = 0.8 / p.max_row_branching();
        for (double& a : p.a) a *= scale;

        double mu_total = 0.0;
        for (double mu : p.mu) mu_total += mu;
        const double horizon = 60.0 / mu_total;
        const auto s = hawkes::simulate_thinning(p, horizon, 9000 + static_cast<std::uint64_t>(trial));
        if (s.events.size() < 5) continue;

        std::vector<double> colsum(static_cast<std::size_t>(k), 0.0);
        for (int j = 0; j < k; ++j) {
            for (int i = 0; i < k; ++i) colsum[static_cast<std::size_t>(j)] += p.alpha(i, j);
        }
        double closed = mu_total * s.horizon;
        for (const auto& ev : s.events) {
            closed += colsum[static_cast<std::size_t>(ev.node)] *
                      (1.0 - std::exp(-p.omega * (s.horizon - ev.t))) / p.omega;
        }

        // quadrature with one panel per inter-event interval; the excitation
        // mass at each panel start is summed directly over the history
        std::vector<double> knots{0.0};
        for (const auto& ev : s.events) knots.push_back(ev.t);
        knots.push_back(s.horizon);
        const long total_points = 1000000;
        double quad = 0.0;
        for (std::size_t seg = 0; seg + 1 < knots.size(); ++seg) {
            const double a = knots[seg];
            const double b = knots[seg + 1];
            if (!(b > a)) continue;
            // the panel (a, b] sits after the event at its left knot, so every
            // event with t_j <= a contributes decayed excitation
            double excitation_at_a = 0.0;
            for (const auto& ev : s.events) {
                if (ev.t <= a) {
                    excitation_at_a +=
                        colsum[static_cast<std::size_t>(ev.node)] * std::exp(-p.omega * (a - ev.t));
                }
            }
            const long pts = std::max<long>(
                4, static_cast<long>(static_cast<double>(total_points) * (b - a) / s.horizon));
            const double h = (b - a) / static_cast<double>(pts);
            auto total_at = [&](double offset) {
                return mu_total + excitation_at_a * std::exp(-p.omega * offset);
            };
            double acc = 0.5 * (total_at(0.0) + total_at(b - a));
            for (long j = 1; j < pts; ++j) acc += total_at(h * static_cast<double>(j));
            quad += acc * h;
        }
        worst = std::max(worst, std::abs(closed - quad) / std::abs(closed));
    }
    ok = ok && worst < 1e-6;
    return {ok, fmt("rigged-constant err %.2e (< 1e-6), compensator vs quadrature worst rel %.2e "
                    "(< 1e-6, 20 sets)",
                    rig_err, worst)};
}

// ---------------------------------------------------------------------------
// 4. prediction oracles
// ---------------------------------------------------------------------------

Model rigged_rates_model(const Vec& rates) {
    model::Config cfg;
    cfg.node_count = static_cast<int>(rates.size());
    cfg.embed_dim = 2;
    cfg.hidden_dim = 3;
    cfg.seed = 7;
    Model m = model::init_model(cfg);
    auto hw = m.params.block("head_w");
    std::fill(hw.begin(), hw.end(), 0.0);
    auto hb = m.params.block("head_b");
    for (std::size_t i = 0; i < rates.size(); ++i) hb[i] = std::log(std::expm1(rates[i]));
    return m;
}

Outcome criterion_predictions() {
    double worst_time = 0.0;
    for (double lambda : {0.1, 2.0}) {
        Model m = rigged_rates_model({lambda});
        EventSequence hist;
        hist.horizon = 1e6;
        hist.events.push_back({3.0, 0});
        const double t_hat = infer::predict_time(m, hist);
        worst_time = std::max(worst_time, std::abs(t_hat - (3.0 + 1.0 / lambda)));
    }
    const bool time_ok = worst_time < 1e-3;

    Model m3 = rigged_rates_model({0.1, 0.3, 0.6});
    EventSequence hist;
    hist.horizon = 1e6;
    hist.events.push_back({5.0, 1});
    const auto pred = infer::predict_next(m3, hist);
    double captured = 0.0;
    for (double x : pred.node_mass) captured += x;
    const double mass_gap = std::abs(captured - (1.0 - pred.truncated_mass));
    const bool mass_ok = mass_gap < 1e-6;
    const bool argmax_ok = pred.node_hat == 2;

    return {time_ok && mass_ok && argmax_ok,
            fmt("t_hat err %.2e (< 1e-3), node-mass decomposition gap %.2e (< 1e-6), argmax %d "
                "(expect 2)",
                worst_time, mass_gap, pred.node_hat)};
}

// ---------------------------------------------------------------------------
// 5/6/8. end-to-end synthetic learning, recovery, ablation ordering
// ---------------------------------------------------------------------------

struct Experiment {
    Dataset data;
    events::SplitResult splits;
    events::ConnectionMatrix connection;
    hawkes::MHPParams generator;
    Vec ground_truth_source_target;  // row = influencing node
};

// Scaled-down 10-node synthetic set: the factor/base-rate recipe at a time
// scale of 14 (mu, A, omega multiplied by 14), which is the same process with
// time measured in coarser units, dense enough to carry signal at horizon
// 200 (about 19 events per sequence). The draw seed is chosen so the task has
// genuine node-prediction headroom: with a rank-1 infectivity matrix the
// offspring node distribution is source-independent, and for many draws even
// the exact Bayes predictor cannot beat the marginal baseline.
Experiment build_experiment() {
    Experiment ex;
    const int k = 10;
    auto synth = hawkes::synth_infectivity(k, 825, 1.0);
    ex.generator.node_count = k;
    ex.generator.mu = synth.mu;
    ex.generator.a = synth.a;
    double worst_row = 0.0;
    for (int i = 0; i < k; ++i) {
        double row = 0.0;
        for (int j = 0; j < k; ++j) row += ex.generator.alpha(i, j);
        worst_row = std::max(worst_row, row);
    }
    ex.generator.omega = worst_row / 0.9;
    const double time_scale = 14.0;
    for (double& x : ex.generator.mu) x *= time_scale;
    for (double& x : ex.generator.a) x *= time_scale;
    ex.generator.omega *= time_scale;

    ex.data = hawkes::simulate_dataset(ex.generator, 300, 200.0, 825);
    ex.splits = events::split(ex.data, 1);
    ex.connection = events::estimate_connection_matrix(ex.splits.train);

    ex.ground_truth_source_target.assign(static_cast<std::size_t>(k) * k, 0.0);
    for (int i = 0; i < k; ++i) {
        for (int j = 0; j < k; ++j) {
            ex.ground_truth_source_target[static_cast<std::size_t>(i) * k + j] =
                ex.generator.alpha(j, i);
        }
    }
    return ex;
}

TrainConfig experiment_config(std::uint64_t seed, const std::string& ablation) {
    TrainConfig cfg;
    cfg.epochs = 50;
    cfg.batch_size = 8;
    cfg.learning_rate = 0.01;
    cfg.dropout = 0.0;
    cfg.gamma = 0.01;
    cfg.mc_samples = 5;
    cfg.trapezoid_points = 20;
    cfg.seed = seed;
    cfg.split_seed = 1;
    cfg.patience = 50;  // always run the pinned 50 epochs
    cfg.threads = 2;
    cfg.hidden_dim = 32;
    cfg.embed_dim = 32;
    cfg.disable_graph_propagation = ablation == "woGP";
    cfg.disable_history_attention = ablation == "woAT";
    return cfg;
}

training::TrainResult run_experiment(const Experiment& ex, std::uint64_t seed,
                                     const std::string& ablation) {
    TrainConfig cfg = experiment_config(seed, ablation);
    Model m = training::make_model(cfg, ex.data.node_count);
    model::set_connection(m, ex.connection);
    return training::train(std::move(m), ex.splits.train, ex.splits.valid, cfg);
}

double spearman(const Vec& a, const Vec& b) {
    auto ranks = [](const Vec& v) {
        std::vector<std::size_t> idx(v.size());
        std::iota(idx.begin(), idx.end(), 0);
        std::sort(idx.begin(), idx.end(), [&](std::size_t x, std::size_t y) { return v[x] < v[y]; });
        Vec r(v.size());
        std::size_t i = 0;
        while (i < idx.size()) {
            std::size_t j = i;
            while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
            const double avg = 0.5 * (static_cast<double>(i) + static_cast<double>(j)) + 1.0;
            for (std::size_t q = i; q <= j; ++q) r[idx[q]] = avg;
            i = j + 1;
        }
        return r;
    };
    const Vec ra = ranks(a);
    const Vec rb = ranks(b);
    double ma = 0.0, mb = 0.0;
    for (std::size_t i = 0; i < ra.size(); ++i) {
        ma += ra[i];
        mb += rb[i];
    }
    ma /= static_cast<double>(ra.size());
    mb /= static_cast<double>(rb.size());
    double cov = 0.0, va = 0.0, vb = 0.0;
    for (std::size_t i = 0; i < ra.size(); ++i) {
        cov += (ra[i] - ma) * (rb[i] - mb);
        va += (ra[i] - ma) * (ra[i] - ma);
        vb += (rb[i] - mb) * (rb[i] - mb);
    }
    return cov / std::sqrt(va * vb);
}

struct EndToEnd {
    Outcome learning;   // criterion 5
    Outcome recovery;   // criterion 6
    Outcome ablations;  // criterion 8
};

EndToEnd run_end_to_end() {
    Experiment ex = build_experiment();

    const std::vector<std::uint64_t> seeds{11, 12, 13};
    std::vector<double> full_nll, wogp_nll, woat_nll;
    training::TrainResult first_full = run_experiment(ex, seeds[0], "full");
    full_nll.push_back(first_full.report.best_valid_nll);

    // criterion 5: learning beats the initial model and both baselines
    const double epoch0 = first_full.report.rows.front().valid_nll;
    const bool improved = first_full.report.best_valid_nll < epoch0;

    infer::Metrics model_metrics = infer::evaluate(first_full.best, ex.splits.test);

    // marginal-frequency node baseline and pooled mean-gap time baseline from
    // the training split
    std::vector<long> node_counts(10, 0);
    double gap_sum = 0.0;
    long gap_n = 0;
    for (const auto& s : ex.splits.train.sequences) {
        for (std::size_t i = 0; i < s.events.size(); ++i) {
            ++node_counts[static_cast<std::size_t>(s.events[i].node)];
            if (i > 0) {
                gap_sum += s.events[i].t - s.events[i - 1].t;
                ++gap_n;
            }
        }
    }
    const int marginal_node = static_cast<int>(
        std::max_element(node_counts.begin(), node_counts.end()) - node_counts.begin());
    const double mean_gap = gap_sum / static_cast<double>(gap_n);
    auto baseline = [&](const EventSequence& s, int known) {
        infer::Prediction p;
        p.t_hat = s.events[static_cast<std::size_t>(known - 1)].t + mean_gap;
        p.node_hat = marginal_node;
        return p;
    };
    infer::Metrics baseline_metrics = infer::evaluate_with(baseline, ex.splits.test);

    const bool accuracy_ok = model_metrics.accuracy >= baseline_metrics.accuracy + 0.02;
    const bool rmse_ok = model_metrics.rmse <= baseline_metrics.rmse;
    Outcome learning{improved && accuracy_ok && rmse_ok,
                     fmt("valid nll %.2f < %.2f (epoch 0); accuracy %.4f vs marginal %.4f (+2pp "
                         "needed); rmse %.3f vs mean-gap %.3f",
                         first_full.report.best_valid_nll, epoch0, model_metrics.accuracy,
                         baseline_metrics.accuracy, model_metrics.rmse, baseline_metrics.rmse)};

    // criterion 6: infectivity recovery on the same run
    const Vec recovered = model::infectivity(first_full.best);
    const Vec& truth = ex.ground_truth_source_target;
    std::vector<std::size_t> support;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (truth[i] > 0.0) support.push_back(i);
    }
    std::vector<std::size_t> order(recovered.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return recovered[a] > recovered[b]; });
    std::vector<bool> in_top(recovered.size(), false);
    for (std::size_t i = 0; i < support.size(); ++i) in_top[order[i]] = true;
    std::size_t inter = 0;
    for (std::size_t i : support) inter += in_top[i] ? 1 : 0;
    const double jaccard = static_cast<double>(inter) /
                           static_cast<double>(2 * support.size() - inter);
    const double rho = spearman(recovered, truth);
    Outcome recovery{jaccard >= 0.4 && rho > 0.3,
                     fmt("support Jaccard %.3f (>= 0.4), Spearman %.3f (> 0.3)", jaccard, rho)};

    // criterion 8: ablation ordering over three seeds
    for (std::size_t i = 0; i < seeds.size(); ++i) {
        if (i > 0) full_nll.push_back(run_experiment(ex, seeds[i], "full").report.best_valid_nll);
        wogp_nll.push_back(run_experiment(ex, seeds[i], "woGP").report.best_valid_nll);
        woat_nll.push_back(run_experiment(ex, seeds[i], "woAT").report.best_valid_nll);
    }
    auto mean = [](const std::vector<double>& v) {
        return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    };
    const double m_full = mean(full_nll);
    const double m_wogp = mean(wogp_nll);
    const double m_woat = mean(woat_nll);
    Outcome ablations{m_full <= m_wogp && m_full <= m_woat,
                      fmt("mean valid nll: full %.2f, woGP %.2f, woAT %.2f (3 seeds)", m_full,
                          m_wogp, m_woat)};
    return {learning, recovery, ablations};
}

// ---------------------------------------------------------------------------
// 7. regularizer identities
// ---------------------------------------------------------------------------

Outcome criterion_regularizer() {
    rng::Engine gen(777);
    double worst_identity = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
        const int k = 2 + static_cast<int>(gen.below(5));
        Vec x(static_cast<std::size_t>(k) * k);
        for (double& v : x) v = gen.uniform(-3.0, 3.0);
        Vec e(x.size());
        for (std::size_t i = 0; i < x.size(); ++i) e[i] = ad::softplus(x[i]);
        worst_identity = std::max(worst_identity, training::graph_reg(x, e, k));
    }
    bool nonneg = true;
    for (int trial = 0; trial < 100; ++trial) {
        const int k = 2 + static_cast<int>(gen.below(4));
        Vec a(static_cast<std::size_t>(k) * k);
        Vec e(a.size());
        for (double& v : a) v = gen.uniform(-2.0, 2.0);
        for (double& v : e) v = gen.uniform(0.0, 1.0);
        nonneg = nonneg && training::graph_reg(a, e, k) >= 0.0;
    }

    model::Config cfg;
    cfg.node_count = 3;
    cfg.embed_dim = 3;
    cfg.hidden_dim = 4;
    cfg.seed = 43;
    Model m = model::init_model(cfg);
    events::ConnectionMatrix cm;
    cm.node_count = 3;
    cm.e.assign(9, 0.25);
    model::set_connection(m, cm);
    std::vector<EventSequence> batch;
    EventSequence s;
    s.horizon = 3.0;
    for (auto [t, n] : std::vector<std::pair<double, int>>{{0.4, 0}, {1.0, 2}, {1.7, 1}}) {
        s.events.push_back({t, n});
    }
    batch.push_back(s);
    const Integration integ{Integration::Mode::trapezoid, 40, 0};
    const double nll = training::sequence_nll(m, batch[0], integ);
    const bool gamma0_exact = training::total_loss(m, batch, m.connection, 0.0, integ) == nll;

    return {worst_identity < 1e-9 && nonneg && gamma0_exact,
            fmt("identity worst %.2e (< 1e-9), nonneg %s, gamma=0 equals mean NLL: %s",
                worst_identity, nonneg ? "yes" : "no", gamma0_exact ? "exact" : "VIOLATED")};
}

// ---------------------------------------------------------------------------
// 9. CLI determinism
// ---------------------------------------------------------------------------

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

int run_tool(const std::string& args) {
    const std::string cmd = std::string(GRPP_TOOL_PATH) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Outcome criterion_cli_determinism() {
    const fs::path base = fs::temp_directory_path() / "grpp_acceptance_cli";
    fs::remove_all(base);
    fs::create_directories(base);

    const std::string sim_flags = "simulate --dim 10 --sequences 20 --horizon 100 --seed 5 "
                                  "--time-scale 8 --out ";
    if (run_tool(sim_flags + (base / "d1").string()) != 0) return {false, "simulate failed"};
    if (run_tool(sim_flags + (base / "d2").string()) != 0) return {false, "simulate failed"};
    const bool sim_ok = slurp(base / "d1" / "events.jsonl") == slurp(base / "d2" / "events.jsonl");

    const fs::path cfg = base / "train.cfg";
    {
        std::ofstream out(cfg);
        out << "epochs = 2\nbatch_size = 8\nhidden_dim = 8\nembed_dim = 8\nseed = 4\n"
            << "split_seed = 2\nmc_samples = 3\ntrapezoid_points = 10\npatience = 5\n";
    }
    const std::string train_flags = "train --data " + (base / "d1").string() + " --config " +
                                    cfg.string() + " --deterministic --out ";
    if (run_tool(train_flags + (base / "r1").string()) != 0) return {false, "train failed"};
    if (run_tool(train_flags + (base / "r2").string()) != 0) return {false, "train failed"};
    const bool train_ok = slurp(base / "r1" / "report.csv") == slurp(base / "r2" / "report.csv");

    return {sim_ok && train_ok, fmt("events.jsonl identical: %s, report.csv identical: %s",
                                    sim_ok ? "yes" : "no", train_ok ? "yes" : "no")};
}

int report(int index, const char* name, const Outcome& o, double secs) {
    std::printf("[%s] %d. %s: %s [%.1fs]\n", o.pass ? "PASS" : "FAIL", index, name,
                o.detail.c_str(), secs);
    std::fflush(stdout);
    return o.pass ? 0 : 1;
}

}  // namespace

int main() {
    int failures = 0;
    auto timed = [&](int index, const char* name, auto fn) {
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = fn();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failures += report(index, name, o, seconds_since(t0));
    };

    timed(1, "gradient correctness", criterion_gradients);
    timed(2, "simulator statistics", criterion_simulator);
    timed(3, "likelihood oracles", criterion_nll_oracles);
    timed(4, "prediction oracles", criterion_predictions);

    {
        const auto t0 = std::chrono::steady_clock::now();
        EndToEnd e2e;
        try {
            e2e = run_end_to_end();
        } catch (const std::exception& e) {
            const std::string msg = std::string("exception: ") + e.what();
            e2e.learning = e2e.recovery = e2e.ablations = {false, msg};
        }
        const double secs = seconds_since(t0);
        failures += report(5, "end-to-end synthetic learning", e2e.learning, secs);
        failures += report(6, "infectivity recovery", e2e.recovery, 0.0);
        timed(7, "regularizer identities", criterion_regularizer);
        failures += report(8, "ablation ordering", e2e.ablations, 0.0);
    }

    timed(9, "pipeline determinism", criterion_cli_determinism);

    if (failures == 0) {
        std::printf("acceptance: all criteria passed\n");
    } else {
        std::printf("acceptance: %d criterion(s) failed\n", failures);
    }
    return failures == 0 ? 0 : 1;
}
