#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "grpp/autodiff.hpp"
#include "grpp/events.hpp"
#include "grpp/model.hpp"
#include "grpp/rng.hpp"

namespace grpp::training {

using ad::Vec;

// Compensator-integral approximation. Monte Carlo draws `count` uniform
// samples per inter-event interval (training); trapezoid uses `count`
// segments per interval (reported values).
struct Integration {
    enum class Mode { monte_carlo, trapezoid };
    Mode mode = Mode::trapezoid;
    int count = 50;
    std::uint64_t seed = 0;
};

// Inverted-dropout masks for the recurrent-cell input, one per event.
struct DropoutPlan {
    std::vector<Vec> masks;
};

// Sequence negative log-likelihood. The first event is conditioned on, not
// scored: events i >= 1 contribute -log lambda_{v_i}(t_i) evaluated in regime
// i-1, and the total intensity is integrated over [t_0, T]. Template shared
// by the gradient and value engines.
template <class E>
typename E::Value sequence_nll_value(E& eng, const model::Model& m,
                                     const events::EventSequence& s, const Integration& integ,
                                     const DropoutPlan* dropout = nullptr) {
    using V = typename E::Value;
    const std::size_t n = s.events.size();
    if (n < 2) {
        throw std::invalid_argument("sequence_nll: need at least 2 events");
    }
    model::Forward<E> fwd(eng, m);
    for (std::size_t i = 0; i < n; ++i) {
        std::span<const double> mask{};
        if (dropout != nullptr && i < dropout->masks.size() && !dropout->masks[i].empty()) {
            mask = dropout->masks[i];
        }
        fwd.process_event(s.events[i].t, s.events[i].node, mask);
    }

    rng::Engine mc(integ.seed);
    V loss = eng.constant1(0.0);
    for (int r = 0; r < static_cast<int>(n); ++r) {
        const double t0 = s.events[static_cast<std::size_t>(r)].t;
        const double t1 =
            r + 1 < static_cast<int>(n) ? s.events[static_cast<std::size_t>(r) + 1].t : s.horizon;
        try {
            auto reg = fwd.make_regime(r);
            if (r + 1 < static_cast<int>(n)) {
                loss = eng.add(loss, eng.scale(fwd.log_intensity(
                                                   reg, t1, s.events[static_cast<std::size_t>(r) + 1].node),
                                               -1.0));
            }
            const double len = t1 - t0;
            if (len > 0.0) {
                if (integ.mode == Integration::Mode::monte_carlo) {
                    const int samples = std::max(1, integ.count);
                    V acc = fwd.total_intensity(reg, mc.uniform(t0, t1));
                    for (int k = 1; k < samples; ++k) {
                        acc = eng.add(acc, fwd.total_intensity(reg, mc.uniform(t0, t1)));
                    }
                    loss = eng.add(loss, eng.scale(acc, len / samples));
                } else {
                    const int segments = std::max(1, integ.count);
                    const double h = len / segments;
                    V acc = eng.scale(
                        eng.add(fwd.total_intensity(reg, t0), fwd.total_intensity(reg, t1)), 0.5);
                    for (int k = 1; k < segments; ++k) {
                        acc = eng.add(acc, fwd.total_intensity(reg, t0 + h * k));
                    }
                    loss = eng.add(loss, eng.scale(acc, h));
                }
            }
        } catch (const ad::NumericError& err) {
            throw ad::NumericError(err.kernel,
                                   std::string(err.what()) + " (interval [" + std::to_string(t0) +
                                       ", " + std::to_string(t1) + "], regime " + std::to_string(r) +
                                       ")");
        }
        if (!std::isfinite(eng.scalar(loss))) {
            throw ad::NumericError("sequence_nll", "non-finite loss in interval [" +
                                                       std::to_string(t0) + ", " +
                                                       std::to_string(t1) + "] (regime " +
                                                       std::to_string(r) + ")");
        }
    }
    return loss;
}

double sequence_nll(const model::Model& m, const events::EventSequence& s,
                    const Integration& integ);

// Mean sequence NLL over the dataset's sequences with >= 2 events.
double dataset_mean_nll(const model::Model& m, const events::Dataset& d, const Integration& integ);

// KL graph distance between the learned infectivity matrix and the empirical
// connection matrix. The first argument is shifted to positivity with
// softplus, both sides are smoothed by 1e-8 and normalized to sum 1 (whole
// matrix, or per row with `rowwise`), and KL(E-hat || A-hat) is returned.
// Zero iff the transformed matrices are equal.
double graph_reg(std::span<const double> a, std::span<const double> e, int node_count,
                 bool rowwise = false);

// Tape program for the regularizer with A = H Omega H^T from the bound
// parameter vector.
ad::Var graph_reg_program(ad::Tape& tape, const model::Model& m,
                          const events::ConnectionMatrix& connection, bool rowwise = false);

// Eq-style training objective: mean sequence NLL over the batch plus
// gamma * graph_reg(infectivity, E).
double total_loss(const model::Model& m, std::span<const events::EventSequence> batch,
                  const events::ConnectionMatrix& connection, double gamma,
                  const Integration& integ);

// The same objective as a tape program of the parameter vector; drives
// gradient checks and the optimizer.
ad::TapeFunction total_loss_program(const model::Model& m,
                                    std::vector<events::EventSequence> batch,
                                    events::ConnectionMatrix connection, double gamma,
                                    Integration integ);

ad::GradientRecord total_loss_with_gradients(const model::Model& m,
                                             std::span<const events::EventSequence> batch,
                                             const events::ConnectionMatrix& connection,
                                             double gamma, const Integration& integ);

struct TrainConfig {
    int epochs = 50;
    int batch_size = 256;
    double learning_rate = 0.001;
    double dropout = 0.2;
    double gamma = 0.01;
    int mc_samples = 5;         // Monte Carlo samples per interval while training
    int trapezoid_points = 50;  // trapezoid segments per interval for reported NLL
    double clip_norm = 5.0;
    std::uint64_t seed = 1;
    std::uint64_t split_seed = 1;
    bool disable_graph_propagation = false;  // woGP: encoder feeds the head, gamma = 0
    bool disable_history_attention = false;  // woAT: single most recent excitation term
    int patience = 10;
    int threads = 1;
    bool deterministic = true;
    bool kl_rowwise = false;
    double tau = 0.0;
    int hidden_dim = 128;
    int embed_dim = 128;
    int node_count = 0;  // 0 = take from the dataset

    std::string ablation_tag() const {
        if (disable_graph_propagation) return "woGP";
        if (disable_history_attention) return "woAT";
        return "none";
    }
};

// Flat key=value config file ('#' comments). Unknown keys raise with the key
// name. CLI flags are applied on top by the caller.
TrainConfig load_train_config(const std::filesystem::path& path, TrainConfig base = {});
void apply_config_entry(TrainConfig& cfg, const std::string& key, const std::string& value);

struct EpochRow {
    int epoch = 0;  // 0 = before any update
    double train_loss = 0.0;
    double valid_nll = 0.0;
    double valid_graph = 0.0;
    double seconds = 0.0;
};

struct TrainReport {
    std::vector<EpochRow> rows;
    int best_epoch = 0;
    double best_valid_nll = 0.0;
    int epochs_run = 0;
    std::string ablation = "none";
};

// CSV: epoch,train_loss,valid_nll,valid_graph_loss,seconds. zero_seconds
// suppresses wall times so deterministic reruns are byte-identical.
void write_report_csv(const std::filesystem::path& path, const TrainReport& report,
                      bool zero_seconds);

struct TrainResult {
    model::Model best;
    TrainReport report;
};

// Builds a model whose architecture flags come from the config.
model::Model make_model(const TrainConfig& cfg, int node_count);

// Adam over shuffled mini-batches with global-norm gradient clipping,
// Monte Carlo compensator integration, dropout on the recurrent-cell input,
// and early stopping on validation NLL. Returns the best-validation
// checkpoint. Deterministic for a fixed seed: the per-sequence noise streams
// are keyed by (seed, epoch, sequence index) and reduction order is fixed, so
// results do not depend on the thread count.
TrainResult train(model::Model m, const events::Dataset& train_set,
                  const events::Dataset& valid_set, const TrainConfig& cfg);

}  // namespace grpp::training
