#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "grpp/events.hpp"
#include "grpp/model.hpp"

namespace grpp::infer {

using ad::Vec;

struct PredictOptions {
    int points_per_gap = 200;          // grid density per mean inter-event time
    double survival_threshold = 1e-4;  // extend the horizon until survival drops below this
    double max_horizon_gaps = 100.0;   // give up past this many mean gaps
};

struct Prediction {
    double t_hat = 0.0;
    int node_hat = 0;
    double truncated_mass = 0.0;  // survival remaining where the grid stopped
    Vec node_mass;                // per-node integrals of (lambda_k / lambda) p(t); sums to captured mass
};

// Density of the next event time, p(t) = lambda(t) exp(-int_{t_i}^t lambda),
// with the inner integral by trapezoid. `history` must be nonempty and t at
// or after its last event.
double next_event_density(const model::Model& m, const events::EventSequence& history, double t,
                          const PredictOptions& opts = {});

// Expectation predictors on a shared trapezoid grid. The grid starts at the
// last event, spans a multiple of the history's mean inter-event gap, and
// doubles until survival falls below the threshold; the time expectation adds
// a constant-rate estimate of the truncated tail. Throws if survival has not
// reached 1e-2 within max_horizon_gaps mean gaps.
Prediction predict_next(const model::Model& m, const events::EventSequence& history,
                        const PredictOptions& opts = {});
double predict_time(const model::Model& m, const events::EventSequence& history,
                    const PredictOptions& opts = {});
int predict_node(const model::Model& m, const events::EventSequence& history,
                 const PredictOptions& opts = {});

// Core grid routine over a frozen regime; mean_gap sets the grid resolution.
Prediction predict_from_regime(const model::RegimeIntensity& regime, double mean_gap,
                               const PredictOptions& opts);

struct Metrics {
    double rmse = 0.0;
    double accuracy = 0.0;
    long n_events = 0;
    double truncation_mass_max = 0.0;
    long skipped_sequences = 0;  // test sequences with < 2 events
};

struct PredictionRow {
    std::string seq_id;
    int index = 0;
    double t_true = 0.0;
    double t_hat = 0.0;
    int k_true = 0;
    int k_hat = 0;
};

// Walks every test sequence and predicts each event from its prefix (the
// first event of a sequence is given, not predicted). RMSE is over time
// errors, accuracy over node hits.
Metrics evaluate(const model::Model& m, const events::Dataset& test,
                 const PredictOptions& opts = {}, std::vector<PredictionRow>* rows = nullptr);

// Same walk with an injected predictor: prefix length `known` events of `s`,
// predict event index `known`. Oracle/baseline predictors in tests use this.
using Predictor = std::function<Prediction(const events::EventSequence& s, int known)>;
Metrics evaluate_with(const Predictor& predict, const events::Dataset& test,
                      std::vector<PredictionRow>* rows = nullptr);

void write_metrics_json(const std::filesystem::path& path, const Metrics& metrics);
void write_predictions_csv(const std::filesystem::path& path,
                           const std::vector<PredictionRow>& rows);

}  // namespace grpp::infer
