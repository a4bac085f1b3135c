#include "grpp/inference.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace grpp::infer {

using events::EventSequence;
using model::Model;
using model::RegimeIntensity;

namespace {

double history_mean_gap(const EventSequence& history, const RegimeIntensity& regime) {
    const std::size_t n = history.events.size();
    if (n >= 2) {
        const double span = history.events.back().t - history.events.front().t;
        if (span > 0.0) return span / static_cast<double>(n - 1);
    }
    // single event (or zero span): fall back to the model's own rate
    const double rate = std::max(regime.total_intensity(regime.start), 1e-12);
    return 1.0 / rate;
}

double prefix_mean_gap(const EventSequence& s, int known, const RegimeIntensity& regime) {
    if (known >= 2) {
        const double span = s.events[static_cast<std::size_t>(known - 1)].t - s.events[0].t;
        if (span > 0.0) return span / static_cast<double>(known - 1);
    }
    const double rate = std::max(regime.total_intensity(regime.start), 1e-12);
    return 1.0 / rate;
}

}  // namespace

double next_event_density(const Model& m, const EventSequence& history, double t,
                          const PredictOptions& opts) {
    if (history.events.empty()) {
        throw std::invalid_argument("next_event_density: history must be nonempty");
    }
    auto regimes = model::compute_regimes(m, history);
    const RegimeIntensity& reg = regimes.back();
    if (t < reg.start) {
        throw std::invalid_argument("next_event_density: t precedes the last event");
    }
    const double gap = history_mean_gap(history, reg);
    const double dt_target = gap / std::max(1, opts.points_per_gap);
    const int steps = std::max(1, static_cast<int>(std::ceil((t - reg.start) / dt_target)));
    const double h = (t - reg.start) / steps;

    double compensator = 0.0;
    double prev = reg.total_intensity(reg.start);
    for (int k = 1; k <= steps; ++k) {
        const double cur = reg.total_intensity(reg.start + h * k);
        compensator += 0.5 * h * (prev + cur);
        prev = cur;
    }
    return prev * std::exp(-compensator);
}

Prediction predict_from_regime(const RegimeIntensity& regime, double mean_gap,
                               const PredictOptions& opts) {
    const int k = regime.node_count;
    mean_gap = std::max(mean_gap, 1e-12);
    double dt = mean_gap / std::max(1, opts.points_per_gap);
    // The integrable horizon is set by the quiet regime, not by how dense the
    // recent history happened to be, so the cap counts whichever unit is
    // longer. Bursty prefixes would otherwise flag perfectly integrable
    // densities as non-integrable.
    const double unit = std::max(mean_gap, 1.0 / std::max(regime.asymptotic_total(), 1e-300));
    const double span_cap = opts.max_horizon_gaps * unit;
    // step doubling keeps far-tail walks cheap; resolution stays fine where
    // the density mass is
    const int steps_per_segment = 4 * std::max(1, opts.points_per_gap);
    int steps_in_segment = 0;

    Prediction pred;
    pred.node_mass.assign(static_cast<std::size_t>(k), 0.0);

    Vec lam_prev(static_cast<std::size_t>(k));
    Vec lam_cur(static_cast<std::size_t>(k));
    regime.event_intensities(regime.start, lam_prev);
    double tot_prev = 0.0;
    for (double x : lam_prev) tot_prev += x;

    double t = regime.start;
    double surv_prev = 1.0;
    double compensator = 0.0;
    double time_integral = 0.0;
    double tot_cur = tot_prev;
    double surv_cur = surv_prev;

    while (true) {
        if (++steps_in_segment > steps_per_segment) {
            steps_in_segment = 1;
            dt *= 2.0;
        }
        const double t_next = t + dt;
        regime.event_intensities(t_next, lam_cur);
        tot_cur = 0.0;
        for (double x : lam_cur) tot_cur += x;
        compensator += 0.5 * dt * (tot_prev + tot_cur);
        surv_cur = std::exp(-compensator);

        // the survival drop is exactly the probability mass of this step, so
        // per-node masses telescope to 1 - survival; the step mass is split
        // across nodes and time by trapezoid weights of p = lambda * survival
        const double step_mass = surv_prev - surv_cur;
        const double p_prev = tot_prev * surv_prev;
        const double p_cur = tot_cur * surv_cur;
        const double weight = p_prev + p_cur;
        if (step_mass > 0.0 && weight > 0.0) {
            time_integral += step_mass * (t * p_prev + t_next * p_cur) / weight;
            for (int i = 0; i < k; ++i) {
                pred.node_mass[static_cast<std::size_t>(i)] +=
                    step_mass *
                    (lam_prev[static_cast<std::size_t>(i)] * surv_prev +
                     lam_cur[static_cast<std::size_t>(i)] * surv_cur) /
                    weight;
            }
        }

        t = t_next;
        lam_prev.swap(lam_cur);
        tot_prev = tot_cur;
        surv_prev = surv_cur;

        if (surv_cur < opts.survival_threshold) break;
        if (t - regime.start >= span_cap) {
            if (surv_cur > 1e-2) {
                throw std::runtime_error(
                    "predict: non-integrable tail (survival " + std::to_string(surv_cur) +
                    " after " + std::to_string(opts.max_horizon_gaps) + " mean gaps)");
            }
            break;
        }
    }

    // constant-rate estimate of the truncated tail of the time expectation
    pred.truncated_mass = surv_cur;
    if (tot_cur > 0.0) {
        time_integral += surv_cur * (t + 1.0 / tot_cur);
    }
    pred.t_hat = time_integral;

    int best = 0;
    for (int i = 1; i < k; ++i) {
        if (pred.node_mass[static_cast<std::size_t>(i)] >
            pred.node_mass[static_cast<std::size_t>(best)]) {
            best = i;
        }
    }
    pred.node_hat = best;
    return pred;
}

Prediction predict_next(const Model& m, const EventSequence& history, const PredictOptions& opts) {
    if (history.events.empty()) {
        throw std::invalid_argument("predict: history must be nonempty");
    }
    auto regimes = model::compute_regimes(m, history);
    const RegimeIntensity& reg = regimes.back();
    return predict_from_regime(reg, history_mean_gap(history, reg), opts);
}

double predict_time(const Model& m, const EventSequence& history, const PredictOptions& opts) {
    return predict_next(m, history, opts).t_hat;
}

int predict_node(const Model& m, const EventSequence& history, const PredictOptions& opts) {
    return predict_next(m, history, opts).node_hat;
}

namespace {

Metrics run_evaluation(const Predictor& predict, const events::Dataset& test,
                       std::vector<PredictionRow>* rows) {
    Metrics metrics;
    double sq_sum = 0.0;
    long hits = 0;
    for (std::size_t si = 0; si < test.sequences.size(); ++si) {
        const EventSequence& s = test.sequences[si];
        if (s.events.size() < 2) {
            ++metrics.skipped_sequences;
            continue;
        }
        for (int i = 1; i < static_cast<int>(s.events.size()); ++i) {
            const Prediction pred = predict(s, i);
            const events::Event& truth = s.events[static_cast<std::size_t>(i)];
            const double err = pred.t_hat - truth.t;
            sq_sum += err * err;
            hits += pred.node_hat == truth.node ? 1 : 0;
            metrics.truncation_mass_max = std::max(metrics.truncation_mass_max, pred.truncated_mass);
            ++metrics.n_events;
            if (rows != nullptr) {
                PredictionRow row;
                row.seq_id = s.id.empty() ? std::to_string(si) : s.id;
                row.index = i;
                row.t_true = truth.t;
                row.t_hat = pred.t_hat;
                row.k_true = truth.node;
                row.k_hat = pred.node_hat;
                rows->push_back(std::move(row));
            }
        }
    }
    if (metrics.n_events > 0) {
        metrics.rmse = std::sqrt(sq_sum / static_cast<double>(metrics.n_events));
        metrics.accuracy = static_cast<double>(hits) / static_cast<double>(metrics.n_events);
    }
    return metrics;
}

}  // namespace

Metrics evaluate(const Model& m, const events::Dataset& test, const PredictOptions& opts,
                 std::vector<PredictionRow>* rows) {
    // one forward pass per sequence; regime i-1 is the model state after the
    // prefix of i events
    const EventSequence* current = nullptr;
    std::vector<RegimeIntensity> regimes;
    Predictor predictor = [&](const EventSequence& s, int known) {
        if (current != &s) {
            regimes = model::compute_regimes(m, s);
            current = &s;
        }
        const RegimeIntensity& reg = regimes[static_cast<std::size_t>(known - 1)];
        return predict_from_regime(reg, prefix_mean_gap(s, known, reg), opts);
    };
    return run_evaluation(predictor, test, rows);
}

Metrics evaluate_with(const Predictor& predict, const events::Dataset& test,
                      std::vector<PredictionRow>* rows) {
    return run_evaluation(predict, test, rows);
}

void write_metrics_json(const std::filesystem::path& path, const Metrics& metrics) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write metrics: " + path.string());
    char buf[256];
    std::snprintf(buf, sizeof(buf),
                  "{\"rmse\": %.12g, \"accuracy\": %.12g, \"n_events\": %ld, "
                  "\"truncation_mass_max\": %.12g}\n",
                  metrics.rmse, metrics.accuracy, metrics.n_events, metrics.truncation_mass_max);
    out << buf;
}

void write_predictions_csv(const std::filesystem::path& path,
                           const std::vector<PredictionRow>& rows) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write predictions: " + path.string());
    out << "seq_id,index,t_true,t_hat,k_true,k_hat\n";
    char buf[256];
    for (const PredictionRow& r : rows) {
        std::snprintf(buf, sizeof(buf), "%s,%d,%.12g,%.12g,%d,%d\n", r.seq_id.c_str(), r.index,
                      r.t_true, r.t_hat, r.k_true, r.k_hat);
        out << buf;
    }
}

}  // namespace grpp::infer
