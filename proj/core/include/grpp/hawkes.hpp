#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "grpp/events.hpp"

namespace grpp::hawkes {

// Classical multivariate Hawkes process with exponential kernel:
//   lambda_k(t) = mu_k + sum_{t_j < t} a[k][v_j] * exp(-omega * (t - t_j))
// a is row-major K x K; a[k][j] is the influence of an event at node j on
// the intensity of node k.
struct MHPParams {
    int node_count = 0;
    std::vector<double> mu;  // K
    std::vector<double> a;   // K x K
    double omega = 1.0;

    double alpha(int target, int source) const {
        return a[static_cast<std::size_t>(target) * node_count + source];
    }
    double& alpha(int target, int source) {
        return a[static_cast<std::size_t>(target) * node_count + source];
    }

    // Conservative stability proxy: max over rows of sum_j a[k][j] / omega.
    double max_row_branching() const;
    bool stable() const { return max_row_branching() < 1.0; }
};

// lambda_k(t) over the prefix of `history` with timestamps strictly before t.
// Requires t >= the last history timestamp.
double intensity(const MHPParams& p, const events::EventSequence& history, double t, int node);

// Exact simulation on [0, horizon] by thinning with a piecewise-constant
// upper bound refreshed after every candidate. Deterministic per seed;
// rejects unstable parameters.
events::EventSequence simulate_thinning(const MHPParams& p, double horizon, std::uint64_t seed);

// One sequence per index with generator state seed + index, so sequences are
// independent of evaluation order.
events::Dataset simulate_dataset(const MHPParams& p, int sequences, double horizon,
                                 std::uint64_t seed);

// Synthetic ground truth: a = u v^T with nonnegative banded factors (K=10:
// 10x1 with every entry sampled; K=100: 100x9, column i supported on rows
// 10(i-1)+1 .. 10(i+1), 1-based, clipped), nonzero entries uniform on
// [0, 0.1]; mu uniform on [0, 0.001]. If max_row_branching at `omega` is >= 1
// the matrix is shrunk to 0.9 and the factor recorded in `rescale`.
struct SynthParams {
    std::vector<double> a;   // K x K
    std::vector<double> mu;  // K
    std::vector<double> u;   // K x factor_cols
    std::vector<double> v;   // K x factor_cols
    int factor_cols = 0;
    double rescale = 1.0;
};

SynthParams synth_infectivity(int node_count, std::uint64_t seed, double omega = 1.0);

// Negative log-likelihood with the compensator in closed form:
//   -sum_i log lambda_{v_i}(t_i)
//   + sum_k [ mu_k T + sum_j a[k][v_j] (1 - exp(-omega (T - t_j))) / omega ]
// Signals impossible-event if some event sits at zero intensity.
double nll(const MHPParams& p, const events::EventSequence& s);

// Mean per-sequence NLL over a dataset.
double mean_nll(const MHPParams& p, const events::Dataset& d);

// Initialization used by fit(): empirical per-node Poisson rates, zero
// infectivity.
MHPParams initial_params(const events::Dataset& train, double omega);

// Projected gradient descent on mean_nll with nonnegativity projection on mu
// and a; omega stays fixed. Returns the best-seen iterate. Aborts with a
// diagnostic if the objective increases 10 times in a row.
MHPParams fit(const events::Dataset& train, int iterations, double step, double omega = 1.0);

}  // namespace grpp::hawkes
