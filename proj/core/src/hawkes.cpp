#include "grpp/hawkes.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "grpp/rng.hpp"

namespace grpp::hawkes {

using events::Dataset;
using events::Event;
using events::EventSequence;

double MHPParams::max_row_branching() const {
    double worst = 0.0;
    for (int k = 0; k < node_count; ++k) {
        double row = 0.0;
        for (int j = 0; j < node_count; ++j) row += alpha(k, j);
        worst = std::max(worst, row / omega);
    }
    return worst;
}

double intensity(const MHPParams& p, const EventSequence& history, double t, int node) {
    if (!history.events.empty() && t < history.events.back().t) {
        throw std::invalid_argument("intensity: t precedes the last history event");
    }
    double lam = p.mu[static_cast<std::size_t>(node)];
    for (const Event& ev : history.events) {
        if (ev.t >= t) break;
        lam += p.alpha(node, ev.node) * std::exp(-p.omega * (t - ev.t));
    }
    return lam;
}

EventSequence simulate_thinning(const MHPParams& p, double horizon, std::uint64_t seed) {
    if (!(horizon > 0.0)) throw std::invalid_argument("simulate_thinning: horizon must be > 0");
    if (!p.stable()) {
        throw std::invalid_argument("simulate_thinning: unstable parameters (max row branching " +
                                    std::to_string(p.max_row_branching()) + " >= 1)");
    }
    const int k = p.node_count;
    rng::Engine gen(seed);

    // per-source decayed excitation mass: g[v] = sum_{events j at v} e^{-omega (t - t_j)}
    std::vector<double> g(static_cast<std::size_t>(k), 0.0);
    std::vector<double> colsum(static_cast<std::size_t>(k), 0.0);
    double mu_total = 0.0;
    for (int i = 0; i < k; ++i) mu_total += p.mu[static_cast<std::size_t>(i)];
    for (int j = 0; j < k; ++j) {
        for (int i = 0; i < k; ++i) colsum[static_cast<std::size_t>(j)] += p.alpha(i, j);
    }

    EventSequence s;
    s.horizon = horizon;
    std::vector<double> lam(static_cast<std::size_t>(k), 0.0);
    double t = 0.0;
    while (true) {
        // Intensity immediately after t bounds the future until the next event.
        double bound = mu_total;
        for (int v = 0; v < k; ++v) bound += colsum[static_cast<std::size_t>(v)] * g[static_cast<std::size_t>(v)];
        if (bound <= 0.0) break;

        const double dt = gen.exponential(bound);
        const double tc = t + dt;
        if (tc > horizon) break;
        const double decay = std::exp(-p.omega * (tc - t));
        for (double& gv : g) gv *= decay;
        t = tc;

        double total = mu_total;
        for (int v = 0; v < k; ++v) total += colsum[static_cast<std::size_t>(v)] * g[static_cast<std::size_t>(v)];
        if (gen.uniform01() * bound > total) continue;  // rejected candidate

        // accepted: draw the node proportionally to per-dimension intensity
        double acc = 0.0;
        for (int i = 0; i < k; ++i) {
            double li = p.mu[static_cast<std::size_t>(i)];
            for (int v = 0; v < k; ++v) li += p.alpha(i, v) * g[static_cast<std::size_t>(v)];
            acc += li;
            lam[static_cast<std::size_t>(i)] = acc;
        }
        const double target = gen.uniform01() * acc;
        int node = k - 1;
        for (int i = 0; i < k; ++i) {
            if (target < lam[static_cast<std::size_t>(i)]) {
                node = i;
                break;
            }
        }
        if (!s.events.empty() && !(t > s.events.back().t)) continue;
        s.events.push_back(Event{t, node});
        g[static_cast<std::size_t>(node)] += 1.0;
    }
    return s;
}

Dataset simulate_dataset(const MHPParams& p, int sequences, double horizon, std::uint64_t seed) {
    Dataset d;
    d.node_count = p.node_count;
    d.sequences.reserve(static_cast<std::size_t>(sequences));
    for (int i = 0; i < sequences; ++i) {
        d.sequences.push_back(simulate_thinning(p, horizon, seed + static_cast<std::uint64_t>(i)));
        d.sequences.back().id = std::to_string(i);
    }
    return d;
}

SynthParams synth_infectivity(int node_count, std::uint64_t seed, double omega) {
    if (node_count != 10 && node_count != 100) {
        throw std::invalid_argument("synth_infectivity: node count must be 10 or 100");
    }
    const int k = node_count;
    const int cols = k == 10 ? 1 : 9;
    rng::Engine gen(rng::mix(seed, 0xa11ceULL));

    SynthParams sp;
    sp.factor_cols = cols;
    sp.u.assign(static_cast<std::size_t>(k) * cols, 0.0);
    sp.v.assign(static_cast<std::size_t>(k) * cols, 0.0);

    auto fill_factor = [&](std::vector<double>& f) {
        for (int c = 0; c < cols; ++c) {
            int row_begin = 0;
            int row_end = k;  // exclusive
            if (k == 100) {
                row_begin = 10 * c;                    // 10(i-1)+1, 1-based
                row_end = std::min(10 * (c + 2), k);   // 10(i+1), clipped
            }
            for (int r = row_begin; r < row_end; ++r) {
                f[static_cast<std::size_t>(r) * cols + c] = gen.uniform(0.0, 0.1);
            }
        }
    };
    fill_factor(sp.u);
    fill_factor(sp.v);

    sp.a.assign(static_cast<std::size_t>(k) * k, 0.0);
    for (int i = 0; i < k; ++i) {
        for (int j = 0; j < k; ++j) {
            double acc = 0.0;
            for (int c = 0; c < cols; ++c) {
                acc += sp.u[static_cast<std::size_t>(i) * cols + c] *
                       sp.v[static_cast<std::size_t>(j) * cols + c];
            }
            sp.a[static_cast<std::size_t>(i) * k + j] = acc;
        }
    }

    sp.mu.resize(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) sp.mu[static_cast<std::size_t>(i)] = gen.uniform(0.0, 0.001);

    double worst_row = 0.0;
    for (int i = 0; i < k; ++i) {
        double row = 0.0;
        for (int j = 0; j < k; ++j) row += sp.a[static_cast<std::size_t>(i) * k + j];
        worst_row = std::max(worst_row, row);
    }
    if (worst_row / omega >= 1.0) {
        sp.rescale = 0.9 * omega / worst_row;
        for (double& x : sp.a) x *= sp.rescale;
    }
    return sp;
}

double nll(const MHPParams& p, const EventSequence& s) {
    const int k = p.node_count;
    std::vector<double> g(static_cast<std::size_t>(k), 0.0);
    std::vector<double> colsum(static_cast<std::size_t>(k), 0.0);
    for (int j = 0; j < k; ++j) {
        for (int i = 0; i < k; ++i) colsum[static_cast<std::size_t>(j)] += p.alpha(i, j);
    }

    double event_term = 0.0;
    double prev = 0.0;
    for (const Event& ev : s.events) {
        const double decay = std::exp(-p.omega * (ev.t - prev));
        for (double& gv : g) gv *= decay;
        prev = ev.t;
        double lam = p.mu[static_cast<std::size_t>(ev.node)];
        for (int v = 0; v < k; ++v) lam += p.alpha(ev.node, v) * g[static_cast<std::size_t>(v)];
        if (lam <= 0.0) {
            throw std::domain_error("nll: impossible event (zero intensity) at t=" +
                                    std::to_string(ev.t) + " node " + std::to_string(ev.node));
        }
        event_term += std::log(lam);
        g[static_cast<std::size_t>(ev.node)] += 1.0;
    }

    double compensator = 0.0;
    for (int i = 0; i < k; ++i) compensator += p.mu[static_cast<std::size_t>(i)] * s.horizon;
    for (const Event& ev : s.events) {
        compensator += colsum[static_cast<std::size_t>(ev.node)] *
                       (1.0 - std::exp(-p.omega * (s.horizon - ev.t))) / p.omega;
    }
    return -event_term + compensator;
}

double mean_nll(const MHPParams& p, const Dataset& d) {
    if (d.sequences.empty()) throw std::invalid_argument("mean_nll: empty dataset");
    double total = 0.0;
    for (const EventSequence& s : d.sequences) total += nll(p, s);
    return total / static_cast<double>(d.sequences.size());
}

MHPParams initial_params(const Dataset& train, double omega) {
    if (train.sequences.empty()) throw std::invalid_argument("fit: empty dataset");
    const int k = train.node_count;
    MHPParams p;
    p.node_count = k;
    p.omega = omega;
    p.mu.assign(static_cast<std::size_t>(k), 0.0);
    p.a.assign(static_cast<std::size_t>(k) * k, 0.0);
    double total_time = 0.0;
    for (const EventSequence& s : train.sequences) {
        total_time += s.horizon;
        for (const Event& ev : s.events) p.mu[static_cast<std::size_t>(ev.node)] += 1.0;
    }
    for (double& m : p.mu) m = std::max(m / total_time, 1e-8);
    return p;
}

namespace {

double colsum_times(const MHPParams& p, int source) {
    double acc = 0.0;
    for (int i = 0; i < p.node_count; ++i) acc += p.alpha(i, source);
    return acc;
}

// mean NLL and its gradient w.r.t. (mu, a); layout [mu | a row-major]
double nll_with_gradient(const MHPParams& p, const Dataset& d, std::vector<double>& grad) {
    const int k = p.node_count;
    grad.assign(static_cast<std::size_t>(k) + static_cast<std::size_t>(k) * k, 0.0);
    double total = 0.0;
    std::vector<double> g(static_cast<std::size_t>(k));
    for (const EventSequence& s : d.sequences) {
        std::fill(g.begin(), g.end(), 0.0);
        double prev = 0.0;
        for (const Event& ev : s.events) {
            const double decay = std::exp(-p.omega * (ev.t - prev));
            for (double& gv : g) gv *= decay;
            prev = ev.t;
            double lam = p.mu[static_cast<std::size_t>(ev.node)];
            for (int v = 0; v < k; ++v) lam += p.alpha(ev.node, v) * g[static_cast<std::size_t>(v)];
            if (lam <= 0.0) {
                throw std::domain_error("fit: zero intensity at an event");
            }
            total -= std::log(lam);
            grad[static_cast<std::size_t>(ev.node)] -= 1.0 / lam;
            double* ga = grad.data() + k + static_cast<std::size_t>(ev.node) * k;
            for (int v = 0; v < k; ++v) ga[v] -= g[static_cast<std::size_t>(v)] / lam;
            g[static_cast<std::size_t>(ev.node)] += 1.0;
        }
        for (int i = 0; i < k; ++i) {
            total += p.mu[static_cast<std::size_t>(i)] * s.horizon;
            grad[static_cast<std::size_t>(i)] += s.horizon;
        }
        for (const Event& ev : s.events) {
            const double w = (1.0 - std::exp(-p.omega * (s.horizon - ev.t))) / p.omega;
            total += colsum_times(p, ev.node) * w;
            for (int i = 0; i < k; ++i) {
                grad[static_cast<std::size_t>(k) + static_cast<std::size_t>(i) * k + ev.node] += w;
            }
        }
    }
    const double scale = 1.0 / static_cast<double>(d.sequences.size());
    for (double& x : grad) x *= scale;
    return total * scale;
}

}  // namespace

MHPParams fit(const Dataset& train, int iterations, double step, double omega) {
    MHPParams p = initial_params(train, omega);
    if (iterations == 0) return p;

    const int k = p.node_count;
    std::vector<double> grad;
    MHPParams best = p;
    double best_nll = mean_nll(p, train);
    double prev_nll = best_nll;
    int rising = 0;
    for (int it = 0; it < iterations; ++it) {
        const double cur = nll_with_gradient(p, train, grad);
        if (!std::isfinite(cur)) {
            throw std::runtime_error("fit: diverging (non-finite objective at iteration " +
                                     std::to_string(it) + "); reduce the step");
        }
        if (cur > prev_nll) {
            if (++rising >= 10) {
                throw std::runtime_error(
                    "fit: diverging (objective rose 10 consecutive steps; iteration " +
                    std::to_string(it) + ", nll " + std::to_string(cur) + "); reduce the step");
            }
        } else {
            rising = 0;
        }
        prev_nll = cur;
        if (cur < best_nll) {
            best_nll = cur;
            best = p;
        }
        for (int i = 0; i < k; ++i) {
            p.mu[static_cast<std::size_t>(i)] =
                std::max(p.mu[static_cast<std::size_t>(i)] - step * grad[static_cast<std::size_t>(i)], 1e-10);
        }
        for (std::size_t i = 0; i < p.a.size(); ++i) {
            p.a[i] = std::max(p.a[i] - step * grad[static_cast<std::size_t>(k) + i], 0.0);
        }
    }
    const double final_nll = mean_nll(p, train);
    if (final_nll < best_nll) {
        best = p;
    }
    return best;
}

}  // namespace grpp::hawkes
