#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "grpp/autodiff.hpp"
#include "grpp/events.hpp"

namespace grpp::model {

using ad::Vec;

struct Config {
    int node_count = 0;   // K
    int embed_dim = 128;  // m
    int hidden_dim = 128; // d
    std::uint64_t seed = 1;
    bool graph_propagation = true;   // false: encoder output feeds the intensity directly
    bool history_attention = true;   // false: only the most recent event excites
    double tau = 0.0;                // neighborhood support threshold on the connection matrix
};

// Trained state: learnable parameters plus the connection matrix estimated
// from the training split (it defines the aggregation neighborhoods and the
// regularization target, so it travels with the checkpoint).
struct Model {
    Config config;
    ad::ParamVector params;
    events::ConnectionMatrix connection;
    std::vector<std::vector<int>> nbrs;
    std::uint64_t split_seed = 0;
};

// Registers every learnable tensor and draws the initial values: weights
// uniform on [-1/sqrt(d), 1/sqrt(d)], initial node embeddings uniform on
// [-0.1, 0.1]. Deterministic per config.seed.
Model init_model(const Config& cfg);

void set_connection(Model& m, events::ConnectionMatrix cm);

// Runtime state types mirroring the forward pass; handy for tests and for
// callers that step the pass manually.
struct NodeEmbeddings {
    std::vector<Vec> rows;  // K rows of dimension d
    Vec last_update;        // per-node time of the most recent embedding change
};

struct EncoderState {
    Vec hidden;  // the positional encoding emitted for the last event
    Vec cell;
};

NodeEmbeddings initial_embeddings(const Model& m);
EncoderState initial_encoder_state(const Model& m);

// Learned infectivity matrix: A = H Omega H^T over the initial node
// embedding block. Row i = source node i, column j = target node j, matching
// the connection-matrix orientation.
Vec infectivity(const Model& m);

// ---------------------------------------------------------------------------
// evaluation engines
// ---------------------------------------------------------------------------

// Both engines expose the same vocabulary of operations so the forward pass
// below is written once. TapeEngine records for reverse-mode gradients;
// PlainEngine evaluates values only.

struct TapeEngine {
    using Value = ad::Var;
    ad::Tape& tape;

    Value param(std::string_view name) { return tape.param(name); }
    Value param_row(std::string_view name, int row) { return tape.param_row(name, row); }
    Value matvec(std::string_view name, Value x, int rows, int cols) {
        return tape.matvec(tape.param(name), x, rows, cols);
    }
    Value constant(Vec v) { return tape.constant(std::move(v)); }
    Value constant1(double x) { return tape.constant(x); }
    Value add(Value a, Value b) { return tape.add(a, b); }
    Value hadamard(Value a, Value b) { return tape.hadamard(a, b); }
    Value mul(Value s, Value v) { return tape.mul(s, v); }
    Value scale(Value a, double c) { return tape.scale(a, c); }
    Value concat(Value a, Value b) { return tape.concat(a, b); }
    Value tanh(Value a) { return tape.tanh(a); }
    Value sigmoid(Value a) { return tape.sigmoid(a); }
    Value softplus(Value a) { return tape.softplus(a); }
    Value exp(Value a) { return tape.exp(a); }
    Value log(Value a) { return tape.log(a); }
    Value sum(Value a) { return tape.sum(a); }
    Value div(Value a, Value b) { return tape.div(a, b); }
    Value dot(Value a, Value b) { return tape.dot(a, b); }
    double scalar(Value v) const { return tape.value_scalar(v); }
    Vec read(Value v) const {
        auto s = tape.values(v);
        return Vec(s.begin(), s.end());
    }
};

struct PlainEngine {
    using Value = Vec;
    const ad::ParamVector* params;

    Value param(std::string_view name) const {
        auto b = params->block(name);
        return Vec(b.begin(), b.end());
    }
    Value param_row(std::string_view name, int row) const {
        const ad::TensorShape& s = params->shape(name);
        const double* base = params->values.data() + s.offset +
                             static_cast<std::size_t>(row) * s.cols;
        return Vec(base, base + s.cols);
    }
    Value matvec(std::string_view name, const Value& x, int rows, int cols) const {
        const ad::TensorShape& s = params->shape(name);
        const double* w = params->values.data() + s.offset;
        Vec y(static_cast<std::size_t>(rows), 0.0);
        for (int i = 0; i < rows; ++i) {
            const double* row = w + static_cast<std::size_t>(i) * cols;
            double acc = 0.0;
            for (int j = 0; j < cols; ++j) acc += row[j] * x[static_cast<std::size_t>(j)];
            y[static_cast<std::size_t>(i)] = acc;
        }
        return y;
    }
    Value constant(Vec v) const { return v; }
    Value constant1(double x) const { return Vec{x}; }
    Value add(const Value& a, const Value& b) const {
        Vec y(a.size());
        for (std::size_t i = 0; i < a.size(); ++i) y[i] = a[i] + b[i];
        return y;
    }
    Value hadamard(const Value& a, const Value& b) const {
        Vec y(a.size());
        for (std::size_t i = 0; i < a.size(); ++i) y[i] = a[i] * b[i];
        return y;
    }
    Value mul(const Value& s, const Value& v) const {
        Vec y(v.size());
        for (std::size_t i = 0; i < v.size(); ++i) y[i] = s[0] * v[i];
        return y;
    }
    Value scale(const Value& a, double c) const {
        Vec y(a.size());
        for (std::size_t i = 0; i < a.size(); ++i) y[i] = c * a[i];
        return y;
    }
    Value concat(const Value& a, const Value& b) const {
        Vec y;
        y.reserve(a.size() + b.size());
        y.insert(y.end(), a.begin(), a.end());
        y.insert(y.end(), b.begin(), b.end());
        return y;
    }
    Value tanh(const Value& a) const { return map(a, [](double x) { return std::tanh(x); }); }
    Value sigmoid(const Value& a) const { return map(a, ad::sigmoid); }
    Value softplus(const Value& a) const { return map(a, ad::softplus); }
    Value exp(const Value& a) const { return map(a, [](double x) { return std::exp(x); }); }
    Value log(const Value& a) const { return map(a, [](double x) { return std::log(x); }); }
    Value sum(const Value& a) const {
        double acc = 0.0;
        for (double x : a) acc += x;
        return Vec{acc};
    }
    Value div(const Value& a, const Value& b) const {
        Vec y(a.size());
        for (std::size_t i = 0; i < a.size(); ++i) y[i] = a[i] / b[i];
        return y;
    }
    Value dot(const Value& a, const Value& b) const {
        double acc = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
        return Vec{acc};
    }
    double scalar(const Value& v) const { return v[0]; }
    Vec read(const Value& v) const { return v; }

  private:
    template <class F>
    static Vec map(const Vec& a, F f) {
        Vec y(a.size());
        for (std::size_t i = 0; i < a.size(); ++i) y[i] = f(a[i]);
        return y;
    }
};

// ---------------------------------------------------------------------------
// the forward pass
// ---------------------------------------------------------------------------

// Per-sequence state machine. Events are fed in order; after event r the
// regime r intensity (valid on [t_r, t_{r+1})) can be built. All model math
// lives here, shared between the gradient and value engines.
template <class E>
class Forward {
  public:
    using V = typename E::Value;

    Forward(E& eng, const Model& m) : eng_(eng), m_(m) {
        const Config& c = m.config;
        enc_h_ = eng_.constant(Vec(static_cast<std::size_t>(c.hidden_dim), 0.0));
        enc_c_ = enc_h_;
        if (c.graph_propagation) {
            h_rows_.reserve(static_cast<std::size_t>(c.node_count));
            for (int k = 0; k < c.node_count; ++k) {
                h_rows_.push_back(eng_.param_row("node_init", k));
            }
        }
    }

    // One event: encoder step, then the node-embedding update (source = the
    // previous event's node; the local-propagation term is dropped for the
    // first event, which has no source).
    void process_event(double t, int node, std::span<const double> dropout_mask = {}) {
        const Config& c = m_.config;
        const int d = c.hidden_dim;
        const int m = c.embed_dim;

        V x = eng_.param_row("embed", node);
        V input = eng_.concat(enc_h_, x);
        if (!dropout_mask.empty()) {
            input = eng_.hadamard(input, eng_.constant(Vec(dropout_mask.begin(), dropout_mask.end())));
        }
        V gi = eng_.sigmoid(eng_.add(eng_.matvec("lstm_wi", input, d, d + m), eng_.param("lstm_bi")));
        V gf = eng_.sigmoid(eng_.add(eng_.matvec("lstm_wf", input, d, d + m), eng_.param("lstm_bf")));
        V go = eng_.sigmoid(eng_.add(eng_.matvec("lstm_wo", input, d, d + m), eng_.param("lstm_bo")));
        V gg = eng_.tanh(eng_.add(eng_.matvec("lstm_wg", input, d, d + m), eng_.param("lstm_bg")));
        enc_c_ = eng_.add(eng_.hadamard(gf, enc_c_), eng_.hadamard(gi, gg));
        enc_h_ = eng_.hadamard(go, eng_.tanh(enc_c_));

        V snapshot;
        if (!c.graph_propagation) {
            snapshot = enc_h_;
        } else {
            V pre = eng_.matvec("prop_input", enc_h_, d, d);
            if (prev_node_ >= 0) {
                V agg = aggregate_neighbors(prev_node_);
                pre = eng_.add(pre, eng_.matvec("prop_local", agg, d, d));
            }
            pre = eng_.add(pre, eng_.matvec("prop_self", h_rows_[static_cast<std::size_t>(node)], d, d));
            snapshot = eng_.tanh(pre);
            h_rows_[static_cast<std::size_t>(node)] = snapshot;
        }
        snaps_.push_back(Snap{t, node, snapshot});
        prev_node_ = node;
    }

    int event_count() const { return static_cast<int>(snaps_.size()); }
    double event_time(int r) const { return snaps_[static_cast<std::size_t>(r)].t; }
    int event_node(int r) const { return snaps_[static_cast<std::size_t>(r)].node; }
    const V& embedding_row(int node) const { return h_rows_[static_cast<std::size_t>(node)]; }
    const V& snapshot(int r) const { return snaps_[static_cast<std::size_t>(r)].h; }
    const V& encoder_hidden() const { return enc_h_; }

    // Attention-weighted neighborhood aggregate of the current embeddings:
    // s_u = sum_z q_z h_z with q = softmax of the bilinear scores
    // h_u^T W h_z over N_u.
    V aggregate_neighbors(int u) {
        const int d = m_.config.hidden_dim;
        const std::vector<int>& nbrs = m_.nbrs[static_cast<std::size_t>(u)];
        const V& hu = h_rows_[static_cast<std::size_t>(u)];
        std::vector<V> scores;
        scores.reserve(nbrs.size());
        double max_score = -1e300;
        for (int z : nbrs) {
            V s = eng_.dot(hu, eng_.matvec("attn_score", h_rows_[static_cast<std::size_t>(z)], d, d));
            max_score = std::max(max_score, eng_.scalar(s));
            scores.push_back(s);
        }
        std::vector<V> weights = softmax(scores, max_score);
        V acc = eng_.mul(weights[0], h_rows_[static_cast<std::size_t>(nbrs[0])]);
        for (std::size_t i = 1; i < nbrs.size(); ++i) {
            acc = eng_.add(acc, eng_.mul(weights[i], h_rows_[static_cast<std::size_t>(nbrs[i])]));
        }
        return acc;
    }

    struct Term {
        double t;
        V alpha;  // excitation, may be negative
        V delta;  // decay rates in (0,1)^d
    };
    struct Regime {
        int index = 0;
        double start = 0.0;
        V mu;
        std::vector<Term> terms;
    };

    // Regime r covers [t_r, t_{r+1}). The anchor is the snapshot of event r;
    // excitation terms come from events 0..r-1 (only r-1 when history
    // attention is disabled).
    Regime make_regime(int r) {
        const Config& c = m_.config;
        const int d = c.hidden_dim;
        const V& anchor = snaps_[static_cast<std::size_t>(r)].h;

        Regime reg;
        reg.index = r;
        reg.start = snaps_[static_cast<std::size_t>(r)].t;
        reg.mu = eng_.sigmoid(eng_.add(eng_.matvec("base_w", anchor, d, d), eng_.param("base_b")));

        std::vector<int> history;
        if (c.history_attention) {
            for (int j = 0; j < r; ++j) history.push_back(j);
        } else if (r >= 1) {
            history.push_back(r - 1);
        }
        if (history.empty()) return reg;

        std::vector<V> betas;
        if (!c.history_attention) {
            betas.push_back(eng_.constant1(1.0));
        } else {
            std::vector<V> scores;
            scores.reserve(history.size());
            double max_score = -1e300;
            for (int j : history) {
                const V& hj = snaps_[static_cast<std::size_t>(j)].h;
                V pre = eng_.tanh(eng_.matvec("hist_w", eng_.concat(anchor, hj), d, 2 * d));
                V w = eng_.matvec("hist_v", pre, 1, d);
                max_score = std::max(max_score, eng_.scalar(w));
                scores.push_back(w);
            }
            betas = softmax(scores, max_score);
        }

        for (std::size_t i = 0; i < history.size(); ++i) {
            const Snap& sj = snaps_[static_cast<std::size_t>(history[i])];
            Term term;
            term.t = sj.t;
            term.alpha = eng_.mul(betas[i], sj.h);
            term.delta = eng_.sigmoid(
                eng_.add(eng_.matvec("decay_w", eng_.concat(sj.h, anchor), d, 2 * d),
                         eng_.param("decay_b")));
            reg.terms.push_back(std::move(term));
        }
        return reg;
    }

    // lambda^h(t) = sum_j alpha_j (x) exp(-delta_j (t - t_j)) + mu, t >= t_r
    V latent_intensity(const Regime& reg, double t) {
        if (t < reg.start) {
            throw std::invalid_argument("latent_intensity: t precedes the regime start");
        }
        V acc = reg.mu;
        for (const Term& term : reg.terms) {
            V decay = eng_.exp(eng_.scale(term.delta, -(t - term.t)));
            acc = eng_.add(acc, eng_.hadamard(term.alpha, decay));
        }
        return acc;
    }

    // lambda(t) in event space: softplus of a linear head, strictly positive.
    V event_intensities(const V& latent) {
        const Config& c = m_.config;
        return eng_.softplus(eng_.add(
            eng_.matvec("head_w", latent, c.node_count, c.hidden_dim), eng_.param("head_b")));
    }

    V total_intensity(const Regime& reg, double t) {
        return eng_.sum(event_intensities(latent_intensity(reg, t)));
    }

    V log_intensity(const Regime& reg, double t, int node) {
        V lam = event_intensities(latent_intensity(reg, t));
        Vec onehot(static_cast<std::size_t>(m_.config.node_count), 0.0);
        onehot[static_cast<std::size_t>(node)] = 1.0;
        return eng_.log(eng_.dot(lam, eng_.constant(std::move(onehot))));
    }

  private:
    std::vector<V> softmax(const std::vector<V>& scores, double detached_max) {
        // the shift is a detached constant; softmax is shift-invariant so the
        // gradient is unaffected
        std::vector<V> exps;
        exps.reserve(scores.size());
        for (const V& s : scores) {
            exps.push_back(eng_.exp(eng_.add(s, eng_.constant1(-detached_max))));
        }
        V total = exps[0];
        for (std::size_t i = 1; i < exps.size(); ++i) total = eng_.add(total, exps[i]);
        std::vector<V> out;
        out.reserve(exps.size());
        for (const V& e : exps) out.push_back(eng_.div(e, total));
        return out;
    }

    struct Snap {
        double t;
        int node;
        V h;
    };

    E& eng_;
    const Model& m_;
    V enc_h_;
    V enc_c_;
    std::vector<V> h_rows_;
    std::vector<Snap> snaps_;
    int prev_node_ = -1;
};

// ---------------------------------------------------------------------------
// plain per-regime intensity for prediction
// ---------------------------------------------------------------------------

// Frozen numeric view of one regime; evaluation needs no engine. Head spans
// alias the owning Model, which must outlive this object.
struct RegimeIntensity {
    double start = 0.0;
    int node_count = 0;
    int hidden_dim = 0;
    Vec mu;
    struct Term {
        double t;
        Vec alpha;
        Vec delta;
    };
    std::vector<Term> terms;
    std::span<const double> head_w;
    std::span<const double> head_b;

    void event_intensities(double t, Vec& out) const;
    double total_intensity(double t) const;
    // total intensity once every excitation term has decayed away
    double asymptotic_total() const;
};

// One RegimeIntensity per event, computed with the value engine.
std::vector<RegimeIntensity> compute_regimes(const Model& m, const events::EventSequence& s);

// ---------------------------------------------------------------------------
// checkpoints
// ---------------------------------------------------------------------------

inline constexpr int kCheckpointFormatVersion = 1;

void save_checkpoint(const std::filesystem::path& path, const Model& m);
Model load_checkpoint(const std::filesystem::path& path);

}  // namespace grpp::model
