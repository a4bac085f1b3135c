#include "grpp/model.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

#include "grpp/rng.hpp"

namespace grpp::model {

using nlohmann::json;

namespace {

struct ShapeSpec {
    const char* name;
    int rows;
    int cols;
};

std::vector<ShapeSpec> shape_registry(const Config& c) {
    const int k = c.node_count;
    const int m = c.embed_dim;
    const int d = c.hidden_dim;
    return {
        {"embed", k, m},
        {"lstm_wi", d, d + m}, {"lstm_wf", d, d + m}, {"lstm_wo", d, d + m}, {"lstm_wg", d, d + m},
        {"lstm_bi", 1, d}, {"lstm_bf", 1, d}, {"lstm_bo", 1, d}, {"lstm_bg", 1, d},
        {"prop_local", d, d},   // multiplies the aggregated source neighborhood
        {"prop_self", d, d},    // multiplies the node's previous embedding
        {"prop_input", d, d},   // multiplies the positional encoding
        {"attn_score", d, d},
        {"base_w", d, d}, {"base_b", 1, d},
        {"hist_v", 1, d}, {"hist_w", d, 2 * d},
        {"decay_w", d, 2 * d}, {"decay_b", 1, d},
        {"head_w", k, d}, {"head_b", 1, k},
        {"graph_omega", d, d},
        {"node_init", k, d},
    };
}

}  // namespace

Model init_model(const Config& cfg) {
    if (cfg.node_count < 1 || cfg.embed_dim < 1 || cfg.hidden_dim < 1) {
        throw std::invalid_argument("init_model: dimensions must be >= 1");
    }
    Model m;
    m.config = cfg;
    for (const ShapeSpec& s : shape_registry(cfg)) {
        m.params.add(s.name, s.rows, s.cols);
    }
    rng::Engine gen(rng::mix(cfg.seed, 0x1217ULL));
    const double bound = 1.0 / std::sqrt(static_cast<double>(cfg.hidden_dim));
    for (const ad::TensorShape& s : m.params.shapes()) {
        const double lo = s.name == "node_init" ? -0.1 : -bound;
        const double hi = -lo;
        for (double& x : m.params.block(s.name)) x = gen.uniform(lo, hi);
    }
    m.connection.node_count = cfg.node_count;
    m.connection.e.assign(static_cast<std::size_t>(cfg.node_count) * cfg.node_count, 0.0);
    m.nbrs = events::neighborhoods(m.connection, cfg.tau);
    return m;
}

void set_connection(Model& m, events::ConnectionMatrix cm) {
    if (cm.node_count != m.config.node_count) {
        throw std::invalid_argument("set_connection: node count mismatch");
    }
    m.connection = std::move(cm);
    m.nbrs = events::neighborhoods(m.connection, m.config.tau);
}

NodeEmbeddings initial_embeddings(const Model& m) {
    NodeEmbeddings ne;
    const ad::TensorShape& s = m.params.shape("node_init");
    for (int k = 0; k < s.rows; ++k) {
        const double* base = m.params.values.data() + s.offset + static_cast<std::size_t>(k) * s.cols;
        ne.rows.emplace_back(base, base + s.cols);
    }
    ne.last_update.assign(static_cast<std::size_t>(s.rows), 0.0);
    return ne;
}

EncoderState initial_encoder_state(const Model& m) {
    EncoderState es;
    es.hidden.assign(static_cast<std::size_t>(m.config.hidden_dim), 0.0);
    es.cell = es.hidden;
    return es;
}

Vec infectivity(const Model& m) {
    const int k = m.config.node_count;
    const int d = m.config.hidden_dim;
    const ad::TensorShape& sh = m.params.shape("node_init");
    const ad::TensorShape& so = m.params.shape("graph_omega");
    const double* h = m.params.values.data() + sh.offset;
    const double* omega = m.params.values.data() + so.offset;

    // rows of Omega H^T, i.e. y_c = Omega h_c
    Vec y(static_cast<std::size_t>(k) * d, 0.0);
    for (int c = 0; c < k; ++c) {
        const double* hc = h + static_cast<std::size_t>(c) * d;
        double* yc = y.data() + static_cast<std::size_t>(c) * d;
        for (int i = 0; i < d; ++i) {
            const double* orow = omega + static_cast<std::size_t>(i) * d;
            double acc = 0.0;
            for (int j = 0; j < d; ++j) acc += orow[j] * hc[j];
            yc[i] = acc;
        }
    }
    Vec a(static_cast<std::size_t>(k) * k, 0.0);
    for (int r = 0; r < k; ++r) {
        const double* hr = h + static_cast<std::size_t>(r) * d;
        for (int c = 0; c < k; ++c) {
            const double* yc = y.data() + static_cast<std::size_t>(c) * d;
            double acc = 0.0;
            for (int i = 0; i < d; ++i) acc += hr[i] * yc[i];
            a[static_cast<std::size_t>(r) * k + c] = acc;
        }
    }
    return a;
}

void RegimeIntensity::event_intensities(double t, Vec& out) const {
    const int d = hidden_dim;
    Vec latent = mu;
    for (const Term& term : terms) {
        const double dt = t - term.t;
        for (int i = 0; i < d; ++i) {
            latent[static_cast<std::size_t>(i)] +=
                term.alpha[static_cast<std::size_t>(i)] *
                std::exp(-term.delta[static_cast<std::size_t>(i)] * dt);
        }
    }
    out.resize(static_cast<std::size_t>(node_count));
    for (int r = 0; r < node_count; ++r) {
        const double* wrow = head_w.data() + static_cast<std::size_t>(r) * d;
        double acc = head_b[static_cast<std::size_t>(r)];
        for (int i = 0; i < d; ++i) acc += wrow[i] * latent[static_cast<std::size_t>(i)];
        out[static_cast<std::size_t>(r)] = ad::softplus(acc);
    }
}

double RegimeIntensity::total_intensity(double t) const {
    Vec lam;
    event_intensities(t, lam);
    double acc = 0.0;
    for (double x : lam) acc += x;
    return acc;
}

double RegimeIntensity::asymptotic_total() const {
    const int d = hidden_dim;
    double acc = 0.0;
    for (int r = 0; r < node_count; ++r) {
        const double* wrow = head_w.data() + static_cast<std::size_t>(r) * d;
        double pre = head_b[static_cast<std::size_t>(r)];
        for (int i = 0; i < d; ++i) pre += wrow[i] * mu[static_cast<std::size_t>(i)];
        acc += ad::softplus(pre);
    }
    return acc;
}

std::vector<RegimeIntensity> compute_regimes(const Model& m, const events::EventSequence& s) {
    PlainEngine eng{&m.params};
    Forward<PlainEngine> fwd(eng, m);
    for (const events::Event& ev : s.events) fwd.process_event(ev.t, ev.node);

    std::vector<RegimeIntensity> out;
    out.reserve(s.events.size());
    for (int r = 0; r < fwd.event_count(); ++r) {
        auto reg = fwd.make_regime(r);
        RegimeIntensity ri;
        ri.start = reg.start;
        ri.node_count = m.config.node_count;
        ri.hidden_dim = m.config.hidden_dim;
        ri.mu = reg.mu;
        for (auto& term : reg.terms) {
            ri.terms.push_back(RegimeIntensity::Term{term.t, term.alpha, term.delta});
        }
        ri.head_w = m.params.block("head_w");
        ri.head_b = m.params.block("head_b");
        out.push_back(std::move(ri));
    }
    return out;
}

void save_checkpoint(const std::filesystem::path& path, const Model& m) {
    json j;
    j["format_version"] = kCheckpointFormatVersion;
    j["K"] = m.config.node_count;
    j["m"] = m.config.embed_dim;
    j["d"] = m.config.hidden_dim;
    j["seed"] = m.config.seed;
    j["graph_propagation"] = m.config.graph_propagation;
    j["history_attention"] = m.config.history_attention;
    j["tau"] = m.config.tau;
    j["split_seed"] = m.split_seed;
    json shapes = json::array();
    for (const ad::TensorShape& s : m.params.shapes()) {
        shapes.push_back(json{{"name", s.name}, {"rows", s.rows}, {"cols", s.cols}});
    }
    j["shapes"] = std::move(shapes);
    j["values"] = m.params.values;
    j["connection"] = m.connection.e;

    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write checkpoint: " + path.string());
    out << j.dump() << '\n';
}

Model load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open checkpoint: " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw std::runtime_error("checkpoint parse error: " + std::string(e.what()));
    }
    const int version = j.at("format_version").get<int>();
    if (version != kCheckpointFormatVersion) {
        throw std::runtime_error("checkpoint format version mismatch: file has " +
                                 std::to_string(version) + ", expected " +
                                 std::to_string(kCheckpointFormatVersion));
    }
    Config cfg;
    cfg.node_count = j.at("K").get<int>();
    cfg.embed_dim = j.at("m").get<int>();
    cfg.hidden_dim = j.at("d").get<int>();
    cfg.seed = j.at("seed").get<std::uint64_t>();
    cfg.graph_propagation = j.at("graph_propagation").get<bool>();
    cfg.history_attention = j.at("history_attention").get<bool>();
    cfg.tau = j.at("tau").get<double>();

    Model m = init_model(cfg);
    m.split_seed = j.at("split_seed").get<std::uint64_t>();

    const auto& shapes = j.at("shapes");
    const auto& registered = m.params.shapes();
    if (shapes.size() != registered.size()) {
        throw std::runtime_error("checkpoint shape registry mismatch");
    }
    for (std::size_t i = 0; i < registered.size(); ++i) {
        if (shapes[i].at("name").get<std::string>() != registered[i].name ||
            shapes[i].at("rows").get<int>() != registered[i].rows ||
            shapes[i].at("cols").get<int>() != registered[i].cols) {
            throw std::runtime_error("checkpoint shape mismatch for '" + registered[i].name + "'");
        }
    }
    Vec values = j.at("values").get<Vec>();
    if (values.size() != m.params.size()) {
        throw std::runtime_error("checkpoint value count mismatch");
    }
    m.params.values = std::move(values);

    events::ConnectionMatrix cm;
    cm.node_count = cfg.node_count;
    cm.e = j.at("connection").get<Vec>();
    if (cm.e.size() != static_cast<std::size_t>(cfg.node_count) * cfg.node_count) {
        throw std::runtime_error("checkpoint connection matrix size mismatch");
    }
    set_connection(m, std::move(cm));
    return m;
}

}  // namespace grpp::model
