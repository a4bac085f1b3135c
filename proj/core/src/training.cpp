#include "grpp/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <future>
#include <numeric>
#include <sstream>

namespace grpp::training {

using events::Dataset;
using events::EventSequence;
using model::Model;

double sequence_nll(const Model& m, const EventSequence& s, const Integration& integ) {
    model::PlainEngine eng{&m.params};
    return sequence_nll_value(eng, m, s, integ)[0];
}

double dataset_mean_nll(const Model& m, const Dataset& d, const Integration& integ) {
    double total = 0.0;
    std::size_t used = 0;
    for (const EventSequence& s : d.sequences) {
        if (s.events.size() < 2) continue;
        total += sequence_nll(m, s, integ);
        ++used;
    }
    if (used == 0) throw std::invalid_argument("dataset_mean_nll: no sequence has >= 2 events");
    return total / static_cast<double>(used);
}

namespace {
constexpr double kSmoothing = 1e-8;

double kl_of_rows(std::span<const double> a, std::span<const double> e) {
    // a already softplus-shifted + smoothed, e smoothed; normalize and apply KL
    double sa = 0.0;
    double se = 0.0;
    for (double x : a) sa += x;
    for (double x : e) se += x;
    double kl = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double eh = e[i] / se;
        const double ah = a[i] / sa;
        kl += eh * (std::log(eh) - std::log(ah));
    }
    return kl;
}
}  // namespace

double graph_reg(std::span<const double> a, std::span<const double> e, int node_count,
                 bool rowwise) {
    const std::size_t n = static_cast<std::size_t>(node_count) * node_count;
    if (a.size() != n || e.size() != n) {
        throw std::invalid_argument("graph_reg: expected two K x K matrices");
    }
    Vec at(n);
    Vec et(n);
    for (std::size_t i = 0; i < n; ++i) {
        at[i] = ad::softplus(a[i]) + kSmoothing;
        et[i] = e[i] + kSmoothing;
    }
    if (!rowwise) {
        return kl_of_rows(at, et);
    }
    double kl = 0.0;
    for (int r = 0; r < node_count; ++r) {
        const std::size_t off = static_cast<std::size_t>(r) * node_count;
        kl += kl_of_rows(std::span<const double>(at).subspan(off, node_count),
                         std::span<const double>(et).subspan(off, node_count));
    }
    return kl;
}

ad::Var graph_reg_program(ad::Tape& tape, const Model& m,
                          const events::ConnectionMatrix& connection, bool rowwise) {
    const int k = m.config.node_count;
    const int d = m.config.hidden_dim;
    if (connection.node_count != k) {
        throw std::invalid_argument("graph_reg_program: connection matrix size mismatch");
    }

    // per-column products y_c = Omega h_c, then entries a_rc = h_r . y_c
    std::vector<ad::Var> h(static_cast<std::size_t>(k));
    std::vector<ad::Var> y(static_cast<std::size_t>(k));
    ad::Var omega = tape.param("graph_omega");
    for (int c = 0; c < k; ++c) {
        h[static_cast<std::size_t>(c)] = tape.param_row("node_init", c);
        y[static_cast<std::size_t>(c)] = tape.matvec(omega, h[static_cast<std::size_t>(c)], d, d);
    }

    auto row_kl = [&](int r_begin, int r_end, std::span<const double> e_full) -> ad::Var {
        // builds the softplus-shifted entries for rows [r_begin, r_end) and the
        // KL against the matching slice of the connection matrix
        ad::Var entries;
        bool first = true;
        for (int r = r_begin; r < r_end; ++r) {
            for (int c = 0; c < k; ++c) {
                ad::Var a_rc = tape.dot(h[static_cast<std::size_t>(r)], y[static_cast<std::size_t>(c)]);
                entries = first ? a_rc : tape.concat(entries, a_rc);
                first = false;
            }
        }
        const std::size_t count = static_cast<std::size_t>(r_end - r_begin) * k;
        ad::Var shifted = tape.add(tape.softplus(entries), tape.constant(Vec(count, kSmoothing)));

        const std::size_t off = static_cast<std::size_t>(r_begin) * k;
        Vec eh(count);
        double se = 0.0;
        for (std::size_t i = 0; i < count; ++i) {
            eh[i] = e_full[off + i] + kSmoothing;
            se += eh[i];
        }
        double const_term = 0.0;
        for (double& x : eh) {
            x /= se;
            const_term += x * std::log(x);
        }
        // KL = sum eh log eh - eh . log(a) + log(sum a)
        ad::Var kl = tape.add(tape.constant(const_term),
                              tape.scale(tape.dot(tape.constant(eh), tape.log(shifted)), -1.0));
        return tape.add(kl, tape.log(tape.sum(shifted)));
    };

    if (!rowwise) {
        return row_kl(0, k, connection.e);
    }
    ad::Var total = row_kl(0, 1, connection.e);
    for (int r = 1; r < k; ++r) {
        total = tape.add(total, row_kl(r, r + 1, connection.e));
    }
    return total;
}

double total_loss(const Model& m, std::span<const EventSequence> batch,
                  const events::ConnectionMatrix& connection, double gamma,
                  const Integration& integ) {
    if (batch.empty()) throw std::invalid_argument("total_loss: empty batch");
    double nll = 0.0;
    for (const EventSequence& s : batch) nll += sequence_nll(m, s, integ);
    nll /= static_cast<double>(batch.size());
    if (gamma == 0.0) return nll;
    return nll + gamma * graph_reg(model::infectivity(m), connection.e, m.config.node_count);
}

ad::TapeFunction total_loss_program(const Model& m, std::vector<EventSequence> batch,
                                    events::ConnectionMatrix connection, double gamma,
                                    Integration integ) {
    if (batch.empty()) throw std::invalid_argument("total_loss_program: empty batch");
    // Captures the model by reference for its structure (config, neighborhoods);
    // parameter values come from the tape's bound vector, so the same program
    // serves optimization and finite differences. The model must outlive the
    // returned function.
    const Model* mp = &m;
    return [mp, batch = std::move(batch), connection = std::move(connection), gamma,
            integ](ad::Tape& tape) -> ad::Var {
        model::TapeEngine eng{tape};
        ad::Var acc;
        for (std::size_t i = 0; i < batch.size(); ++i) {
            Integration per_seq = integ;
            per_seq.seed = rng::mix(integ.seed, i);
            ad::Var nll = sequence_nll_value(eng, *mp, batch[i], per_seq);
            acc = i == 0 ? nll : tape.add(acc, nll);
        }
        acc = tape.scale(acc, 1.0 / static_cast<double>(batch.size()));
        if (gamma != 0.0) {
            acc = tape.add(acc, tape.scale(graph_reg_program(tape, *mp, connection), gamma));
        }
        return acc;
    };
}

ad::GradientRecord total_loss_with_gradients(const Model& m, std::span<const EventSequence> batch,
                                             const events::ConnectionMatrix& connection,
                                             double gamma, const Integration& integ) {
    auto program = total_loss_program(m, {batch.begin(), batch.end()}, connection, gamma, integ);
    return ad::evaluate_with_gradients(program, m.params);
}

// ---------------------------------------------------------------------------
// config file
// ---------------------------------------------------------------------------

namespace {

bool parse_bool(const std::string& v, const std::string& key) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw std::invalid_argument("config: key '" + key + "' expects a boolean, got '" + v + "'");
}

template <class T, class Parse>
T parse_number(const std::string& v, const std::string& key, Parse parse) {
    try {
        return parse(v);
    } catch (const std::exception&) {
        throw std::invalid_argument("config: invalid value for key '" + key + "': '" + v + "'");
    }
}

int parse_int(const std::string& v, const std::string& key) {
    return parse_number<int>(v, key, [](const std::string& s) { return std::stoi(s); });
}
double parse_double(const std::string& v, const std::string& key) {
    return parse_number<double>(v, key, [](const std::string& s) { return std::stod(s); });
}
std::uint64_t parse_u64(const std::string& v, const std::string& key) {
    return parse_number<std::uint64_t>(v, key, [](const std::string& s) { return std::stoull(s); });
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

}  // namespace

void apply_config_entry(TrainConfig& cfg, const std::string& key, const std::string& value) {
    if (key == "epochs") cfg.epochs = parse_int(value, key);
    else if (key == "batch_size") cfg.batch_size = parse_int(value, key);
    else if (key == "learning_rate") cfg.learning_rate = parse_double(value, key);
    else if (key == "dropout") cfg.dropout = parse_double(value, key);
    else if (key == "gamma") cfg.gamma = parse_double(value, key);
    else if (key == "mc_samples") cfg.mc_samples = parse_int(value, key);
    else if (key == "trapezoid_points") cfg.trapezoid_points = parse_int(value, key);
    else if (key == "clip_norm") cfg.clip_norm = parse_double(value, key);
    else if (key == "seed") cfg.seed = parse_u64(value, key);
    else if (key == "split_seed") cfg.split_seed = parse_u64(value, key);
    else if (key == "disable_graph_propagation") cfg.disable_graph_propagation = parse_bool(value, key);
    else if (key == "disable_history_attention") cfg.disable_history_attention = parse_bool(value, key);
    else if (key == "patience") cfg.patience = parse_int(value, key);
    else if (key == "threads") cfg.threads = parse_int(value, key);
    else if (key == "deterministic") cfg.deterministic = parse_bool(value, key);
    else if (key == "kl_rowwise") cfg.kl_rowwise = parse_bool(value, key);
    else if (key == "tau") cfg.tau = parse_double(value, key);
    else if (key == "hidden_dim") cfg.hidden_dim = parse_int(value, key);
    else if (key == "embed_dim") cfg.embed_dim = parse_int(value, key);
    else if (key == "nodes") cfg.node_count = parse_int(value, key);
    else throw std::invalid_argument("config: unknown key '" + key + "'");
}

TrainConfig load_train_config(const std::filesystem::path& path, TrainConfig base) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("config: cannot open '" + path.string() + "'");
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw std::invalid_argument("config: line " + std::to_string(line_no) +
                                        " is not key=value");
        }
        apply_config_entry(base, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return base;
}

void write_report_csv(const std::filesystem::path& path, const TrainReport& report,
                      bool zero_seconds) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write report: " + path.string());
    out << "epoch,train_loss,valid_nll,valid_graph_loss,seconds\n";
    char buf[160];
    for (const EpochRow& r : report.rows) {
        std::snprintf(buf, sizeof(buf), "%d,%.12g,%.12g,%.12g,%.3f\n", r.epoch, r.train_loss,
                      r.valid_nll, r.valid_graph, zero_seconds ? 0.0 : r.seconds);
        out << buf;
    }
}

// ---------------------------------------------------------------------------
// the optimizer
// ---------------------------------------------------------------------------

namespace {

struct Adam {
    double lr;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    Vec m1, m2;
    long long t = 0;

    explicit Adam(std::size_t n, double learning_rate)
        : lr(learning_rate), m1(n, 0.0), m2(n, 0.0) {}

    void step(Vec& x, const Vec& g) {
        ++t;
        const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
        const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
        for (std::size_t i = 0; i < x.size(); ++i) {
            m1[i] = beta1 * m1[i] + (1.0 - beta1) * g[i];
            m2[i] = beta2 * m2[i] + (1.0 - beta2) * g[i] * g[i];
            x[i] -= lr * (m1[i] / c1) / (std::sqrt(m2[i] / c2) + eps);
        }
    }
};

void clip_global_norm(Vec& g, double max_norm) {
    if (max_norm <= 0.0) return;
    double sq = 0.0;
    for (double x : g) sq += x * x;
    const double norm = std::sqrt(sq);
    if (norm > max_norm) {
        const double s = max_norm / norm;
        for (double& x : g) x *= s;
    }
}

DropoutPlan make_dropout_plan(const EventSequence& s, int input_dim, double rate,
                              std::uint64_t seed) {
    DropoutPlan plan;
    if (rate <= 0.0) return plan;
    rng::Engine gen(seed);
    const double keep = 1.0 - rate;
    plan.masks.reserve(s.events.size());
    for (std::size_t i = 0; i < s.events.size(); ++i) {
        Vec mask(static_cast<std::size_t>(input_dim));
        for (double& x : mask) x = gen.uniform01() < keep ? 1.0 / keep : 0.0;
        plan.masks.push_back(std::move(mask));
    }
    return plan;
}

struct SeqGrad {
    double loss = 0.0;
    Vec grad;
};

SeqGrad sequence_gradient(const Model& m, const EventSequence& s, const Integration& integ,
                          double dropout_rate, std::uint64_t noise_seed) {
    const DropoutPlan plan = make_dropout_plan(
        s, m.config.hidden_dim + m.config.embed_dim, dropout_rate, rng::mix(noise_seed, 0xd120ULL));
    Integration per_seq = integ;
    per_seq.seed = rng::mix(noise_seed, 0x3cULL);

    ad::Tape tape(&m.params);
    model::TapeEngine eng{tape};
    ad::Var nll = sequence_nll_value(eng, m, s, per_seq, plan.masks.empty() ? nullptr : &plan);
    SeqGrad out;
    out.loss = tape.value_scalar(nll);
    out.grad.assign(m.params.size(), 0.0);
    tape.backward(nll);
    tape.grad_into(out.grad);
    return out;
}

}  // namespace

Model make_model(const TrainConfig& cfg, int node_count) {
    model::Config mc;
    mc.node_count = node_count;
    mc.embed_dim = cfg.embed_dim;
    mc.hidden_dim = cfg.hidden_dim;
    mc.seed = cfg.seed;
    mc.graph_propagation = !cfg.disable_graph_propagation;
    mc.history_attention = !cfg.disable_history_attention;
    mc.tau = cfg.tau;
    Model m = model::init_model(mc);
    m.split_seed = cfg.split_seed;
    return m;
}

TrainResult train(Model m, const Dataset& train_set, const Dataset& valid_set,
                  const TrainConfig& cfg) {
    if (train_set.sequences.empty() || valid_set.sequences.empty()) {
        throw std::invalid_argument("train: datasets must be nonempty");
    }
    // woGP removes the graph regularizer together with the propagation step
    const double gamma = cfg.disable_graph_propagation ? 0.0 : cfg.gamma;

    std::vector<const EventSequence*> usable;
    for (const EventSequence& s : train_set.sequences) {
        if (s.events.size() >= 2) usable.push_back(&s);
    }
    if (usable.empty()) throw std::invalid_argument("train: no training sequence has >= 2 events");

    const Integration train_integ{Integration::Mode::monte_carlo, cfg.mc_samples, 0};
    const Integration eval_integ{Integration::Mode::trapezoid, cfg.trapezoid_points, 0};

    auto validate = [&](const Model& model) {
        return dataset_mean_nll(model, valid_set, eval_integ);
    };
    auto graph_loss = [&](const Model& model) {
        return graph_reg(model::infectivity(model), model.connection.e, model.config.node_count,
                         cfg.kl_rowwise);
    };

    TrainReport report;
    report.ablation = cfg.ablation_tag();

    // epoch 0: state before any update
    {
        EpochRow row;
        row.epoch = 0;
        double init_loss = 0.0;
        for (const EventSequence* s : usable) init_loss += sequence_nll(m, *s, eval_integ);
        row.train_loss = init_loss / static_cast<double>(usable.size()) +
                         (gamma > 0.0 ? gamma * graph_loss(m) : 0.0);
        row.valid_nll = validate(m);
        row.valid_graph = graph_loss(m);
        report.rows.push_back(row);
    }

    Model best = m;
    double best_valid = report.rows.front().valid_nll;
    int best_epoch = 0;
    int stale = 0;

    Adam adam(m.params.size(), cfg.learning_rate);
    Vec grad(m.params.size());
    const int threads = std::max(1, cfg.threads);

    std::vector<std::size_t> order(usable.size());
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const auto t_start = std::chrono::steady_clock::now();
        rng::Engine shuffler(rng::mix(cfg.seed, static_cast<std::uint64_t>(epoch)));
        shuffler.shuffle(order);

        double epoch_nll = 0.0;
        int batches = 0;

        for (std::size_t begin = 0; begin < order.size(); begin += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t end =
                std::min(order.size(), begin + static_cast<std::size_t>(cfg.batch_size));
            const std::size_t bsize = end - begin;
            std::fill(grad.begin(), grad.end(), 0.0);
            double batch_loss = 0.0;

            // fixed-order reduction over windows of `threads` sequences
            std::vector<SeqGrad> window(static_cast<std::size_t>(threads));
            for (std::size_t w = begin; w < end; w += static_cast<std::size_t>(threads)) {
                const std::size_t wend = std::min(end, w + static_cast<std::size_t>(threads));
                if (threads == 1 || wend - w == 1) {
                    for (std::size_t i = w; i < wend; ++i) {
                        const std::size_t seq_idx = order[i];
                        window[i - w] = sequence_gradient(
                            m, *usable[seq_idx], train_integ, cfg.dropout,
                            rng::mix(cfg.seed, static_cast<std::uint64_t>(epoch), seq_idx));
                    }
                } else {
                    std::vector<std::future<SeqGrad>> futures;
                    for (std::size_t i = w; i < wend; ++i) {
                        const std::size_t seq_idx = order[i];
                        futures.push_back(std::async(std::launch::async, [&, seq_idx] {
                            return sequence_gradient(
                                m, *usable[seq_idx], train_integ, cfg.dropout,
                                rng::mix(cfg.seed, static_cast<std::uint64_t>(epoch), seq_idx));
                        }));
                    }
                    for (std::size_t i = w; i < wend; ++i) window[i - w] = futures[i - w].get();
                }
                for (std::size_t i = w; i < wend; ++i) {
                    const SeqGrad& sg = window[i - w];
                    batch_loss += sg.loss;
                    for (std::size_t p = 0; p < grad.size(); ++p) grad[p] += sg.grad[p];
                }
            }
            const double inv = 1.0 / static_cast<double>(bsize);
            for (double& x : grad) x *= inv;
            batch_loss *= inv;

            if (gamma > 0.0) {
                ad::Tape tape(&m.params);
                ad::Var reg = tape.scale(graph_reg_program(tape, m, m.connection, cfg.kl_rowwise),
                                         gamma);
                batch_loss += tape.value_scalar(reg);
                tape.backward(reg);
                tape.grad_into(grad);
            }

            clip_global_norm(grad, cfg.clip_norm);
            adam.step(m.params.values, grad);
            epoch_nll += batch_loss;
            ++batches;
        }

        EpochRow row;
        row.epoch = epoch;
        row.train_loss = epoch_nll / std::max(1, batches);
        row.valid_nll = validate(m);
        row.valid_graph = graph_loss(m);
        row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
        report.rows.push_back(row);
        report.epochs_run = epoch;

        if (!std::isfinite(row.train_loss) || !std::isfinite(row.valid_nll)) {
            throw std::runtime_error("train: non-finite loss at epoch " + std::to_string(epoch));
        }

        if (row.valid_nll < best_valid) {
            best_valid = row.valid_nll;
            best = m;
            best_epoch = epoch;
            stale = 0;
        } else if (++stale >= cfg.patience) {
            break;
        }
    }

    report.best_epoch = best_epoch;
    report.best_valid_nll = best_valid;
    TrainResult result{std::move(best), std::move(report)};
    return result;
}

}  // namespace grpp::training
