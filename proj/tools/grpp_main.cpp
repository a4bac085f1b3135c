// grpp: simulate -> train -> eval -> recover pipeline over JSONL event files.

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "grpp/events.hpp"
#include "grpp/hawkes.hpp"
#include "grpp/inference.hpp"
#include "grpp/model.hpp"
#include "grpp/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::uint64_t fnv1a_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot hash missing file: " + path.string());
    std::uint64_t h = 0xcbf29ce484222325ULL;
    char buf[1 << 14];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
        const std::streamsize n = in.gcount();
        for (std::streamsize i = 0; i < n; ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 0x100000001b3ULL;
        }
    }
    char hex[17];
    std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(h));
    return h;
}

std::string hash_hex(const fs::path& path) {
    char hex[17];
    std::snprintf(hex, sizeof(hex), "%016llx",
                  static_cast<unsigned long long>(fnv1a_file(path)));
    return hex;
}

std::string timestamp_utc() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    char buf[32];
    std::tm tm_utc{};
    gmtime_r(&t, &tm_utc);
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
    return buf;
}

void write_manifest(const fs::path& dir, const std::string& command, json config,
                    std::uint64_t seed, const std::vector<fs::path>& inputs,
                    const std::vector<std::string>& outputs) {
    json j;
    j["command"] = command;
    j["config"] = std::move(config);
    j["seed"] = seed;
    json in = json::object();
    for (const fs::path& p : inputs) in[p.string()] = hash_hex(p);
    j["inputs"] = std::move(in);
    j["outputs"] = outputs;
    j["created"] = timestamp_utc();
    std::ofstream out(dir / "manifest.json");
    if (!out) throw std::runtime_error("cannot write manifest in " + dir.string());
    out << j.dump(2) << '\n';
}

void ensure_out_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw std::runtime_error("cannot create output directory " + dir.string());
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

struct SimulateArgs {
    int dim = 10;
    int sequences = 100;
    double horizon = 500.0;
    std::uint64_t seed = 1;
    std::string out;
    double time_scale = 1.0;
};

int cmd_simulate(const SimulateArgs& args) {
    if (args.dim != 10 && args.dim != 100) {
        throw UsageError("--dim must be 10 or 100");
    }
    if (args.sequences < 1 || !(args.horizon > 0.0) || !(args.time_scale > 0.0)) {
        throw UsageError("--sequences, --horizon and --time-scale must be positive");
    }
    ensure_out_dir(args.out);
    const fs::path dir(args.out);

    grpp::hawkes::SynthParams synth =
        grpp::hawkes::synth_infectivity(args.dim, args.seed, /*omega=*/1.0);

    grpp::hawkes::MHPParams p;
    p.node_count = args.dim;
    p.mu = synth.mu;
    p.a = synth.a;
    // smallest decay that keeps the max row branching at 0.9
    double worst_row = 0.0;
    for (int i = 0; i < args.dim; ++i) {
        double row = 0.0;
        for (int j = 0; j < args.dim; ++j) row += p.alpha(i, j);
        worst_row = std::max(worst_row, row);
    }
    p.omega = worst_row > 0.0 ? worst_row / 0.9 : 1.0;

    // a time-scale of c multiplies all rates by c; the process is unchanged up
    // to measuring time in units 1/c
    for (double& x : p.mu) x *= args.time_scale;
    for (double& x : p.a) x *= args.time_scale;
    p.omega *= args.time_scale;

    grpp::events::Dataset data =
        grpp::hawkes::simulate_dataset(p, args.sequences, args.horizon, args.seed);
    grpp::events::write_sequences(dir / "events.jsonl", data);

    // ground truth in source -> target orientation (row = influencing node),
    // matching the connection-matrix CSV convention
    std::vector<double> gt(static_cast<std::size_t>(args.dim) * args.dim);
    for (int i = 0; i < args.dim; ++i) {
        for (int j = 0; j < args.dim; ++j) {
            gt[static_cast<std::size_t>(i) * args.dim + j] = p.alpha(j, i);
        }
    }
    grpp::events::write_matrix_csv(dir / "ground_truth_A.csv", gt, args.dim, args.dim);
    grpp::events::write_matrix_csv(dir / "mu.csv", p.mu, args.dim, 1);

    json meta;
    meta["K"] = args.dim;
    meta["omega"] = p.omega;
    meta["seed"] = args.seed;
    meta["rescale_factor"] = synth.rescale;
    meta["time_scale"] = args.time_scale;
    {
        std::ofstream mo(dir / "metadata.json");
        mo << meta.dump(2) << '\n';
    }

    json cfg;
    cfg["dim"] = args.dim;
    cfg["sequences"] = args.sequences;
    cfg["horizon"] = args.horizon;
    cfg["time_scale"] = args.time_scale;
    write_manifest(dir, "simulate", std::move(cfg), args.seed, {},
                   {"events.jsonl", "ground_truth_A.csv", "mu.csv", "metadata.json"});
    std::cout << "simulate: wrote " << data.sequences.size() << " sequences to " << args.out
              << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct TrainArgs {
    std::string data;
    std::string config;
    std::string out;
    std::string ablate;
    int threads = 0;  // 0 = from config
    bool deterministic = false;
};

int resolve_node_count(const fs::path& data_dir, const grpp::training::TrainConfig& cfg) {
    if (cfg.node_count > 0) return cfg.node_count;
    const fs::path meta = data_dir / "metadata.json";
    if (fs::exists(meta)) {
        std::ifstream in(meta);
        json j;
        in >> j;
        if (j.contains("K")) return j.at("K").get<int>();
    }
    return 0;  // infer from events below
}

int cmd_train(const TrainArgs& args) {
    const fs::path data_dir(args.data);
    const fs::path events_file = data_dir / "events.jsonl";
    if (!fs::exists(events_file)) {
        throw UsageError("data directory has no events.jsonl: " + data_dir.string());
    }
    ensure_out_dir(args.out);
    const fs::path out_dir(args.out);

    grpp::training::TrainConfig cfg;
    if (!args.config.empty()) {
        cfg = grpp::training::load_train_config(args.config, cfg);
    }
    if (args.ablate == "wogp") {
        cfg.disable_graph_propagation = true;
    } else if (args.ablate == "woat") {
        cfg.disable_history_attention = true;
    } else if (!args.ablate.empty()) {
        throw UsageError("--ablate must be 'wogp' or 'woat'");
    }
    if (args.threads > 0) cfg.threads = args.threads;
    if (args.deterministic) {
        cfg.deterministic = true;
        cfg.threads = 1;  // serial reductions
    }

    int node_count = resolve_node_count(data_dir, cfg);
    // peek at the data if nothing declared the node count
    grpp::events::Dataset data;
    if (node_count <= 0) {
        data = grpp::events::load_sequences(events_file, 1 << 20);
        int max_node = -1;
        for (const auto& s : data.sequences) {
            for (const auto& ev : s.events) max_node = std::max(max_node, ev.node);
        }
        node_count = max_node + 1;
        if (node_count <= 0) throw std::runtime_error("train: dataset has no events");
        data.node_count = node_count;
    } else {
        data = grpp::events::load_sequences(events_file, node_count);
    }

    auto splits = grpp::events::split(data, cfg.split_seed);
    grpp::events::ConnectionMatrix connection =
        grpp::events::estimate_connection_matrix(splits.train);

    grpp::model::Model m = grpp::training::make_model(cfg, node_count);
    grpp::model::set_connection(m, connection);

    grpp::training::TrainResult result =
        grpp::training::train(std::move(m), splits.train, splits.valid, cfg);

    grpp::model::save_checkpoint(out_dir / "checkpoint.json", result.best);
    grpp::training::write_report_csv(out_dir / "report.csv", result.report, cfg.deterministic);

    json jc;
    jc["epochs"] = cfg.epochs;
    jc["batch_size"] = cfg.batch_size;
    jc["learning_rate"] = cfg.learning_rate;
    jc["dropout"] = cfg.dropout;
    jc["gamma"] = cfg.gamma;
    jc["mc_samples"] = cfg.mc_samples;
    jc["trapezoid_points"] = cfg.trapezoid_points;
    jc["clip_norm"] = cfg.clip_norm;
    jc["seed"] = cfg.seed;
    jc["split_seed"] = cfg.split_seed;
    jc["patience"] = cfg.patience;
    jc["threads"] = cfg.threads;
    jc["deterministic"] = cfg.deterministic;
    jc["kl_rowwise"] = cfg.kl_rowwise;
    jc["tau"] = cfg.tau;
    jc["hidden_dim"] = cfg.hidden_dim;
    jc["embed_dim"] = cfg.embed_dim;
    jc["nodes"] = node_count;
    jc["ablation"] = cfg.ablation_tag();
    write_manifest(out_dir, "train", std::move(jc), cfg.seed, {events_file},
                   {"checkpoint.json", "report.csv"});

    std::cout << "train: " << result.report.epochs_run << " epochs, best valid nll "
              << result.report.best_valid_nll << " at epoch " << result.report.best_epoch
              << " (ablation " << result.report.ablation << ")\n";
    return 0;
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

struct EvalArgs {
    std::string checkpoint;
    std::string data;
    std::string out;
};

int cmd_eval(const EvalArgs& args) {
    if (!fs::exists(args.checkpoint)) {
        throw UsageError("checkpoint not found: " + args.checkpoint);
    }
    const fs::path data_dir(args.data);
    const fs::path events_file = data_dir / "events.jsonl";
    if (!fs::exists(events_file)) {
        throw UsageError("data directory has no events.jsonl: " + data_dir.string());
    }
    ensure_out_dir(args.out);
    const fs::path out_dir(args.out);

    grpp::model::Model m = grpp::model::load_checkpoint(args.checkpoint);
    grpp::events::Dataset data =
        grpp::events::load_sequences(events_file, m.config.node_count);
    auto splits = grpp::events::split(data, m.split_seed);

    std::vector<grpp::infer::PredictionRow> rows;
    grpp::infer::Metrics metrics = grpp::infer::evaluate(m, splits.test, {}, &rows);
    grpp::infer::write_metrics_json(out_dir / "metrics.json", metrics);
    grpp::infer::write_predictions_csv(out_dir / "predictions.csv", rows);

    json jc;
    jc["checkpoint"] = args.checkpoint;
    jc["data"] = args.data;
    write_manifest(out_dir, "eval", std::move(jc), m.config.seed,
                   {fs::path(args.checkpoint), events_file}, {"metrics.json", "predictions.csv"});
    std::cout << "eval: " << metrics.n_events << " events, rmse " << metrics.rmse
              << ", accuracy " << metrics.accuracy << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// recover
// ---------------------------------------------------------------------------

struct RecoverArgs {
    std::string checkpoint;
    std::string out;
};

int cmd_recover(const RecoverArgs& args) {
    if (!fs::exists(args.checkpoint)) {
        throw UsageError("checkpoint not found: " + args.checkpoint);
    }
    grpp::model::Model m = grpp::model::load_checkpoint(args.checkpoint);
    const auto a = grpp::model::infectivity(m);
    grpp::events::write_matrix_csv(args.out, a, m.config.node_count, m.config.node_count);
    std::cout << "recover: wrote " << m.config.node_count << "x" << m.config.node_count
              << " infectivity matrix to " << args.out << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Graph-regularized point process pipeline"};
    app.require_subcommand(1);

    SimulateArgs sim;
    CLI::App* c_sim = app.add_subcommand("simulate", "Generate synthetic propagation data");
    c_sim->add_option("--dim", sim.dim, "Node count (10 or 100)")->required();
    c_sim->add_option("--sequences", sim.sequences, "Number of sequences")->required();
    c_sim->add_option("--horizon", sim.horizon, "Observation window per sequence")->required();
    c_sim->add_option("--seed", sim.seed, "Random seed")->required();
    c_sim->add_option("--out", sim.out, "Output directory")->required();
    c_sim->add_option("--time-scale", sim.time_scale,
                      "Density multiplier: scales mu, A and omega, leaving the process "
                      "unchanged up to time units (default 1)");

    TrainArgs tr;
    CLI::App* c_train = app.add_subcommand("train", "Train on a simulated or loaded dataset");
    c_train->add_option("--data", tr.data, "Directory containing events.jsonl")->required();
    c_train->add_option("--config", tr.config, "key=value training config file");
    c_train->add_option("--out", tr.out, "Output directory")->required();
    c_train->add_option("--ablate", tr.ablate, "Ablation: wogp or woat");
    c_train->add_option("--threads", tr.threads, "Worker threads");
    c_train->add_flag("--deterministic", tr.deterministic,
                      "Serial reductions and zeroed timing columns");

    EvalArgs ev;
    CLI::App* c_eval = app.add_subcommand("eval", "Evaluate a checkpoint on the test split");
    c_eval->add_option("--checkpoint", ev.checkpoint, "Checkpoint file")->required();
    c_eval->add_option("--data", ev.data, "Directory containing events.jsonl")->required();
    c_eval->add_option("--out", ev.out, "Output directory")->required();

    RecoverArgs rec;
    CLI::App* c_rec = app.add_subcommand("recover", "Write the learned infectivity matrix");
    c_rec->add_option("--checkpoint", rec.checkpoint, "Checkpoint file")->required();
    c_rec->add_option("--out", rec.out, "Output CSV path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n";
        return 2;
    }

    try {
        if (app.got_subcommand(c_sim)) return cmd_simulate(sim);
        if (app.got_subcommand(c_train)) return cmd_train(tr);
        if (app.got_subcommand(c_eval)) return cmd_eval(ev);
        if (app.got_subcommand(c_rec)) return cmd_recover(rec);
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
