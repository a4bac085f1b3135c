#include "grpp/events.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "grpp/rng.hpp"

namespace grpp::events {

using nlohmann::json;

void validate_sequence(const EventSequence& s, int node_count, const std::string& label) {
    if (!(s.horizon > 0.0) || !std::isfinite(s.horizon)) {
        throw ParseError(label + ": horizon must be finite and > 0");
    }
    double prev = -1.0;
    for (std::size_t i = 0; i < s.events.size(); ++i) {
        const Event& ev = s.events[i];
        if (!std::isfinite(ev.t) || ev.t < 0.0) {
            throw ParseError(label + ": event " + std::to_string(i) + " has invalid timestamp");
        }
        if (ev.node < 0 || ev.node >= node_count) {
            throw ParseError(label + ": event " + std::to_string(i) + " node " +
                             std::to_string(ev.node) + " outside [0, " +
                             std::to_string(node_count) + ")");
        }
        if (i > 0 && !(ev.t > prev)) {
            throw ParseError(label + ": non-increasing timestamps at event " + std::to_string(i));
        }
        prev = ev.t;
    }
    if (!s.events.empty() && s.events.back().t > s.horizon) {
        throw ParseError(label + ": last timestamp exceeds horizon");
    }
}

Dataset load_sequences(const std::filesystem::path& path, int node_count) {
    std::ifstream in(path);
    if (!in) {
        throw ParseError("cannot open sequence file: " + path.string());
    }
    Dataset d;
    d.node_count = node_count;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw ParseError("parse error at line " + std::to_string(line_no) + ": " + e.what());
        }
        EventSequence s;
        try {
            s.horizon = j.at("horizon").get<double>();
            if (j.contains("seq_id")) s.id = j.at("seq_id").get<std::string>();
            for (const auto& je : j.at("events")) {
                s.events.push_back(Event{je.at("t").get<double>(), je.at("node").get<int>()});
            }
        } catch (const json::exception& e) {
            throw ParseError("parse error at line " + std::to_string(line_no) + ": " + e.what());
        }
        validate_sequence(s, node_count, "sequence " + std::to_string(d.sequences.size()) +
                                             " (line " + std::to_string(line_no) + ")");
        d.sequences.push_back(std::move(s));
    }
    return d;
}

void write_sequences(const std::filesystem::path& path, const Dataset& d) {
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("cannot write sequence file: " + path.string());
    }
    for (const EventSequence& s : d.sequences) {
        json j;
        j["horizon"] = s.horizon;
        if (!s.id.empty()) j["seq_id"] = s.id;
        json evs = json::array();
        for (const Event& ev : s.events) {
            evs.push_back(json{{"t", ev.t}, {"node", ev.node}});
        }
        j["events"] = std::move(evs);
        out << j.dump() << '\n';
    }
}

SplitResult split(const Dataset& d, std::uint64_t seed) {
    const std::size_t n = d.sequences.size();
    if (n < 5) {
        throw std::invalid_argument("split: need at least 5 sequences, got " + std::to_string(n));
    }
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    rng::Engine gen(rng::mix(seed, 0x5eafULL));
    gen.shuffle(idx);

    const std::size_t n_train = 3 * n / 5;
    const std::size_t n_valid = n / 5;

    SplitResult r;
    r.train.node_count = r.valid.node_count = r.test.node_count = d.node_count;
    for (std::size_t i = 0; i < n; ++i) {
        const EventSequence& s = d.sequences[idx[i]];
        if (i < n_train) {
            r.train.sequences.push_back(s);
        } else if (i < n_train + n_valid) {
            r.valid.sequences.push_back(s);
        } else {
            r.test.sequences.push_back(s);
        }
    }
    return r;
}

ConnectionMatrix estimate_connection_matrix(const Dataset& train) {
    const int k = train.node_count;
    ConnectionMatrix cm;
    cm.node_count = k;
    cm.e.assign(static_cast<std::size_t>(k) * k, 0.0);

    std::vector<long long> counts(static_cast<std::size_t>(k) * k, 0);
    long long max_count = 0;
    for (const EventSequence& s : train.sequences) {
        for (std::size_t i = 0; i + 1 < s.events.size(); ++i) {
            const std::size_t cell =
                static_cast<std::size_t>(s.events[i].node) * k + s.events[i + 1].node;
            max_count = std::max(max_count, ++counts[cell]);
        }
    }
    if (max_count == 0) return cm;
    for (std::size_t i = 0; i < counts.size(); ++i) {
        cm.e[i] = static_cast<double>(counts[i]) / static_cast<double>(max_count);
    }
    return cm;
}

std::vector<std::vector<int>> neighborhoods(const ConnectionMatrix& e, double tau) {
    if (tau < 0.0) throw std::invalid_argument("neighborhoods: tau must be >= 0");
    const int k = e.node_count;
    std::vector<std::vector<int>> nbrs(static_cast<std::size_t>(k));
    for (int u = 0; u < k; ++u) {
        for (int z = 0; z < k; ++z) {
            if (z == u || e.at(z, u) > tau) nbrs[u].push_back(z);
        }
    }
    return nbrs;
}

void write_matrix_csv(const std::filesystem::path& path, std::span<const double> data,
                      int rows, int cols) {
    if (data.size() != static_cast<std::size_t>(rows) * cols) {
        throw std::invalid_argument("write_matrix_csv: size mismatch");
    }
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write matrix file: " + path.string());
    char buf[64];
    for (int i = 0; i < rows; ++i) {
        for (int j = 0; j < cols; ++j) {
            std::snprintf(buf, sizeof(buf), "%.6g", data[static_cast<std::size_t>(i) * cols + j]);
            out << buf;
            if (j + 1 < cols) out << ',';
        }
        out << '\n';
    }
}

std::vector<double> read_matrix_csv(const std::filesystem::path& path, int& rows, int& cols) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open matrix file: " + path.string());
    std::vector<double> data;
    rows = 0;
    cols = -1;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        int c = 0;
        while (std::getline(ss, cell, ',')) {
            data.push_back(std::stod(cell));
            ++c;
        }
        if (cols < 0) {
            cols = c;
        } else if (cols != c) {
            throw std::runtime_error("ragged matrix file: " + path.string());
        }
        ++rows;
    }
    return data;
}

}  // namespace grpp::events
