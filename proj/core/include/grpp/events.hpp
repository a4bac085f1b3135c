#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace grpp::events {

struct Event {
    double t = 0.0;
    int node = 0;
};

struct EventSequence {
    std::vector<Event> events;
    double horizon = 0.0;
    std::string id;  // optional "seq_id" from the file; empty if absent

    std::size_t size() const { return events.size(); }
};

struct Dataset {
    int node_count = 0;
    std::vector<EventSequence> sequences;
};

struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Validates one sequence against the data-model invariants: finite
// non-negative strictly increasing timestamps, nodes in [0, K), horizon > 0
// and >= the last timestamp. Throws ParseError naming `label` on violation.
void validate_sequence(const EventSequence& s, int node_count, const std::string& label);

// JSONL, one sequence per line:
//   {"events":[{"t":0.5,"node":1},...],"horizon":10.0,"seq_id":"optional"}
Dataset load_sequences(const std::filesystem::path& path, int node_count);
void write_sequences(const std::filesystem::path& path, const Dataset& d);

struct SplitResult {
    Dataset train;
    Dataset valid;
    Dataset test;
};

// Seeded shuffled 3:1:1 partition by sequence: floor(3n/5) / floor(n/5) /
// remainder. Requires at least 5 sequences.
SplitResult split(const Dataset& d, std::uint64_t seed);

struct ConnectionMatrix {
    int node_count = 0;
    std::vector<double> e;  // row-major K x K, row = source, column = target

    double at(int from, int to) const { return e[static_cast<std::size_t>(from) * node_count + to]; }
    double& at(int from, int to) { return e[static_cast<std::size_t>(from) * node_count + to]; }
};

// Counts consecutive within-sequence transitions N[from][to] and normalizes
// by the largest count, so entries lie in [0,1] and the strongest observed
// link is exactly 1. No transitions at all yields the zero matrix.
ConnectionMatrix estimate_connection_matrix(const Dataset& train);

// In-neighbor sets from thresholded support: N_u = { z : e(z,u) > tau } + {u}.
// The node itself is always included so aggregation is never empty.
std::vector<std::vector<int>> neighborhoods(const ConnectionMatrix& e, double tau);

// CSV matrix files: row i = source node i, column j = target node j,
// 6 significant digits.
void write_matrix_csv(const std::filesystem::path& path, std::span<const double> data,
                      int rows, int cols);
std::vector<double> read_matrix_csv(const std::filesystem::path& path, int& rows, int& cols);

}  // namespace grpp::events
