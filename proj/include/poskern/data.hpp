#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace poskern {

struct Interaction {
    long long user = 0;
    long long item = 0;
    long long timestamp = 0;  // non-negative seconds

    bool operator==(const Interaction&) const = default;
};

struct CsvFormat {
    std::string user_col = "user";
    std::string item_col = "item";
    std::string time_col = "timestamp";
};

// Parse a UTF-8 CSV with a header row. Input order is preserved; it is
// the tie-breaker for equal (user, timestamp) pairs downstream.
std::vector<Interaction> load_interactions(const std::string& path,
                                           const CsvFormat& fmt = {});
void save_interactions(const std::string& path, const std::vector<Interaction>& rows,
                       const CsvFormat& fmt = {});

// Fixpoint filter: repeatedly drop users, then items, with fewer than
// min_count interactions until nothing changes.
std::vector<Interaction> five_core_filter(std::vector<Interaction> rows,
                                          int min_count = 5);

struct SplitDataset {
    std::vector<Interaction> train, valid, test;  // ids already remapped dense
    std::map<long long, int> item_map, user_map;  // raw id -> dense id
    int n_items = 0;
    int n_users = 0;
    long long boundary1 = 0, boundary2 = 0;  // timestamp quantile boundaries
};

// Dense id remap (order of first appearance) followed by a global
// temporal split at the nearest-rank p1/p2 timestamp quantiles.
// Interactions with timestamp equal to a boundary go to the later
// split, so: train < b1 <= valid < b2 <= test.
SplitDataset temporal_split(const std::vector<Interaction>& rows, double p1 = 0.95,
                            double p2 = 0.97);

struct Window {
    int user = 0;
    std::vector<int> input;    // length K, left-padded with PAD = n_items
    std::vector<int> targets;  // length K, -1 where no supervision
};

enum class WindowMode { Recent, AllSuffixes };

// Per-user training windows from the train slice. Recent: one window
// from the most recent K+1 items (SASRec convention). AllSuffixes: one
// window per sequence prefix of length >= 2.
std::vector<Window> make_windows(const SplitDataset& split, int k,
                                 WindowMode mode = WindowMode::Recent);

// Chronological per-user item sequence of one split slice.
std::map<int, std::vector<int>> user_sequences(const std::vector<Interaction>& rows);

struct SyntheticSpec {
    int n_users = 500;
    int n_items = 200;
    int seq_len = 80;
    int chain_len = 3;       // deterministic i -> i+1 -> i+2 runs
    int period = 7;          // personal item recurring every `period` steps; 0 = off
    double drift_rate = 0.0; // per-step drift of the chain-start preference center
    double noise_prob = 0.1;
    std::uint64_t seed = 0;
};

// Seeded multi-scale stream generator: short deterministic chains, a
// per-user periodic item, a slowly drifting preference over chain
// starts, and uniform noise. Timestamp = step index, shared across
// users so the global temporal split cuts every user's tail.
std::vector<Interaction> synth_generate(const SyntheticSpec& spec);

struct DatasetStats {
    long long users = 0, items = 0, events = 0;
    double avg_seq_len = 0.0;
    double density = 0.0;  // events / (users * items)
};
DatasetStats dataset_stats(const std::vector<Interaction>& rows);

}  // namespace poskern
