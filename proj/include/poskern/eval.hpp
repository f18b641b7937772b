#pragma once

#include <string>
#include <vector>

#include "poskern/data.hpp"
#include "poskern/model.hpp"

namespace poskern {

struct EvalRecord {
    int user = 0;
    int step = 0;
    int target = 0;
    int rank = 0;  // 1-based rank of the target among all items; 0 = beyond top-k
    std::vector<int> top_k;
};

// Mean single-target DCG: 1/log2(rank+1) when the target is ranked
// within the top k, else 0. Ideal DCG is 1.
double ndcg_at_k(const std::vector<EvalRecord>& records, int k);

// Fraction of records whose target appears in the top k.
double hr_at_k(const std::vector<EvalRecord>& records, int k);

// Fraction of the catalog ever recommended: |union of top-k lists| / N.
double coverage_at_k(const std::vector<EvalRecord>& records, int k, int n_items);

struct EvalOptions {
    int k = 10;
    bool exclude_seen = false;
    // history available before the phase: train for valid, train+valid for test
};

struct EvalResult {
    double ndcg = 0.0, hr = 0.0, cov = 0.0;
    long long n_records = 0;
    std::vector<EvalRecord> records;
};

// Successive evaluation: walk each user's phase interactions in time
// order; score the next item from the window of the full known history
// (prior slices + earlier phase items, truncated to K), then append the
// ground-truth item to the history. Model parameters stay frozen.
EvalResult successive_evaluate(const Model& model,
                               const std::vector<Interaction>& history_slice,
                               const std::vector<Interaction>& phase_slice,
                               int n_items, const EvalOptions& opt);

// Convenience wrapper selecting slices from a SplitDataset.
EvalResult successive_evaluate(const Model& model, const SplitDataset& split,
                               const std::string& phase, const EvalOptions& opt);

}  // namespace poskern
