#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "poskern/data.hpp"
#include "poskern/eval.hpp"
#include "poskern/model.hpp"

namespace poskern {

struct TrainConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    int batch_size = 128;
    int max_epochs = 300;
    int patience = 10;
    double clip_norm = 5.0;  // global gradient norm; <= 0 disables
    std::uint64_t seed = 0;
    WindowMode window_mode = WindowMode::Recent;

    void validate() const;
    std::string to_json() const;
    static TrainConfig from_json(const std::string& text);
};

// Per-parameter first/second moments, in Model::parameters() order.
struct AdamState {
    std::vector<Matrix> m, v;
    long step = 0;
};

AdamState adam_init(const std::vector<Parameter*>& params);

// Standard bias-corrected Adam update from the accumulated gradients.
// Throws on non-finite gradients.
void adam_step(const std::vector<Parameter*>& params, AdamState& state,
               const TrainConfig& cfg);

// Scales all gradients so their global L2 norm is at most clip_norm.
void clip_gradients(const std::vector<Parameter*>& params, double clip_norm);

struct EpochStat {
    int epoch = 0;
    double train_loss = 0.0;
    double valid_ndcg = 0.0;
    double wall_seconds = 0.0;
};

struct TrainResult {
    std::vector<EpochStat> history;
    int best_epoch = -1;
    double best_ndcg = 0.0;
};

// Mini-batch training with per-epoch successive validation (NDCG@10)
// and early stopping. When run_dir is non-empty, writes config.json,
// epoch_log.jsonl (deterministic fields only), timing.jsonl, and
// best/final checkpoints there. The model is left at the BEST weights.
TrainResult train(Model& model, const SplitDataset& data, const TrainConfig& cfg,
                  const std::string& run_dir = "");

// One optimization step over a batch of windows (mean loss); returns
// the batch loss. Exposed for tests.
double train_batch(Model& model, const std::vector<Window>& batch, AdamState& state,
                   const TrainConfig& cfg, std::mt19937_64& dropout_rng);

}  // namespace poskern
