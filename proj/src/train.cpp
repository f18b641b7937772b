#include "poskern/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>

#include <nlohmann/json.hpp>

namespace poskern {

using nlohmann::json;
namespace fs = std::filesystem;

void TrainConfig::validate() const {
    if (lr <= 0.0) throw std::invalid_argument("train config: lr must be positive");
    if (batch_size < 1) throw std::invalid_argument("train config: batch_size must be >= 1");
    if (max_epochs < 1) throw std::invalid_argument("train config: max_epochs must be >= 1");
    if (patience < 1) throw std::invalid_argument("train config: patience must be >= 1");
}

std::string TrainConfig::to_json() const {
    json j;
    j["lr"] = lr;
    j["beta1"] = beta1;
    j["beta2"] = beta2;
    j["eps"] = eps;
    j["batch_size"] = batch_size;
    j["max_epochs"] = max_epochs;
    j["patience"] = patience;
    j["clip_norm"] = clip_norm;
    j["seed"] = seed;
    j["window_mode"] = window_mode == WindowMode::Recent ? "recent" : "all-suffixes";
    return j.dump();
}

TrainConfig TrainConfig::from_json(const std::string& text) {
    const json j = json::parse(text);
    TrainConfig c;
    if (j.contains("lr")) c.lr = j["lr"].get<double>();
    if (j.contains("beta1")) c.beta1 = j["beta1"].get<double>();
    if (j.contains("beta2")) c.beta2 = j["beta2"].get<double>();
    if (j.contains("eps")) c.eps = j["eps"].get<double>();
    if (j.contains("batch_size")) c.batch_size = j["batch_size"].get<int>();
    if (j.contains("max_epochs")) c.max_epochs = j["max_epochs"].get<int>();
    if (j.contains("patience")) c.patience = j["patience"].get<int>();
    if (j.contains("clip_norm")) c.clip_norm = j["clip_norm"].get<double>();
    if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("window_mode"))
        c.window_mode = j["window_mode"].get<std::string>() == "all-suffixes"
                            ? WindowMode::AllSuffixes
                            : WindowMode::Recent;
    c.validate();
    return c;
}

AdamState adam_init(const std::vector<Parameter*>& params) {
    AdamState s;
    for (const Parameter* p : params) {
        s.m.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
        s.v.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
    }
    return s;
}

void clip_gradients(const std::vector<Parameter*>& params, double clip_norm) {
    if (clip_norm <= 0.0) return;
    double sq = 0.0;
    for (const Parameter* p : params) sq += p->grad.squaredNorm();
    const double norm = std::sqrt(sq);
    if (norm > clip_norm) {
        const double scale = clip_norm / norm;
        for (Parameter* p : params) p->grad *= scale;
    }
}

void adam_step(const std::vector<Parameter*>& params, AdamState& state,
               const TrainConfig& cfg) {
    if (params.size() != state.m.size())
        throw std::invalid_argument("adam_step: state/parameter count mismatch");
    for (const Parameter* p : params)
        if (!p->grad.allFinite())
            throw std::runtime_error("adam_step: non-finite gradient in parameter '" +
                                     p->name + "'");
    state.step += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
    for (size_t i = 0; i < params.size(); ++i) {
        Parameter& p = *params[i];
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * p.grad;
        state.v[i] = cfg.beta2 * state.v[i].array().matrix() +
                     (1.0 - cfg.beta2) * p.grad.cwiseProduct(p.grad);
        const Matrix mhat = state.m[i] / bc1;
        const Matrix vhat = state.v[i] / bc2;
        p.value.array() -=
            cfg.lr * mhat.array() / (vhat.array().sqrt() + cfg.eps);
    }
}

double train_batch(Model& model, const std::vector<Window>& batch, AdamState& state,
                   const TrainConfig& cfg, std::mt19937_64& dropout_rng) {
    model.zero_grad();
    double loss_sum = 0.0;
    const double inv = 1.0 / static_cast<double>(batch.size());
    for (const Window& w : batch) {
        Tape tape;
        Tape::Var logits = model.forward(tape, w.input, &dropout_rng);
        Tape::Var loss = tape.ce_loss_rows(logits, w.targets);
        loss_sum += tape.val(loss)(0, 0);
        tape.backward(loss, inv);
        tape.flush_param_grads();
    }
    auto params = model.parameters();
    clip_gradients(params, cfg.clip_norm);
    adam_step(params, state, cfg);
    return loss_sum * inv;
}

TrainResult train(Model& model, const SplitDataset& data, const TrainConfig& cfg,
                  const std::string& run_dir) {
    cfg.validate();
    auto windows = make_windows(data, model.cfg.window, cfg.window_mode);
    std::erase_if(windows, [](const Window& w) {
        return std::all_of(w.targets.begin(), w.targets.end(),
                           [](int t) { return t < 0; });
    });
    if (windows.empty())
        throw std::invalid_argument("train: dataset yields zero supervised windows");

    std::ofstream epoch_log, timing_log;
    if (!run_dir.empty()) {
        fs::create_directories(run_dir);
        std::ofstream cfg_out(run_dir + "/config.json");
        cfg_out << "{\"model\":" << model.cfg.to_json() << ",\"train\":" << cfg.to_json()
                << "}\n";
        epoch_log.open(run_dir + "/epoch_log.jsonl");
        timing_log.open(run_dir + "/timing.jsonl");
    }

    auto params = model.parameters();
    AdamState state = adam_init(params);
    std::mt19937_64 shuffle_rng(cfg.seed);
    std::mt19937_64 dropout_rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
    EvalOptions eval_opt;  // NDCG@10 on the validation slice

    TrainResult result;
    int stale = 0;
    std::vector<Matrix> best_values;
    const std::string best_prefix = run_dir.empty() ? "" : run_dir + "/best";

    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        std::shuffle(windows.begin(), windows.end(), shuffle_rng);
        double loss_sum = 0.0;
        long n_batches = 0;
        for (size_t off = 0; off < windows.size(); off += cfg.batch_size) {
            const size_t end = std::min(windows.size(), off + cfg.batch_size);
            std::vector<Window> batch(windows.begin() + static_cast<long>(off),
                                      windows.begin() + static_cast<long>(end));
            loss_sum += train_batch(model, batch, state, cfg, dropout_rng);
            ++n_batches;
        }
        const double train_loss = loss_sum / static_cast<double>(n_batches);
        const EvalResult val = successive_evaluate(model, data, "valid", eval_opt);
        const double wall =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

        EpochStat stat{epoch, train_loss, val.ndcg, wall};
        result.history.push_back(stat);
        if (epoch_log.is_open()) {
            // wall time lives in timing.jsonl so the epoch log is
            // byte-identical across same-seed runs
            epoch_log << "{\"epoch\":" << epoch << ",\"train_loss\":"
                      << json(train_loss).dump() << ",\"valid_ndcg10\":"
                      << json(val.ndcg).dump() << "}\n";
            timing_log << "{\"epoch\":" << epoch << ",\"wall_seconds\":"
                       << json(wall).dump() << "}\n";
        }

        if (val.ndcg > result.best_ndcg + 1e-9 || result.best_epoch < 0) {
            result.best_ndcg = val.ndcg;
            result.best_epoch = epoch;
            stale = 0;
            best_values.clear();
            for (const Parameter* p : params) best_values.push_back(p->value);
            if (!best_prefix.empty()) save_checkpoint(model, best_prefix);
        } else {
            ++stale;
            if (stale >= cfg.patience) break;
        }
    }

    if (!run_dir.empty()) save_checkpoint(model, run_dir + "/final");
    // leave the model at its best validation weights
    for (size_t i = 0; i < params.size(); ++i) params[i]->value = best_values[i];
    return result;
}

}  // namespace poskern
