#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "poskern/attention.hpp"
#include "poskern/autograd.hpp"
#include "poskern/kernel.hpp"

namespace poskern {

struct ModelConfig {
    int catalog = 0;  // N; PAD sentinel is index N (extra embedding row)
    int window = 0;   // K
    int dim = 0;      // d
    int blocks = 0;   // B
    PositionalScheme scheme = PositionalScheme::NoPE;
    KernelMode kernel;
    double dropout = 0.2;
    std::uint64_t seed = 0;
    double rope_base = 10000.0;

    int pad_index() const { return catalog; }
    void validate() const;
    std::string to_json() const;
    static ModelConfig from_json(const std::string& text);
};

struct Block {
    Parameter ln1_gain, ln1_bias;
    Parameter wq, wk, wv;
    Parameter ln2_gain, ln2_bias;
    Parameter ffn_w1, ffn_b1, ffn_w2, ffn_b2;
};

// Single-head SASRec-style next-item model with pre-norm residual
// blocks and tied output projection against the embedding table.
struct Model {
    ModelConfig cfg;
    Parameter embedding;  // (N+1) x d, row N is PAD
    Parameter pos;        // K x d, ClassicAdditive only
    std::vector<Block> blocks;
    // Kernel factors: size B when per-layer, 1 when shared; empty
    // unless scheme == Kernel. Initialized to the identity kernel.
    std::vector<Parameter> kernel_upper;
    std::vector<Parameter> kernel_lower;
    Parameter out_ln_gain, out_ln_bias;

    static Model init(const ModelConfig& cfg);

    std::vector<Parameter*> parameters();
    std::vector<const Parameter*> parameters() const;
    std::vector<Parameter*> kernel_parameters();
    long parameter_count() const;
    void zero_grad();

    // Logits (K x N) for one left-padded window of item indices in
    // [0, N] (N = PAD). Dropout is applied only when rng != nullptr.
    Tape::Var forward(Tape& tape, const std::vector<int>& window,
                      std::mt19937_64* rng = nullptr) const;
    Matrix forward_logits(const std::vector<int>& window) const;

    // Materialized kernel factors for a given block.
    Matrix upper_factor(int block) const;
    Matrix lower_factor(int block) const;

    // Post-softmax K x K attention map of each block (dropout off).
    std::vector<Matrix> attention_maps(const std::vector<int>& window) const;

    // Top-k items by last-position logit; ties broken by ascending id.
    std::vector<int> predict_topk(const std::vector<int>& window, int k,
                                  bool exclude_seen) const;
};

// Mean negative log-softmax over rows with target >= 0 (pure form,
// matching Tape::ce_loss_rows).
double ce_loss(const Matrix& logits, const std::vector<int>& targets);

// Plain-text manifest + flat little-endian float64 payload. Round-trip
// is bit-exact.
void save_checkpoint(const Model& model, const std::string& prefix);
Model load_checkpoint(const std::string& prefix);

}  // namespace poskern
