#pragma once

#include "poskern/matrix.hpp"

namespace poskern {

enum class PositionalScheme { NoPE, ClassicAdditive, Rotary, Kernel };

PositionalScheme parse_scheme(const std::string& name);
std::string scheme_str(PositionalScheme s);

struct AttentionWeights {
    Matrix wq, wk, wv;  // each d x d
};

// Unnormalized QKV block of the simplified analysis: no softmax, no
// mask, no positions. X is N x K with one-hot columns.
//   (X^T M Wq Wk^T M^T X) X^T M Wv
Matrix vanilla_qkv_oracle(const Matrix& x, const Matrix& m, const AttentionWeights& w);

// Y(X) = (X^T W X) X^T M with the data-independent kernel
// W = M Wq Wk^T M^T. Equals vanilla_qkv_oracle up to the trailing Wv.
Matrix qkv_y(const Matrix& x, const Matrix& m, const AttentionWeights& w);

// Y(X, C) = (X^T W X) C X^T M — the positional kernel inserted between
// the item-similarity term and the value path.
Matrix qkv_y_kernel(const Matrix& x, const Matrix& m, const AttentionWeights& w,
                    const Matrix& c);

// Standard single-head causal attention over a K x d sequence:
// softmax(Q K^T / sqrt(d) + mask) V. For the Rotary scheme pass
// rope_base > 0 to rotate Q and K rows by position before scoring.
Matrix causal_attention(const Matrix& e, const AttentionWeights& w,
                        double rope_base = 0.0);

// Kernelized causal attention:
//   softmax((E Wq Wk^T E^T U) / sqrt(d) + mask) L E Wv
// U right-multiplies the raw scores before scaling and masking.
Matrix kernel_attention(const Matrix& e, const AttentionWeights& w, const Matrix& upper,
                        const Matrix& lower);

// Pairwise-dimension rotation of each row by angle pos * base^(-2i/d).
Matrix rope_rotate(const Matrix& x, double base);

// Returns the post-softmax attention map of causal/kernel attention
// (for heatmap dumps and probes).
Matrix causal_attention_map(const Matrix& e, const AttentionWeights& w,
                            double rope_base = 0.0);
Matrix kernel_attention_map(const Matrix& e, const AttentionWeights& w,
                            const Matrix& upper);

}  // namespace poskern
