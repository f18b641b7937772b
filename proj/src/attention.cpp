#include "poskern/attention.hpp"

#include <cmath>
#include <stdexcept>

namespace poskern {

PositionalScheme parse_scheme(const std::string& name) {
    if (name == "nope") return PositionalScheme::NoPE;
    if (name == "classic") return PositionalScheme::ClassicAdditive;
    if (name == "rope") return PositionalScheme::Rotary;
    if (name == "kernel") return PositionalScheme::Kernel;
    throw std::invalid_argument("unknown positional scheme '" + name +
                                "' (expected nope, classic, rope or kernel)");
}

std::string scheme_str(PositionalScheme s) {
    switch (s) {
        case PositionalScheme::NoPE: return "nope";
        case PositionalScheme::ClassicAdditive: return "classic";
        case PositionalScheme::Rotary: return "rope";
        case PositionalScheme::Kernel: return "kernel";
    }
    return "?";
}

namespace {
void check_one_hot(const Matrix& x) {
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
        int ones = 0;
        for (Eigen::Index i = 0; i < x.rows(); ++i) {
            const double v = x(i, j);
            if (v == 1.0)
                ++ones;
            else if (v != 0.0)
                throw std::invalid_argument("column " + std::to_string(j) +
                                            " is not one-hot");
        }
        if (ones != 1)
            throw std::invalid_argument("column " + std::to_string(j) +
                                        " is not one-hot");
    }
}

void check_triangular(const Matrix& upper, const Matrix& lower) {
    for (Eigen::Index i = 0; i < upper.rows(); ++i)
        for (Eigen::Index j = 0; j < i; ++j) {
            if (upper(i, j) != 0.0)
                throw std::invalid_argument("kernel_attention: U not upper triangular");
            if (lower(j, i) != 0.0)
                throw std::invalid_argument("kernel_attention: L not lower triangular");
        }
}
}  // namespace

Matrix qkv_y(const Matrix& x, const Matrix& m, const AttentionWeights& w) {
    const Matrix shared = m * w.wq * w.wk.transpose() * m.transpose();
    return (x.transpose() * shared * x) * x.transpose() * m;
}

Matrix qkv_y_kernel(const Matrix& x, const Matrix& m, const AttentionWeights& w,
                    const Matrix& c) {
    const Matrix shared = m * w.wq * w.wk.transpose() * m.transpose();
    return (x.transpose() * shared * x) * c * x.transpose() * m;
}

Matrix vanilla_qkv_oracle(const Matrix& x, const Matrix& m, const AttentionWeights& w) {
    check_one_hot(x);
    return qkv_y(x, m, w) * w.wv;
}

Matrix rope_rotate(const Matrix& x, double base) {
    const Eigen::Index d = x.cols();
    if (d % 2 != 0)
        throw std::invalid_argument("rope_rotate: embedding dim must be even, got " +
                                    std::to_string(d));
    Matrix out(x.rows(), d);
    for (Eigen::Index p = 0; p < x.rows(); ++p) {
        for (Eigen::Index i = 0; i < d / 2; ++i) {
            const double theta =
                static_cast<double>(p) *
                std::pow(base, -2.0 * static_cast<double>(i) / static_cast<double>(d));
            const double c = std::cos(theta), s = std::sin(theta);
            const double x0 = x(p, 2 * i), x1 = x(p, 2 * i + 1);
            out(p, 2 * i) = x0 * c - x1 * s;
            out(p, 2 * i + 1) = x0 * s + x1 * c;
        }
    }
    return out;
}

Matrix causal_attention_map(const Matrix& e, const AttentionWeights& w,
                            double rope_base) {
    const double d = static_cast<double>(e.cols());
    Matrix q = e * w.wq;
    Matrix k = e * w.wk;
    if (rope_base > 0.0) {
        q = rope_rotate(q, rope_base);
        k = rope_rotate(k, rope_base);
    }
    return masked_softmax_rows((q * k.transpose()) / std::sqrt(d));
}

Matrix causal_attention(const Matrix& e, const AttentionWeights& w, double rope_base) {
    return causal_attention_map(e, w, rope_base) * (e * w.wv);
}

Matrix kernel_attention_map(const Matrix& e, const AttentionWeights& w,
                            const Matrix& upper) {
    const double d = static_cast<double>(e.cols());
    const Matrix scores = e * w.wq * w.wk.transpose() * e.transpose();
    return masked_softmax_rows((scores * upper) / std::sqrt(d));
}

Matrix kernel_attention(const Matrix& e, const AttentionWeights& w, const Matrix& upper,
                        const Matrix& lower) {
    if (upper.rows() != e.rows() || upper.cols() != e.rows() ||
        lower.rows() != e.rows() || lower.cols() != e.rows())
        throw std::invalid_argument("kernel_attention: factors must be KxK");
    check_triangular(upper, lower);
    return kernel_attention_map(e, w, upper) * (lower * (e * w.wv));
}

}  // namespace poskern
