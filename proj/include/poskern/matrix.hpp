#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace poskern {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Additive sentinel used for the causal mask. Large enough that
// exp(x - sentinel) underflows to exactly 0.0 for any sane logit x.
inline constexpr double kMaskSentinel = -1e9;

inline std::string shape_str(const Matrix& m) {
    return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

inline void require_finite(const Matrix& m, const char* what) {
    if (!m.allFinite())
        throw std::runtime_error(std::string("non-finite entries in ") + what);
}

// Standard product with an explicit shape check. Eigen asserts in debug
// builds only; the library contract requires a named error in all builds.
inline Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows())
        throw std::invalid_argument("matmul: incompatible shapes " + shape_str(a) +
                                    " x " + shape_str(b));
    return a * b;
}

// Row-wise softmax of a square logit matrix under the causal mask:
// entry (i,j) with j > i is inadmissible. Semantically this is
// softmax(logits + sentinel-mask); the masked entries are forced to an
// exact 0 so the causality contract is bit-level, not approximate.
inline Matrix masked_softmax_rows(const Matrix& logits) {
    if (logits.rows() != logits.cols())
        throw std::invalid_argument("masked_softmax_rows: logits must be square, got " +
                                    shape_str(logits));
    const Eigen::Index k = logits.rows();
    Matrix out = Matrix::Zero(k, k);
    for (Eigen::Index i = 0; i < k; ++i) {
        double m = logits(i, 0);
        for (Eigen::Index j = 1; j <= i; ++j) m = std::max(m, logits(i, j));
        double denom = 0.0;
        for (Eigen::Index j = 0; j <= i; ++j) {
            out(i, j) = std::exp(logits(i, j) - m);
            denom += out(i, j);
        }
        for (Eigen::Index j = 0; j <= i; ++j) out(i, j) /= denom;
    }
    return out;
}

// Plain row-wise softmax (no mask), max-subtracted.
inline Matrix softmax_rows(const Matrix& logits) {
    Matrix out(logits.rows(), logits.cols());
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        const double m = logits.row(i).maxCoeff();
        out.row(i) = (logits.row(i).array() - m).exp();
        out.row(i) /= out.row(i).sum();
    }
    return out;
}

// Row-wise layer normalization with affine gain/bias.
inline Matrix layer_norm(const Matrix& x, const Vector& gain, const Vector& bias,
                         double eps = 1e-5) {
    if (gain.size() != x.cols() || bias.size() != x.cols())
        throw std::invalid_argument("layer_norm: gain/bias length must equal cols");
    Matrix out(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const double mu = x.row(i).mean();
        const double var = (x.row(i).array() - mu).square().mean();
        const double sigma = std::sqrt(var + eps);
        out.row(i) =
            ((x.row(i).array() - mu) / sigma) * gain.transpose().array() +
            bias.transpose().array();
    }
    return out;
}

}  // namespace poskern
