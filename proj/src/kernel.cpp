#include "poskern/kernel.hpp"

#include <stdexcept>

namespace poskern {

KernelMode KernelMode::parse(const std::string& structure, const std::string& sharing) {
    KernelMode m;
    if (structure == "toeplitz-toeplitz" || structure == "T-T") {
        m.upper = FactorStructure::Toeplitz;
        m.lower = FactorStructure::Toeplitz;
    } else if (structure == "toeplitz-full" || structure == "T-F") {
        m.upper = FactorStructure::Toeplitz;
        m.lower = FactorStructure::Full;
    } else if (structure == "full-toeplitz" || structure == "F-T") {
        m.upper = FactorStructure::Full;
        m.lower = FactorStructure::Toeplitz;
    } else {
        throw std::invalid_argument("unknown kernel structure '" + structure +
                                    "' (expected T-T, T-F or F-T)");
    }
    if (sharing == "per-layer") {
        m.share_upper = false;
        m.share_lower = false;
    } else if (sharing == "shared") {
        m.share_upper = true;
        m.share_lower = true;
    } else if (sharing == "default") {
        m.share_upper = false;
        m.share_lower = true;
    } else {
        throw std::invalid_argument("unknown kernel sharing '" + sharing +
                                    "' (expected per-layer, shared or default)");
    }
    return m;
}

std::string KernelMode::str() const {
    auto s = [](FactorStructure f) { return f == FactorStructure::Toeplitz ? "T" : "F"; };
    std::string out = std::string(s(upper)) + "-" + s(lower);
    out += share_upper ? "/sharedU" : "/perlayerU";
    out += share_lower ? "/sharedL" : "/perlayerL";
    return out;
}

Matrix materialize_upper(FactorStructure s, const Vector& params, int k) {
    if (params.size() != factor_param_count(s, k))
        throw std::invalid_argument(
            "materialize_upper: expected " +
            std::to_string(factor_param_count(s, k)) + " parameters for K=" +
            std::to_string(k) + ", got " + std::to_string(params.size()));
    Matrix u = Matrix::Zero(k, k);
    if (s == FactorStructure::Toeplitz) {
        for (int i = 0; i < k; ++i)
            for (int j = i; j < k; ++j) u(i, j) = params(j - i);
    } else {
        int idx = 0;
        for (int i = 0; i < k; ++i)
            for (int j = i; j < k; ++j) u(i, j) = params(idx++);
    }
    return u;
}

Matrix materialize_lower(FactorStructure s, const Vector& params, int k) {
    if (params.size() != factor_param_count(s, k))
        throw std::invalid_argument(
            "materialize_lower: expected " +
            std::to_string(factor_param_count(s, k)) + " parameters for K=" +
            std::to_string(k) + ", got " + std::to_string(params.size()));
    Matrix l = Matrix::Zero(k, k);
    if (s == FactorStructure::Toeplitz) {
        for (int i = 0; i < k; ++i)
            for (int j = 0; j <= i; ++j) l(i, j) = params(i - j);
    } else {
        int idx = 0;
        for (int i = 0; i < k; ++i)
            for (int j = 0; j <= i; ++j) l(i, j) = params(idx++);
    }
    return l;
}

Vector identity_factor_params(FactorStructure s, int k, bool upper) {
    Vector p = Vector::Zero(factor_param_count(s, k));
    if (s == FactorStructure::Toeplitz) {
        p(0) = 1.0;  // main diagonal
    } else if (upper) {
        // upper layout: the diagonal entry is first in each packed row
        int idx = 0;
        for (int i = 0; i < k; ++i) {
            p(idx) = 1.0;
            idx += k - i;
        }
    } else {
        // lower layout: the diagonal entry is last in each packed row
        int idx = -1;
        for (int i = 0; i < k; ++i) {
            idx += i + 1;
            p(idx) = 1.0;
        }
    }
    return p;
}

Matrix kernel_matrix(const Matrix& upper, const Matrix& lower) {
    if (upper.rows() != upper.cols() || lower.rows() != lower.cols() ||
        upper.rows() != lower.rows())
        throw std::invalid_argument("kernel_matrix: factors must be square of equal size");
    const Eigen::Index k = upper.rows();
    for (Eigen::Index i = 0; i < k; ++i)
        for (Eigen::Index j = 0; j < i; ++j) {
            if (upper(i, j) != 0.0)
                throw std::invalid_argument("kernel_matrix: U has nonzero sub-diagonal entry");
            if (lower(j, i) != 0.0)
                throw std::invalid_argument("kernel_matrix: L has nonzero super-diagonal entry");
        }
    return upper * lower;
}

long extra_param_count(long b, long k, const KernelMode& mode) {
    if (b < 1 || k < 1)
        throw std::invalid_argument("extra_param_count: B and K must be >= 1");
    const long upper = factor_param_count(mode.upper, k) * (mode.share_upper ? 1 : b);
    const long lower = factor_param_count(mode.lower, k) * (mode.share_lower ? 1 : b);
    return upper + lower;
}

}  // namespace poskern
