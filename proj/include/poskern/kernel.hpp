#pragma once

#include <string>

#include "poskern/matrix.hpp"

namespace poskern {

enum class FactorStructure { Toeplitz, Full };

// Ablation axes for the positional kernel C = U * L: structure of each
// triangular factor (the three studied combinations are
// Toeplitz-Toeplitz, Toeplitz-Full and Full-Toeplitz) crossed with
// per-layer vs shared parameterization. The default is a per-layer
// Toeplitz U with a single Full L shared across layers.
struct KernelMode {
    FactorStructure upper = FactorStructure::Toeplitz;
    FactorStructure lower = FactorStructure::Full;
    bool share_upper = false;
    bool share_lower = true;

    static KernelMode parse(const std::string& structure, const std::string& sharing);
    std::string str() const;
};

// Number of parameters for one factor instance.
inline long factor_param_count(FactorStructure s, long k) {
    return s == FactorStructure::Toeplitz ? k : k * (k + 1) / 2;
}

// Materialize a K x K upper-triangular factor. Toeplitz layout takes K
// diagonal values (entry (i,j) = diagonals[j-i]); Full takes
// K(K+1)/2 values packed row-major over the upper triangle.
Matrix materialize_upper(FactorStructure s, const Vector& params, int k);

// Mirror of materialize_upper with transposed layout: Toeplitz entry
// (i,j) = diagonals[i-j]; Full packs the lower triangle row-major.
Matrix materialize_lower(FactorStructure s, const Vector& params, int k);

// Parameter vector that materializes to the identity. The Full packing
// differs between the upper and lower layouts, hence the flag.
Vector identity_factor_params(FactorStructure s, int k, bool upper);

// C = U * L, checked for the respective triangularity of the factors.
Matrix kernel_matrix(const Matrix& upper, const Matrix& lower);

// Learnable parameters added by the kernel for B attention blocks and
// window K. Default mode gives B*K + K(K+1)/2.
long extra_param_count(long b, long k, const KernelMode& mode);

}  // namespace poskern
