#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace poskern {

struct CheckResult {
    std::string name;
    bool pass = false;
    int trials = 0;
    int skipped = 0;        // e.g. permutation stabilizes the kernel
    double worst = 0.0;     // worst observed deviation, check-specific
    std::string detail;
};

struct VerifyReport {
    std::vector<CheckResult> checks;
    bool all_pass() const;
    std::string text() const;
    std::string json() const;
};

// Permutation equivariance of the unnormalized QKV block, plus the
// constructed counterexample showing the identity fails under causal
// masking.
CheckResult check_equivariance(std::uint64_t seed, int trials = 20);

// Both clauses of the kernel permutation test:
//   Y(XR, C) == R^T Y(X, R C R^T)   (<= 1e-10 relative)
//   Y(XR, C) != R^T Y(X, C)         (> 1e-6 max-norm, unless R stabilizes C)
// Trials where R C R^T == C are skipped with a note; the C = I negative
// control must report a vacuous inequality clause.
CheckResult check_kernel_breaks_equivariance(std::uint64_t seed, int trials = 20);

// End-to-end future-perturbation invariance of model logits, exact
// equality, all positional schemes and all six kernel modes; includes
// the corrupted-U negative control which must violate causality.
CheckResult check_causality(std::uint64_t seed, int trials = 10);

// Kernel parameter census across the six modes, B in {1,2,3} and
// K in {1,5,32}; default mode must equal B*K + K(K+1)/2.
CheckResult check_param_count();

// Finite-difference gradient checks per op and for the full model
// (d=4, K=6, B=2, N=12, dropout off), tol 1e-4, step 1e-5, 3 seeds.
CheckResult check_gradients(std::uint64_t seed);

VerifyReport run_all_checks(std::uint64_t seed, int trials = 20);

}  // namespace poskern
