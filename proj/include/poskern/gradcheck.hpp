#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "poskern/autograd.hpp"

namespace poskern {

struct GradCheckReport {
    bool pass = false;
    bool probe_error = false;   // non-finite loss at a probe point
    bool step_in_range = true;  // recommended step window is [1e-5, 1e-3]
    double max_rel_dev = 0.0;
    double step = 0.0;
    double tol = 0.0;
    std::string worst_param;
    std::string message;
};

// Compares analytic gradients against central finite differences.
// `loss_and_grad` must run forward + backward and leave gradients in
// the given parameters; only its return value is used at probe points.
// Deviation is |a - n| / max(1, |a|, |n|), so near-zero gradients are
// judged on an absolute scale commensurate with unit-magnitude losses.
inline GradCheckReport grad_check(const std::function<double()>& loss_and_grad,
                                  const std::vector<Parameter*>& params,
                                  double step, double tol) {
    GradCheckReport rep;
    rep.step = step;
    rep.tol = tol;
    rep.step_in_range = step >= 1e-5 && step <= 1e-3;

    for (Parameter* p : params) p->zero_grad();
    const double base = loss_and_grad();
    if (!std::isfinite(base)) {
        rep.probe_error = true;
        rep.message = "non-finite loss at base point";
        return rep;
    }
    std::vector<Matrix> analytic;
    analytic.reserve(params.size());
    for (Parameter* p : params) analytic.push_back(p->grad);

    for (size_t pi = 0; pi < params.size(); ++pi) {
        Parameter& p = *params[pi];
        for (Eigen::Index i = 0; i < p.value.size(); ++i) {
            const double saved = p.value(i);
            p.value(i) = saved + step;
            for (Parameter* q : params) q->zero_grad();
            const double up = loss_and_grad();
            p.value(i) = saved - step;
            for (Parameter* q : params) q->zero_grad();
            const double dn = loss_and_grad();
            p.value(i) = saved;
            if (!std::isfinite(up) || !std::isfinite(dn)) {
                rep.probe_error = true;
                rep.message = "non-finite loss probing " + p.name;
                return rep;
            }
            const double numeric = (up - dn) / (2.0 * step);
            const double a = analytic[pi](i);
            const double dev =
                std::abs(a - numeric) /
                std::max({1.0, std::abs(a), std::abs(numeric)});
            if (dev > rep.max_rel_dev) {
                rep.max_rel_dev = dev;
                rep.worst_param = p.name;
            }
        }
    }
    rep.pass = rep.max_rel_dev < tol;
    if (!rep.pass && !rep.step_in_range)
        rep.message = "step " + std::to_string(step) +
                      " outside recommended range [1e-5, 1e-3]";
    return rep;
}

}  // namespace poskern
