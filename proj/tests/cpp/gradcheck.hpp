#pragma once

#include "slotbert/autodiff.hpp"

#include <cmath>
#include <functional>
#include <vector>

// Central finite-difference oracle for the tape gradients. The scalar loss is
// recomputed from scratch per perturbation so the check stays independent of
// the backward pass it validates.
namespace gradcheck {

using slotbert::ag::Mat;
using slotbert::ag::Var;

struct Result {
    double max_rel_error = 0.0;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
};

// loss_fn must rebuild the graph from the current values of `inputs`
inline Result check(const std::function<double()>& loss_fn, const std::vector<Var>& inputs,
                    const std::function<void()>& backward_fn, double eps = 1e-5) {
    slotbert::ag::zero_grad(inputs);
    backward_fn(); // fills input->grad analytically

    Result res;
    for (const Var& v : inputs) {
        for (long i = 0; i < v->rows(); ++i) {
            for (long j = 0; j < v->cols(); ++j) {
                double saved = v->val(i, j);
                v->val(i, j) = saved + eps;
                double up = loss_fn();
                v->val(i, j) = saved - eps;
                double down = loss_fn();
                v->val(i, j) = saved;
                double numeric = (up - down) / (2.0 * eps);
                double analytic = v->grad.size() ? v->grad(i, j) : 0.0;
                double denom = std::max({std::abs(numeric), std::abs(analytic), 1e-8});
                double rel = std::abs(numeric - analytic) / denom;
                if (rel > res.max_rel_error) {
                    res.max_rel_error = rel;
                    res.worst_analytic = analytic;
                    res.worst_numeric = numeric;
                }
            }
        }
    }
    return res;
}

} // namespace gradcheck
