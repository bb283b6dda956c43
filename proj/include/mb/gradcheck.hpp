#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <vector>

#include "mb/tensor.hpp"

namespace mb {

struct GradCheckResult {
    double max_rel_err = 0.0;
    std::size_t worst_param = 0;
    std::size_t worst_index = 0;
    double analytic_at_worst = 0.0;
    double numeric_at_worst = 0.0;
};

// Central differences (f(p+eps) - f(p-eps)) / 2eps against an analytic
// gradient, elementwise. Relative error uses max(|a|, |n|, 1e-8) as the
// denominator. Reports; never throws on mismatch. Double precision only.
inline GradCheckResult finite_difference_gradcheck(const std::function<double()>& loss_fn,
                                                   std::vector<Tensor<double>>& params,
                                                   const std::vector<Tensor<double>>& analytic,
                                                   double eps = 1e-5) {
    GradCheckResult res;
    for (std::size_t i = 0; i < params.size(); ++i) {
        for (std::size_t j = 0; j < params[i].numel(); ++j) {
            const double saved = params[i][j];
            params[i][j] = saved + eps;
            const double fp = loss_fn();
            params[i][j] = saved - eps;
            const double fm = loss_fn();
            params[i][j] = saved;
            const double numeric = (fp - fm) / (2.0 * eps);
            const double a = analytic[i][j];
            const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
            const double rel = std::abs(a - numeric) / denom;
            if (rel > res.max_rel_err) {
                res.max_rel_err = rel;
                res.worst_param = i;
                res.worst_index = j;
                res.analytic_at_worst = a;
                res.numeric_at_worst = numeric;
            }
        }
    }
    return res;
}

}  // namespace mb
