#pragma once

#include <functional>
#include <vector>

#include "sws/tensor.hpp"

namespace sws {

struct GradCheckReport {
    double max_rel_error = 0.0;
    double max_abs_error = 0.0;
    std::size_t checked = 0;
    bool passed = false;
};

/// Compares analytic gradients of a scalar function against central
/// differences. Per entry the error is |a - n| / max(|a|, |n|, s) where s is
/// 1e-3 of the largest gradient magnitude seen, so entries that are zero up
/// to rounding do not dominate the report.
GradCheckReport grad_check(const std::function<TensorD(const TensorD&)>& f, TensorD x, double step, double tol);

/// Same check over several leaves of one function (e.g. every model tensor).
GradCheckReport grad_check(const std::function<TensorD()>& f, std::vector<TensorD> leaves, double step,
                           double tol);

}  // namespace sws
