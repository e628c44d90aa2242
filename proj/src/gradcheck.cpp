#include "sws/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace sws {

GradCheckReport grad_check(const std::function<TensorD()>& f, std::vector<TensorD> leaves, double step, double tol) {
    for (auto& leaf : leaves) leaf.set_requires_grad(true).zero_grad();
    f().backward();
    std::vector<std::vector<double>> analytic;
    for (auto& leaf : leaves) analytic.emplace_back(leaf.grad().begin(), leaf.grad().end());

    std::vector<std::vector<double>> numeric(leaves.size());
    double scale = 0.0;
    {
        NoGradGuard no_grad;
        for (std::size_t t = 0; t < leaves.size(); ++t) {
            auto values = leaves[t].data();
            numeric[t].resize(values.size());
            for (std::size_t i = 0; i < values.size(); ++i) {
                const double saved = values[i];
                values[i] = saved + step;
                const double up = f().item();
                values[i] = saved - step;
                const double down = f().item();
                values[i] = saved;
                numeric[t][i] = (up - down) / (2.0 * step);
                scale = std::max({scale, std::abs(numeric[t][i]), std::abs(analytic[t][i])});
            }
        }
    }

    GradCheckReport report;
    const double floor = std::max(1e-3 * scale, 1e-300);
    for (std::size_t t = 0; t < leaves.size(); ++t) {
        for (std::size_t i = 0; i < numeric[t].size(); ++i) {
            const double a = analytic[t][i], n = numeric[t][i];
            const double abs_err = std::abs(a - n);
            report.max_abs_error = std::max(report.max_abs_error, abs_err);
            report.max_rel_error =
                std::max(report.max_rel_error, abs_err / std::max({std::abs(a), std::abs(n), floor}));
            ++report.checked;
        }
    }
    report.passed = report.max_rel_error < tol;
    return report;
}

GradCheckReport grad_check(const std::function<TensorD(const TensorD&)>& f, TensorD x, double step, double tol) {
    return grad_check([&] { return f(x); }, std::vector<TensorD>{x}, step, tol);
}

}  // namespace sws
