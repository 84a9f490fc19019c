#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "cardioxnet/errors.hpp"

namespace cardioxnet {

// One checked scalar parameter: where it lives and how the two gradient
// estimates compared there.
struct GradCheckEntry {
    std::string name;
    std::size_t index = 0;
    double analytic = 0.0;
    double numeric = 0.0;
};

struct GradCheckReport {
    bool ok = false;
    double max_rel_error = 0.0;
    double tolerance = 0.0;
    std::size_t checked = 0;
    GradCheckEntry worst;

    std::string describe() const {
        return "max rel error " + std::to_string(max_rel_error) + " vs tol " +
               std::to_string(tolerance) + " at " + worst.name + "[" + std::to_string(worst.index) +
               "] (analytic " + std::to_string(worst.analytic) + ", numeric " +
               std::to_string(worst.numeric) + ", " + std::to_string(checked) + " params checked)";
    }
};

// A view over one named block of scalars plus the analytic gradient the
// implementation produced for it. The checker perturbs values in place.
struct GradCheckParam {
    std::string name;
    double* values = nullptr;
    const double* analytic_grad = nullptr;
    std::size_t count = 0;
};

// Central-difference gradient verification.
//
// For each scalar p: h = 1e-5 * max(1, |p|), numeric = (f(p+h) - f(p-h)) / 2h.
// The report compares infinity norms: max |analytic - numeric| over all
// scalars, divided by max(1, max |numeric|). Non-finite values from either
// side fail immediately with the offending location.
inline GradCheckReport grad_check(const std::vector<GradCheckParam>& params,
                                  const std::function<double()>& loss, double tolerance) {
    GradCheckReport report;
    report.tolerance = tolerance;

    double max_abs_diff = 0.0;
    double max_abs_numeric = 0.0;
    for (const GradCheckParam& block : params) {
        for (std::size_t i = 0; i < block.count; ++i) {
            const double saved = block.values[i];
            const double h = 1e-5 * std::max(1.0, std::fabs(saved));
            block.values[i] = saved + h;
            const double up = loss();
            block.values[i] = saved - h;
            const double down = loss();
            block.values[i] = saved;

            const double numeric = (up - down) / (2.0 * h);
            const double analytic = block.analytic_grad[i];
            if (!std::isfinite(numeric) || !std::isfinite(analytic)) {
                throw NumericError("grad_check: non-finite gradient at " + block.name + "[" +
                                   std::to_string(i) + "] (analytic " + std::to_string(analytic) +
                                   ", numeric " + std::to_string(numeric) + ")");
            }

            const double diff = std::fabs(analytic - numeric);
            if (diff > max_abs_diff) {
                max_abs_diff = diff;
                report.worst = {block.name, i, analytic, numeric};
            }
            max_abs_numeric = std::max(max_abs_numeric, std::fabs(numeric));
            ++report.checked;
        }
    }

    report.max_rel_error = max_abs_diff / std::max(1.0, max_abs_numeric);
    report.ok = report.checked > 0 && report.max_rel_error <= tolerance;
    return report;
}

}  // namespace cardioxnet
