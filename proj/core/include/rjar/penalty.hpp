#pragma once

#include <utility>
#include <vector>

#include "rjar/ridge_kernel.hpp"

namespace rjar {

// Outcome of the penalty search max argmax_{gamma in Gamma} S(gamma),
// S(gamma) = sum_{i != j} (P_gamma_ij)^2. The admissible set is [0, inf)
// when the kernel has full column rank and [gamma_floor, inf) otherwise.
struct PenaltySelection {
    double gamma_star = 0.0;
    double s_at_star = 0.0;
    // S at the exact lower endpoint: S(0) when r = k, else S(gamma_floor).
    double s_at_zero_or_floor = 0.0;
    // S(gamma_star) / r, the implied constant at omega = 1.
    double implied_c = 0.0;
    // Width (max - min) of the set of evaluated gammas whose S ties the
    // maximum within the plateau tolerance; 0 for a unique maximiser.
    double tie_set_width = 0.0;
    // The coarse grid pass, (gamma, S) in evaluation order.
    std::vector<std::pair<double, double>> search_trace;
};

struct PenaltySearchOptions {
    int grid_points = 201;
    double refine_rtol = 1e-8;   // golden-section bracket width, relative
    double plateau_rtol = 1e-10; // ties within this relative S gap
};

// Global grid pass over log-spaced penalties plus the exact lower endpoint,
// golden-section refinement inside the bracketing triple, then the largest
// gamma among all evaluated ties.
PenaltySelection select_gamma(const RidgeKernel& kern, double gamma_floor = 1.0,
                              const PenaltySearchOptions& opts = {});

struct Diagnostics {
    double gamma_star = 0.0;
    double s_at_star = 0.0;
    double implied_c = 0.0; // S(gamma_star) / r
    double max_diag = 0.0;  // max_i P_ii at gamma_star
    Eigen::Index r = 0;
    Eigen::Index k = 0;
    Eigen::Index n = 0;
    // Heuristic only: reported, never enforced.
    bool questionable = false;
};

Diagnostics assumption_diagnostics(const RidgeKernel& kern,
                                   const PenaltySelection& sel);

} // namespace rjar
