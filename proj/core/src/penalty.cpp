#include "rjar/penalty.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace rjar {

namespace {

struct Sample {
    double gamma;
    double s;
};

} // namespace

PenaltySelection select_gamma(const RidgeKernel& kern, double gamma_floor,
                              const PenaltySearchOptions& opts) {
    if (!(gamma_floor > 0.0)) {
        throw DomainError("gamma_floor must be positive");
    }
    if (opts.grid_points < 3) {
        throw DomainError("penalty grid needs at least 3 points");
    }

    const bool full_rank = (kern.r == kern.k);
    const double endpoint = full_rank ? 0.0 : gamma_floor;

    const double d_min_sq = kern.d(kern.r - 1) * kern.d(kern.r - 1);
    const double d_max_sq = kern.d(0) * kern.d(0);
    const double grid_lo = std::max(gamma_floor * 1e-3, 1e-6 * d_min_sq);
    const double grid_hi = std::max(1e6 * d_max_sq, 10.0 * grid_lo);

    auto s_of = [&](double gamma) { return offdiag_sq_sum(kern, gamma); };

    PenaltySelection sel;
    std::vector<Sample> evals; // every admissible evaluation, incl. refinement
    evals.reserve(opts.grid_points + 64);

    const double s_endpoint = s_of(endpoint);
    evals.push_back({endpoint, s_endpoint});
    sel.search_trace.emplace_back(endpoint, s_endpoint);
    sel.s_at_zero_or_floor = s_endpoint;

    const double log_lo = std::log(grid_lo);
    const double log_hi = std::log(grid_hi);
    for (int i = 0; i < opts.grid_points; ++i) {
        const double t = static_cast<double>(i) / (opts.grid_points - 1);
        const double gamma = std::exp(log_lo + t * (log_hi - log_lo));
        if (gamma < endpoint) continue; // below the admissible set
        const double s = s_of(gamma);
        evals.push_back({gamma, s});
        sel.search_trace.emplace_back(gamma, s);
    }

    std::sort(evals.begin(), evals.end(),
              [](const Sample& a, const Sample& b) { return a.gamma < b.gamma; });

    std::size_t best = 0;
    for (std::size_t i = 1; i < evals.size(); ++i) {
        if (evals[i].s > evals[best].s) best = i;
    }

    // A (numerically) diagonal projection has no off-diagonal mass to
    // maximise and no test statistic either; refuse it here.
    const double vanish_tol = 1e-14 * static_cast<double>(kern.r);
    bool all_vanishing = true;
    for (const Sample& ev : evals) {
        if (ev.s > vanish_tol) {
            all_vanishing = false;
            break;
        }
    }
    if (all_vanishing) {
        throw DiagonalProjectionError(
            "off-diagonal mass of the ridge projection vanishes on the "
            "admissible penalty set; the projection is (numerically) diagonal");
    }

    // Golden-section refinement inside the bracketing triple of the grid
    // argmax. A boundary argmax has no interior bracket and stands as-is.
    if (best > 0 && best + 1 < evals.size()) {
        double a = evals[best - 1].gamma;
        double c = evals[best + 1].gamma;
        constexpr double invphi = 0.6180339887498949;
        double b1 = c - invphi * (c - a);
        double b2 = a + invphi * (c - a);
        double f1 = s_of(b1);
        double f2 = s_of(b2);
        evals.push_back({b1, f1});
        evals.push_back({b2, f2});
        while ((c - a) > opts.refine_rtol * std::max(c, 1e-300)) {
            if (f1 < f2) {
                a = b1;
                b1 = b2;
                f1 = f2;
                b2 = a + invphi * (c - a);
                f2 = s_of(b2);
                evals.push_back({b2, f2});
            } else {
                c = b2;
                b2 = b1;
                f2 = f1;
                b1 = c - invphi * (c - a);
                f1 = s_of(b1);
                evals.push_back({b1, f1});
            }
        }
    }

    double s_max = evals.front().s;
    for (const Sample& ev : evals) s_max = std::max(s_max, ev.s);

    // The selection rule is the largest element of the argmax set; in
    // floating point the argmax becomes a plateau of near-ties.
    const double plateau = s_max - opts.plateau_rtol * std::abs(s_max);
    double gamma_star = 0.0;
    double tie_lo = std::numeric_limits<double>::infinity();
    double s_at_star = 0.0;
    for (const Sample& ev : evals) {
        if (ev.s >= plateau) {
            tie_lo = std::min(tie_lo, ev.gamma);
            if (ev.gamma >= gamma_star) {
                gamma_star = ev.gamma;
                s_at_star = ev.s;
            }
        }
    }

    sel.gamma_star = gamma_star;
    sel.s_at_star = s_at_star;
    sel.implied_c = s_at_star / static_cast<double>(kern.r);
    sel.tie_set_width = gamma_star - tie_lo;
    return sel;
}

Diagnostics assumption_diagnostics(const RidgeKernel& kern,
                                   const PenaltySelection& sel) {
    Diagnostics diag;
    diag.gamma_star = sel.gamma_star;
    diag.s_at_star = sel.s_at_star;
    diag.implied_c = sel.s_at_star / static_cast<double>(kern.r);
    diag.max_diag = ridge_diag(kern, sel.gamma_star).maxCoeff();
    diag.r = kern.r;
    diag.k = kern.k;
    diag.n = kern.n;
    diag.questionable = diag.implied_c < 0.01;
    return diag;
}

} // namespace rjar
