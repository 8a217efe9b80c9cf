#include "rjar/confset.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace rjar {

void check_applicable(TestName test, Eigen::Index r, Eigen::Index k,
                      Eigen::Index n) {
    if (test == TestName::Cms || test == TestName::Ms) {
        if (r < k) {
            throw NotApplicableError(
                to_string(test) +
                " requires the unregularised projection, which does not exist "
                "when rank(Z) < k (here r = " + std::to_string(r) +
                ", k = " + std::to_string(k) + ")");
        }
        if (k >= n) {
            throw NotApplicableError(to_string(test) +
                                     " requires k < n (here k = " +
                                     std::to_string(k) +
                                     ", n = " + std::to_string(n) + ")");
        }
    }
}

std::vector<Eigen::VectorXd> linear_grid(double lo, double hi, int points) {
    if (points < 1) {
        throw DomainError("grid needs at least one point");
    }
    std::vector<Eigen::VectorXd> grid;
    grid.reserve(static_cast<std::size_t>(points));
    for (int i = 0; i < points; ++i) {
        const double t = points == 1 ? 0.0
                                     : static_cast<double>(i) / (points - 1);
        Eigen::VectorXd b(1);
        b(0) = lo + t * (hi - lo);
        grid.push_back(std::move(b));
    }
    return grid;
}

ConfidenceSet invert(const PartialledData& pd, const RidgeKernel& kern,
                     const PenaltySelection& sel, TestName test,
                     const std::vector<Eigen::VectorXd>& grid, double alpha,
                     const InvertOptions& options) {
    if (grid.empty()) {
        throw DomainError("confidence-set grid is empty");
    }
    if (!(alpha > 0.0 && alpha < 1.0)) {
        throw DomainError("alpha must lie in (0, 1)");
    }
    check_applicable(test, kern.r, kern.k, kern.n);

    ConfidenceSet cs;
    cs.grid = grid;
    cs.level = 1.0 - alpha;
    cs.test_name = test;
    cs.accepted.resize(grid.size(), false);
    cs.results.resize(grid.size());

    const double q_normal = normal_quantile(1.0 - alpha);

    // Per-test preparation shared across the whole grid.
    std::optional<RjarContext> rjar_ctx;
    std::optional<CmsContext> cms_ctx;
    std::optional<MsContext> ms_ctx;
    double sup_cv = 0.0;
    switch (test) {
        case TestName::Rjar:
            rjar_ctx.emplace(kern, sel, options.materialize_threshold);
            break;
        case TestName::Cms:
            cms_ctx.emplace(materialize(kern, 0.0, /*force=*/false,
                                        options.materialize_threshold));
            break;
        case TestName::Ms:
            ms_ctx.emplace(materialize(kern, 0.0, /*force=*/false,
                                       options.materialize_threshold));
            break;
        case TestName::SupScore:
            sup_cv = sup_score_critical_value(alpha, pd.k_eff, pd.n,
                                              options.c_bcch,
                                              options.supscore_scaling);
            break;
    }

    for (std::size_t idx = 0; idx < grid.size(); ++idx) {
        const Eigen::VectorXd e = structural_residuals(pd, grid[idx]);
        TestResult res;
        res.test_name = test;
        res.alpha = alpha;
        double phi = 0.0;
        switch (test) {
            case TestName::Rjar:
                res.statistic = rjar_ctx->statistic(e, &phi);
                res.variance_estimate = phi;
                res.gamma_used = sel.gamma_star;
                res.critical_value = q_normal;
                res.reject = res.statistic > res.critical_value;
                res.assumption3_questionable = sel.implied_c < 0.01;
                break;
            case TestName::Cms:
                res.statistic = cms_ctx->statistic(e, &phi);
                res.variance_estimate = phi;
                res.critical_value = q_normal;
                res.reject = res.statistic > res.critical_value;
                break;
            case TestName::Ms: {
                const std::optional<double> stat = ms_ctx->statistic(e, &phi);
                res.variance_estimate = phi;
                res.critical_value = q_normal;
                if (!stat) {
                    res.statistic = std::numeric_limits<double>::quiet_NaN();
                    res.reject = false;
                    res.negative_variance_no_reject = true;
                } else {
                    res.statistic = *stat;
                    res.reject = res.statistic > res.critical_value;
                }
                break;
            }
            case TestName::SupScore:
                res.statistic = sup_score_statistic(pd.Z_t, e);
                res.critical_value = sup_cv;
                res.reject = res.statistic > res.critical_value;
                break;
        }
        cs.results[idx] = res;
        cs.accepted[idx] = !res.reject;
    }

    for (std::size_t i = 0; i < cs.accepted.size(); ++i) {
        if (!cs.accepted[i]) continue;
        std::size_t j = i;
        while (j + 1 < cs.accepted.size() && cs.accepted[j + 1]) ++j;
        cs.components.emplace_back(i, j);
        i = j;
    }
    return cs;
}

} // namespace rjar
