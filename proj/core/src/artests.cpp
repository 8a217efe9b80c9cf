#include "rjar/artests.hpp"

#include <boost/math/distributions/normal.hpp>

#include <algorithm>
#include <cmath>
#include <limits>

namespace rjar {

namespace {

void check_alpha(double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) {
        throw DomainError("alpha must lie in (0, 1), got " +
                          std::to_string(alpha));
    }
}

void check_residuals(const Eigen::VectorXd& e, Eigen::Index n) {
    if (e.size() != n) {
        throw DimensionError("residual vector length does not match data");
    }
    if (!e.allFinite()) {
        throw DomainError("residual vector contains non-finite entries");
    }
}

// Number of instruments behind an unregularised projection: its trace.
Eigen::Index rank_from_trace(const Eigen::MatrixXd& P) {
    return static_cast<Eigen::Index>(std::llround(P.trace()));
}

} // namespace

std::string to_string(TestName t) {
    switch (t) {
        case TestName::Rjar: return "rjar";
        case TestName::Cms: return "cms";
        case TestName::Ms: return "ms";
        case TestName::SupScore: return "supscore";
    }
    return "unknown";
}

TestName test_from_string(const std::string& s) {
    if (s == "rjar") return TestName::Rjar;
    if (s == "cms") return TestName::Cms;
    if (s == "ms") return TestName::Ms;
    if (s == "supscore" || s == "sup") return TestName::SupScore;
    throw ConfigError("unknown test name: " + s);
}

double normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) {
        throw DomainError("quantile probability must lie in (0, 1)");
    }
    static const boost::math::normal_distribution<double> norm(0.0, 1.0);
    return boost::math::quantile(norm, p);
}

// --- RJAR --------------------------------------------------------------------

RjarContext::RjarContext(const RidgeKernel& kern, const PenaltySelection& sel,
                         Eigen::Index threshold)
    : pe_(kern, sel.gamma_star, threshold), r_(kern.r) {
    if (!(sel.s_at_star > 0.0)) {
        throw DegenerateVarianceError(
            "penalty selection has no off-diagonal mass");
    }
}

double RjarContext::statistic(const Eigen::VectorXd& e, double* phi_hat) const {
    check_residuals(e, pe_.rows());
    const double numerator = pe_.quad_form_offdiag(e);
    const double phi =
        2.0 / static_cast<double>(r_) * pe_.hadamard_sq_quad(e);
    if (phi_hat) *phi_hat = phi;
    if (!(phi > 0.0)) {
        throw DegenerateVarianceError(
            "variance estimate is not positive; the residual vector has too "
            "few nonzero entries or the projection is diagonal");
    }
    return numerator / (std::sqrt(static_cast<double>(r_)) * std::sqrt(phi));
}

TestResult rjar(const RidgeKernel& kern, const PenaltySelection& sel,
                const Eigen::VectorXd& e, double alpha) {
    check_alpha(alpha);
    RjarContext ctx(kern, sel);
    TestResult res;
    res.test_name = TestName::Rjar;
    res.alpha = alpha;
    res.gamma_used = sel.gamma_star;
    double phi = 0.0;
    res.statistic = ctx.statistic(e, &phi);
    res.variance_estimate = phi;
    res.critical_value = normal_quantile(1.0 - alpha);
    res.reject = res.statistic > res.critical_value;
    res.assumption3_questionable = sel.implied_c < 0.01;
    return res;
}

// --- CMS ----------------------------------------------------------------------

CmsContext::CmsContext(const Eigen::MatrixXd& P) {
    const Eigen::Index n = P.rows();
    if (P.cols() != n) {
        throw DimensionError("projection matrix must be square");
    }
    k_ = rank_from_trace(P);
    const Eigen::VectorXd p_diag = P.diagonal();
    if (p_diag.maxCoeff() >= 1.0 - 1e-10) {
        throw BalancedDesignError(
            "max_i P_ii approaches 1; the leverage correction is undefined");
    }
    // C = A - B with A = P + Delta, B = (I-P) D (I-D)^-1 (I-P), and
    // Delta = P D(I-D)^-1 P - (1/2) P D(I-D)^-1 - (1/2) D(I-D)^-1 P,
    // where D = diag(P).
    const Eigen::VectorXd f = p_diag.array() / (1.0 - p_diag.array()); // D(I-D)^-1
    const Eigen::MatrixXd PF = P * f.asDiagonal();
    const Eigen::MatrixXd Delta =
        PF * P - 0.5 * PF - 0.5 * f.asDiagonal() * P;
    Eigen::MatrixXd ImP = -P;
    ImP.diagonal().array() += 1.0;
    const Eigen::MatrixXd B = ImP * f.asDiagonal() * ImP;
    C_ = P + Delta - B;
    C_sq_ = C_.array().square().matrix();
    c_diag_ = C_.diagonal();
    c_sq_diag_ = C_sq_.diagonal();
}

double CmsContext::statistic(const Eigen::VectorXd& e, double* phi_hat) const {
    check_residuals(e, C_.rows());
    const Eigen::VectorXd s = e.array().square().matrix();
    const double numerator = e.dot(C_ * e) - c_diag_.dot(s);
    const double had = s.dot(C_sq_ * s) - c_sq_diag_.dot(s.array().square().matrix());
    const double phi = 2.0 / static_cast<double>(k_) * had;
    if (phi_hat) *phi_hat = phi;
    if (!(phi > 0.0)) {
        throw DegenerateVarianceError("CMS variance estimate is not positive");
    }
    return numerator / (std::sqrt(static_cast<double>(k_)) * std::sqrt(phi));
}

TestResult cms_ar(const Eigen::MatrixXd& P, const Eigen::VectorXd& e,
                  double alpha) {
    check_alpha(alpha);
    CmsContext ctx(P);
    TestResult res;
    res.test_name = TestName::Cms;
    res.alpha = alpha;
    double phi = 0.0;
    res.statistic = ctx.statistic(e, &phi);
    res.variance_estimate = phi;
    res.critical_value = normal_quantile(1.0 - alpha);
    res.reject = res.statistic > res.critical_value;
    return res;
}

// --- MS -----------------------------------------------------------------------

MsContext::MsContext(const Eigen::MatrixXd& P) : P_(P) {
    const Eigen::Index n = P.rows();
    if (P.cols() != n) {
        throw DimensionError("projection matrix must be square");
    }
    k_ = rank_from_trace(P);
    M_ = -P;
    M_.diagonal().array() += 1.0;
    p_diag_ = P.diagonal();

    weight_.resize(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            const double denom = M_(i, i) * M_(j, j) + M_(i, j) * M_(i, j);
            const double num = P(i, j) * P(i, j);
            if (denom <= 0.0) {
                if (num == 0.0) {
                    weight_(i, j) = 0.0;
                    continue;
                }
                throw BalancedDesignError(
                    "leave-one-out variance weight has zero denominator");
            }
            weight_(i, j) = num / denom;
        }
    }
}

std::optional<double> MsContext::statistic(const Eigen::VectorXd& e,
                                           double* phi_hat) const {
    check_residuals(e, P_.rows());
    const Eigen::VectorXd s = e.array().square().matrix();
    const double numerator = e.dot(P_ * e) - p_diag_.dot(s);
    const Eigen::VectorXd t = e.cwiseProduct(M_ * e); // t_i = e_i (M_i e)
    const double had = t.dot(weight_ * t) - weight_.diagonal().dot(
        t.array().square().matrix());
    const double phi = 2.0 / static_cast<double>(k_) * had;
    if (phi_hat) *phi_hat = phi;
    if (!(phi > 0.0)) {
        return std::nullopt;
    }
    return numerator / (std::sqrt(static_cast<double>(k_)) * std::sqrt(phi));
}

TestResult ms_ar(const Eigen::MatrixXd& P, const Eigen::VectorXd& e,
                 double alpha) {
    check_alpha(alpha);
    MsContext ctx(P);
    TestResult res;
    res.test_name = TestName::Ms;
    res.alpha = alpha;
    res.critical_value = normal_quantile(1.0 - alpha);
    double phi = 0.0;
    const std::optional<double> stat = ctx.statistic(e, &phi);
    res.variance_estimate = phi;
    if (!stat) {
        // Conservative reading of a non-positive variance estimate.
        res.statistic = std::numeric_limits<double>::quiet_NaN();
        res.reject = false;
        res.negative_variance_no_reject = true;
        return res;
    }
    res.statistic = *stat;
    res.reject = res.statistic > res.critical_value;
    return res;
}

// --- Sup Score ------------------------------------------------------------------

double sup_score_statistic(const Eigen::MatrixXd& Z_std,
                           const Eigen::VectorXd& e) {
    check_residuals(e, Z_std.rows());
    const double n = static_cast<double>(Z_std.rows());
    const Eigen::VectorXd num = (Z_std.transpose() * e) / std::sqrt(n);
    const Eigen::VectorXd denom_sq =
        (Z_std.array().square().matrix().transpose() *
         e.array().square().matrix()) / n;
    double best = 0.0;
    for (Eigen::Index j = 0; j < Z_std.cols(); ++j) {
        if (!(denom_sq(j) > 0.0)) {
            throw DegenerateColumnError(
                "self-normalisation denominator vanishes for instrument " +
                std::to_string(j));
        }
        best = std::max(best, std::abs(num(j)) / std::sqrt(denom_sq(j)));
    }
    return best;
}

double sup_score_critical_value(double alpha, Eigen::Index k, Eigen::Index n,
                                double c_bcch, SupScoreScaling scaling) {
    check_alpha(alpha);
    if (!(c_bcch > 1.0)) {
        throw DomainError("c_bcch must exceed 1");
    }
    const double q = normal_quantile(1.0 - alpha / (2.0 * static_cast<double>(k)));
    if (scaling == SupScoreScaling::AsWritten) {
        return c_bcch * std::sqrt(static_cast<double>(n)) * q;
    }
    return c_bcch * q;
}

TestResult sup_score(const Eigen::MatrixXd& Z_std, const Eigen::VectorXd& e,
                     double alpha, double c_bcch, SupScoreScaling scaling) {
    const Eigen::Index n = Z_std.rows();
    for (Eigen::Index j = 0; j < Z_std.cols(); ++j) {
        const double mean_sq = Z_std.col(j).squaredNorm() / static_cast<double>(n);
        if (std::abs(mean_sq - 1.0) > 1e-6) {
            throw DomainError(
                "instrument column " + std::to_string(j) +
                " is not standardised to unit in-sample second moment");
        }
    }
    TestResult res;
    res.test_name = TestName::SupScore;
    res.alpha = alpha;
    res.statistic = sup_score_statistic(Z_std, e);
    res.critical_value =
        sup_score_critical_value(alpha, Z_std.cols(), n, c_bcch, scaling);
    res.reject = res.statistic > res.critical_value;
    return res;
}

} // namespace rjar
