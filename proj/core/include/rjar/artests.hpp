#pragma once

#include <optional>
#include <string>

#include "rjar/penalty.hpp"
#include "rjar/ridge_kernel.hpp"

namespace rjar {

enum class TestName { Rjar, Cms, Ms, SupScore };

std::string to_string(TestName t);
TestName test_from_string(const std::string& s);

// The critical value printed for the Sup Score test carries a sqrt(n)
// factor that does not match the 1/sqrt(n) normalisation inside the
// statistic; ScaleConsistent drops it and is the default, AsWritten keeps
// the literal formula.
enum class SupScoreScaling { AsWritten, ScaleConsistent };

struct TestResult {
    TestName test_name = TestName::Rjar;
    double statistic = 0.0;
    double critical_value = 0.0;
    double alpha = 0.0;
    bool reject = false;
    std::optional<double> variance_estimate; // Phi-hat for quadratic forms
    std::optional<double> gamma_used;
    bool negative_variance_no_reject = false;
    bool assumption3_questionable = false;
};

// (1 - p)-free standard normal quantile, Q(p).
double normal_quantile(double p);

// --- one-shot tests ---------------------------------------------------------

// Ridge-regularised jackknifed AR. Rejects when the statistic exceeds the
// one-sided standard normal quantile Q(1 - alpha).
TestResult rjar(const RidgeKernel& kern, const PenaltySelection& sel,
                const Eigen::VectorXd& e, double alpha);

// Jackknifed AR with the C = A - B recentring; needs the unregularised
// projection (r = k < n) and a strictly unbalanced diagonal.
TestResult cms_ar(const Eigen::MatrixXd& P, const Eigen::VectorXd& e,
                  double alpha);

// Jackknifed AR with the leave-one-out variance estimator; a non-positive
// variance estimate is reported as a failure to reject, flagged.
TestResult ms_ar(const Eigen::MatrixXd& P, const Eigen::VectorXd& e,
                 double alpha);

// Maximum self-normalised score over the standardised instruments against a
// Bonferroni-style normal critical value.
TestResult sup_score(const Eigen::MatrixXd& Z_std, const Eigen::VectorXd& e,
                     double alpha, double c_bcch = 1.1,
                     SupScoreScaling scaling = SupScoreScaling::ScaleConsistent);

// --- prepared contexts for grid scans and Monte Carlo -----------------------

// RJAR over a fixed-penalty evaluator; r is the kernel rank.
class RjarContext {
public:
    RjarContext(const RidgeKernel& kern, const PenaltySelection& sel,
                Eigen::Index threshold = kDefaultMaterializeThreshold);

    // Throws DegenerateVarianceError when Phi-hat <= 0.
    double statistic(const Eigen::VectorXd& e, double* phi_hat = nullptr) const;
    double gamma() const noexcept { return pe_.gamma(); }
    Eigen::Index rank() const noexcept { return r_; }

private:
    ProjectionEvaluator pe_;
    Eigen::Index r_;
};

class CmsContext {
public:
    explicit CmsContext(const Eigen::MatrixXd& P);
    double statistic(const Eigen::VectorXd& e, double* phi_hat = nullptr) const;
    Eigen::Index k() const noexcept { return k_; }

private:
    Eigen::MatrixXd C_;
    Eigen::MatrixXd C_sq_;
    Eigen::VectorXd c_diag_;
    Eigen::VectorXd c_sq_diag_;
    Eigen::Index k_;
};

class MsContext {
public:
    explicit MsContext(const Eigen::MatrixXd& P);
    // Returns nullopt when the variance estimate is non-positive (the
    // caller records a forced non-rejection).
    std::optional<double> statistic(const Eigen::VectorXd& e,
                                    double* phi_hat = nullptr) const;
    Eigen::Index k() const noexcept { return k_; }

private:
    Eigen::MatrixXd P_;
    Eigen::MatrixXd M_;
    Eigen::MatrixXd weight_; // P_ij^2 / (M_ii M_jj + M_ij^2)
    Eigen::VectorXd p_diag_;
    Eigen::Index k_;
};

// Statistic only; the critical value depends on (alpha, k, scaling).
double sup_score_statistic(const Eigen::MatrixXd& Z_std,
                           const Eigen::VectorXd& e);
double sup_score_critical_value(double alpha, Eigen::Index k, Eigen::Index n,
                                double c_bcch, SupScoreScaling scaling);

} // namespace rjar
