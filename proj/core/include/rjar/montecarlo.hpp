#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <vector>

#include "rjar/artests.hpp"

namespace rjar {

enum class FirstStageDesign { Sparse, Dense };

std::string to_string(FirstStageDesign d);
FirstStageDesign design_from_string(const std::string& s);

// Gaussian IV experiment: y_i = x_i beta + eps_i, x_i = Z_i' pi + v_i, with
// (eps_i, v_i) bivariate normal and Toeplitz-correlated instruments. pi is
// rho * kappa, rho calibrated so the concentration parameter equals mu2.
struct SimConfig {
    int n = 100;
    int k = 90;
    FirstStageDesign design = FirstStageDesign::Sparse;
    double mu2 = 0.0;
    double sigma_eps2 = 2.0;
    double sigma_v2 = 1.0;
    double corr_ev = 0.6;
    double z_var = 0.3;
    double z_rho = 0.5;
    double beta_true = 1.0;
    int reps = 10000;
    std::uint64_t seed = 0;
    std::vector<double> alpha_grid{0.05};
    std::vector<TestName> tests{TestName::Rjar, TestName::Cms, TestName::Ms,
                                TestName::SupScore};
    bool redraw_instruments = true;
    double gamma_floor = 1.0;
    double c_bcch = 1.1;
    SupScoreScaling supscore_scaling = SupScoreScaling::ScaleConsistent;
    int threads = 0; // 0 = hardware concurrency
    bool keep_traces = false;
};

void validate(const SimConfig& cfg);

// Sigma[l, m] = z_var * z_rho^|l - m|.
Eigen::MatrixXd toeplitz_cov(int k, double z_var, double z_rho);

// rho = sqrt(sigma_v^2 mu^2 / (n kappa' Sigma kappa)); pi = rho * kappa then
// hits the concentration parameter mu^2 exactly under the population
// covariance.
double rho_from_mu2(double mu2, const Eigen::VectorXd& kappa,
                    const Eigen::MatrixXd& sigma_cov, int n, double sigma_v2);

// First-stage support: 5 leading ones (sparse) or floor(0.4 k) (dense).
Eigen::VectorXd design_kappa(FirstStageDesign design, int k);

struct Replication {
    Eigen::VectorXd y;
    Eigen::VectorXd x; // single endogenous regressor in this design
    Eigen::MatrixXd Z;
};

// Deterministic function of (cfg.seed, rep_index); instruments come from
// stream (seed, 0) when redraw_instruments is off.
Replication draw_replication(const SimConfig& cfg, std::uint64_t rep_index);

// Rejection counts for one test over [beta0 x alpha] cells.
struct TestCellTable {
    bool applicable = false;
    std::string skip_reason;
    std::vector<std::vector<long>> reject_counts; // [beta0][alpha]
    std::vector<long> eval_counts;                // [beta0], successful evals
    long errors = 0; // propagated per-evaluation test errors, counted not fatal

    double frequency(std::size_t b, std::size_t a) const {
        return eval_counts[b] == 0
                   ? 0.0
                   : static_cast<double>(reject_counts[b][a]) /
                         static_cast<double>(eval_counts[b]);
    }
};

struct SimResult {
    SimConfig config;
    std::vector<double> beta0_grid;
    std::map<TestName, TestCellTable> tables;
    std::vector<double> gamma_star_per_rep;
    double gamma_star_median = 0.0;
    double gamma_star_iqr = 0.0;
    long ms_negative_variance_count = 0;
    // actual number of active first-stage coefficients (the dense design
    // rounds 0.4 k down)
    int first_stage_support = 0;
    // statistic traces [test][rep * n_beta0 + b], kept only on request
    std::map<TestName, std::vector<double>> traces;
};

SimResult run_experiment(const SimConfig& cfg,
                         const std::vector<double>& beta0_grid);

struct SweepRow {
    int n = 0;
    double gamma_star = 0.0;
    double ratio = 0.0; // S(gamma*) / r
};

// One instrument draw per n with k = ceil(ratio * n); reports the selected
// penalty and the implied off-diagonal mass per rank unit.
std::vector<SweepRow> assumption_sweep(const std::vector<int>& n_grid,
                                       double ratio, const SimConfig& params);

} // namespace rjar
