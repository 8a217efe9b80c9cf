#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "rjar/montecarlo.hpp"
#include "rjar/rng.hpp"

using Eigen::MatrixXd;
using Eigen::VectorXd;

TEST_SUITE_BEGIN("montecarlo");

TEST_CASE("toeplitz covariance") {
    const MatrixXd sigma = rjar::toeplitz_cov(2, 0.3, 0.5);
    CHECK(sigma(0, 0) == doctest::Approx(0.3));
    CHECK(sigma(0, 1) == doctest::Approx(0.15));
    CHECK(sigma(1, 0) == doctest::Approx(0.15));
    CHECK(sigma(1, 1) == doctest::Approx(0.3));

    const MatrixXd diag = rjar::toeplitz_cov(4, 0.3, 0.0);
    CHECK((diag - 0.3 * MatrixXd::Identity(4, 4)).cwiseAbs().maxCoeff() == 0.0);

    // positive definiteness at the largest design
    const MatrixXd big = rjar::toeplitz_cov(342, 0.3, 0.5);
    Eigen::LLT<MatrixXd> llt(big);
    CHECK(llt.info() == Eigen::Success);
}

TEST_CASE("signal scale from the concentration parameter") {
    const MatrixXd sigma = rjar::toeplitz_cov(90, 0.3, 0.5);
    const VectorXd kappa = rjar::design_kappa(rjar::FirstStageDesign::Sparse, 90);
    // kappa' Sigma kappa = 0.3 (5 + 2 (4*0.5 + 3*0.25 + 2*0.125 + 0.0625))
    CHECK(kappa.dot(sigma * kappa) == doctest::Approx(3.3375).epsilon(1e-12));
    const double rho = rjar::rho_from_mu2(30.0, kappa, sigma, 100, 1.0);
    CHECK(rho == doctest::Approx(std::sqrt(30.0 / 333.75)).epsilon(1e-12));
    CHECK(rho == doctest::Approx(0.29977).epsilon(1e-4));

    CHECK(rjar::rho_from_mu2(0.0, kappa, sigma, 100, 1.0) == 0.0);

    // doubling n halves rho^2 at fixed mu2
    const double rho_2n = rjar::rho_from_mu2(30.0, kappa, sigma, 200, 1.0);
    CHECK(rho_2n * rho_2n == doctest::Approx(0.5 * rho * rho).epsilon(1e-12));

    const VectorXd zero = VectorXd::Zero(90);
    CHECK_THROWS_AS(rjar::rho_from_mu2(30.0, zero, sigma, 100, 1.0),
                    rjar::DegenerateSignalError);
}

TEST_CASE("design support sizes") {
    CHECK(rjar::design_kappa(rjar::FirstStageDesign::Sparse, 30).sum() == 5.0);
    CHECK(rjar::design_kappa(rjar::FirstStageDesign::Dense, 30).sum() == 12.0);
    CHECK(rjar::design_kappa(rjar::FirstStageDesign::Dense, 190).sum() == 76.0);
    CHECK(rjar::design_kappa(rjar::FirstStageDesign::Dense, 7).sum() == 2.0);
}

TEST_CASE("zero concentration gives a pure-noise first stage") {
    rjar::SimConfig cfg;
    cfg.n = 50;
    cfg.k = 10;
    cfg.mu2 = 0.0;
    cfg.seed = 5;
    const rjar::Replication rep = rjar::draw_replication(cfg, 3);
    // x = v exactly, so y - beta x = eps: regenerate the error stream
    rjar::PhiloxStream rng(cfg.seed, 3);
    for (int i = 0; i < cfg.n; ++i) {
        const double a = rng.normal();
        const double b = rng.normal();
        const double eps = std::sqrt(2.0) * a;
        const double v = 0.6 * a + std::sqrt(1.0 - 0.36) * b;
        CHECK(rep.x(i) == doctest::Approx(v).epsilon(1e-14));
        CHECK(rep.y(i) - rep.x(i) == doctest::Approx(eps).epsilon(1e-12));
    }
}

TEST_CASE("error correlation matches the configured coefficient") {
    rjar::SimConfig cfg;
    cfg.n = 100;
    cfg.k = 5;
    cfg.mu2 = 0.0;
    cfg.seed = 11;
    double sum_ev = 0.0, sum_e2 = 0.0, sum_v2 = 0.0;
    long count = 0;
    // 10,000 reps x 100 observations = 1e6 pairs
    for (std::uint64_t rep_idx = 0; rep_idx < 10000; ++rep_idx) {
        const rjar::Replication rep = rjar::draw_replication(cfg, rep_idx);
        const VectorXd eps = rep.y - rep.x; // beta_true = 1, x = v
        sum_ev += eps.dot(rep.x);
        sum_e2 += eps.squaredNorm();
        sum_v2 += rep.x.squaredNorm();
        count += cfg.n;
    }
    const double corr = (sum_ev / count) /
                        std::sqrt((sum_e2 / count) * (sum_v2 / count));
    CHECK(corr == doctest::Approx(0.6).epsilon(0.0167)); // +- 0.01 absolute
}

TEST_CASE("instrument second moments match the Toeplitz law") {
    rjar::SimConfig cfg;
    cfg.n = 200;
    cfg.k = 6;
    cfg.seed = 13;
    double var = 0.0, cov1 = 0.0;
    long count = 0;
    for (std::uint64_t rep_idx = 0; rep_idx < 400; ++rep_idx) {
        const rjar::Replication rep = rjar::draw_replication(cfg, rep_idx);
        for (int i = 0; i < cfg.n; ++i) {
            for (int l = 0; l < cfg.k; ++l) {
                var += rep.Z(i, l) * rep.Z(i, l);
                if (l + 1 < cfg.k) cov1 += rep.Z(i, l) * rep.Z(i, l + 1);
            }
        }
        count += cfg.n;
    }
    CHECK(var / (count * cfg.k) == doctest::Approx(0.3).epsilon(0.02));
    CHECK(cov1 / (count * (cfg.k - 1)) == doctest::Approx(0.15).epsilon(0.03));
}

TEST_CASE("empirical concentration tracks mu2") {
    rjar::SimConfig cfg;
    cfg.n = 100;
    cfg.k = 30;
    cfg.mu2 = 60.0;
    cfg.seed = 17;
    const MatrixXd sigma = rjar::toeplitz_cov(cfg.k, cfg.z_var, cfg.z_rho);
    const VectorXd kappa = rjar::design_kappa(cfg.design, cfg.k);
    const double rho = rjar::rho_from_mu2(cfg.mu2, kappa, sigma, cfg.n, 1.0);
    const VectorXd pi = rho * kappa;
    double acc = 0.0;
    for (std::uint64_t rep_idx = 0; rep_idx < 1000; ++rep_idx) {
        const rjar::Replication rep = rjar::draw_replication(cfg, rep_idx);
        acc += pi.dot(rep.Z.transpose() * rep.Z * pi);
    }
    CHECK(acc / 1000.0 == doctest::Approx(cfg.mu2).epsilon(0.05));
}

TEST_CASE("fixed instruments reuse the first draw") {
    rjar::SimConfig cfg;
    cfg.n = 20;
    cfg.k = 6;
    cfg.seed = 19;
    cfg.redraw_instruments = false;
    const rjar::Replication a = rjar::draw_replication(cfg, 0);
    const rjar::Replication b = rjar::draw_replication(cfg, 5);
    CHECK((a.Z - b.Z).cwiseAbs().maxCoeff() == 0.0);
    CHECK((a.y - b.y).cwiseAbs().maxCoeff() > 0.0); // errors still differ

    cfg.redraw_instruments = true;
    const rjar::Replication c = rjar::draw_replication(cfg, 0);
    CHECK((a.Z - c.Z).cwiseAbs().maxCoeff() == 0.0); // rep 0 shares stream 0
    const rjar::Replication e = rjar::draw_replication(cfg, 5);
    CHECK((e.Z - a.Z).cwiseAbs().maxCoeff() > 0.0);
    // toggling redraw never changes the error sequence
    CHECK((e.y - e.x - (b.y - b.x)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("single-replication smoke run") {
    rjar::SimConfig cfg;
    cfg.n = 40;
    cfg.k = 8;
    cfg.reps = 1;
    cfg.seed = 23;
    cfg.threads = 1;
    const rjar::SimResult res = rjar::run_experiment(cfg, {1.0});
    for (const auto& [t, table] : res.tables) {
        REQUIRE(table.applicable);
        const double freq = table.frequency(0, 0);
        CHECK((freq == 0.0 || freq == 1.0));
        CHECK(table.eval_counts[0] == 1);
    }
}

TEST_CASE("experiments are bit-identical across thread counts and reruns") {
    rjar::SimConfig cfg;
    cfg.n = 40;
    cfg.k = 50; // exercises the rank-deficient branch too
    cfg.reps = 30;
    cfg.seed = 29;
    cfg.alpha_grid = {0.05, 0.2};
    cfg.tests = {rjar::TestName::Rjar, rjar::TestName::SupScore};
    cfg.keep_traces = true;

    cfg.threads = 1;
    const rjar::SimResult serial = rjar::run_experiment(cfg, {0.5, 1.0});
    cfg.threads = 2;
    const rjar::SimResult dual = rjar::run_experiment(cfg, {0.5, 1.0});
    cfg.threads = 3;
    const rjar::SimResult triple = rjar::run_experiment(cfg, {0.5, 1.0});

    for (const auto& [t, table] : serial.tables) {
        for (std::size_t b = 0; b < 2; ++b) {
            CHECK(table.eval_counts[b] == dual.tables.at(t).eval_counts[b]);
            for (std::size_t a = 0; a < 2; ++a) {
                CHECK(table.reject_counts[b][a] ==
                      dual.tables.at(t).reject_counts[b][a]);
                CHECK(table.reject_counts[b][a] ==
                      triple.tables.at(t).reject_counts[b][a]);
            }
        }
    }
    for (std::size_t i = 0; i < serial.gamma_star_per_rep.size(); ++i) {
        CHECK(serial.gamma_star_per_rep[i] == dual.gamma_star_per_rep[i]);
    }
    const auto& tr_s = serial.traces.at(rjar::TestName::Rjar);
    const auto& tr_d = dual.traces.at(rjar::TestName::Rjar);
    REQUIRE(tr_s.size() == tr_d.size());
    for (std::size_t i = 0; i < tr_s.size(); ++i) {
        CHECK(tr_s[i] == tr_d[i]);
    }
}

TEST_CASE("inapplicable tests are marked absent, not zero") {
    rjar::SimConfig cfg;
    cfg.n = 30;
    cfg.k = 40;
    cfg.reps = 2;
    cfg.seed = 31;
    cfg.threads = 1;
    const rjar::SimResult res = rjar::run_experiment(cfg, {1.0});
    CHECK_FALSE(res.tables.at(rjar::TestName::Cms).applicable);
    CHECK_FALSE(res.tables.at(rjar::TestName::Ms).applicable);
    CHECK(!res.tables.at(rjar::TestName::Cms).skip_reason.empty());
    CHECK(res.tables.at(rjar::TestName::Rjar).applicable);
    CHECK(res.tables.at(rjar::TestName::Rjar).eval_counts[0] == 2);
}

TEST_CASE("variance estimator concentrates as the design grows") {
    // |Phi-hat - Phi| should shrink along n at a fixed k/n ratio; Phi uses
    // the known error variances of the design.
    std::vector<double> medians;
    for (int n : {100, 400, 1600}) {
        rjar::SimConfig cfg;
        cfg.n = n;
        cfg.k = static_cast<int>(0.3 * n);
        cfg.seed = 37;
        const int reps = 21;
        std::vector<double> gaps;
        for (std::uint64_t rep_idx = 0; rep_idx < reps; ++rep_idx) {
            const rjar::Replication rep = rjar::draw_replication(cfg, rep_idx);
            MatrixXd Zs = rep.Z;
            for (Eigen::Index j = 0; j < Zs.cols(); ++j) {
                Zs.col(j) /= std::sqrt(Zs.col(j).squaredNorm() / n);
            }
            const rjar::RidgeKernel kern = rjar::build_kernel(Zs);
            const VectorXd eps = rep.y - rep.x; // true errors at the null
            const double r = static_cast<double>(kern.r);
            const double phi_hat =
                2.0 / r * rjar::hadamard_sq_quad(kern, 0.0, eps);
            // E[eps_i^2] = 2 for every i: hadamard with e_i = sqrt(2)
            const VectorXd sig =
                VectorXd::Constant(n, std::sqrt(2.0));
            const double phi =
                2.0 / r * rjar::hadamard_sq_quad(kern, 0.0, sig);
            gaps.push_back(std::abs(phi_hat - phi));
        }
        std::sort(gaps.begin(), gaps.end());
        medians.push_back(gaps[gaps.size() / 2]);
    }
    CHECK(medians[1] < medians[0]);
    CHECK(medians[2] < medians[1]);
}

TEST_CASE("config validation") {
    rjar::SimConfig cfg;
    cfg.k = 4; // sparse design needs k >= 5
    CHECK_THROWS_AS(rjar::validate(cfg), rjar::ConfigError);
    cfg.k = 30;
    cfg.corr_ev = 1.0;
    CHECK_THROWS_AS(rjar::validate(cfg), rjar::ConfigError);
    cfg.corr_ev = 0.6;
    cfg.reps = 0;
    CHECK_THROWS_AS(rjar::validate(cfg), rjar::ConfigError);
    cfg.reps = 10;
    CHECK_NOTHROW(rjar::validate(cfg));
}

TEST_CASE("assumption sweep emits well-formed rows") {
    rjar::SimConfig params;
    params.seed = 41;
    const auto rows = rjar::assumption_sweep({10, 20}, 0.5, params);
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].n == 10);
    CHECK(rows[0].gamma_star >= 0.0);
    CHECK(std::isfinite(rows[0].ratio));
    CHECK(rows[1].n == 20);
    CHECK(rows[1].ratio > 0.0);
}

TEST_SUITE_END();
