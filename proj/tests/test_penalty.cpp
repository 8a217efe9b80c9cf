#include <doctest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "rjar/penalty.hpp"

using Eigen::MatrixXd;
using Eigen::VectorXd;

TEST_SUITE_BEGIN("penalty");

TEST_CASE("strictly decreasing S returns the lower endpoint exactly") {
    MatrixXd Z(2, 1);
    Z << 1.0, 1.0;
    const rjar::RidgeKernel kern = rjar::build_kernel(Z);
    const rjar::PenaltySelection sel = rjar::select_gamma(kern);
    CHECK(sel.gamma_star == 0.0);
    CHECK(sel.s_at_star == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(sel.s_at_zero_or_floor == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(sel.implied_c == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(!sel.search_trace.empty());
}

TEST_CASE("selection dominates random admissible penalties") {
    std::mt19937 gen(41);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (int trial = 0; trial < 6; ++trial) {
        const Eigen::Index n = 20 + gen() % 40;
        const Eigen::Index k = 5 + gen() % 60;
        const MatrixXd Z = oracles::random_matrix(n, k, gen);
        const rjar::RidgeKernel kern = rjar::build_kernel(Z);
        const rjar::PenaltySelection sel = rjar::select_gamma(kern);
        const double lo = kern.r == kern.k ? 0.0 : 1.0;
        const double d_max_sq = kern.d(0) * kern.d(0);
        for (int i = 0; i < 1000; ++i) {
            // log-uniform over the admissible range
            const double gamma =
                lo + std::exp(std::log(1e-6 * d_max_sq) +
                              unif(gen) * std::log(1e12)) ;
            CHECK(sel.s_at_star >=
                  rjar::offdiag_sq_sum(kern, gamma) - 1e-9 * sel.s_at_star);
        }
    }
}

TEST_CASE("balanced designs satisfy the advertised lower bound") {
    // r = k < n: (1/k) S(0) >= 1 - max_i P_ii, and regularisation can only
    // raise the off-diagonal mass above S(0).
    std::mt19937 gen(43);
    for (int trial = 0; trial < 12; ++trial) {
        const Eigen::Index n = 20 + gen() % 60;
        const Eigen::Index k = 2 + gen() % std::max<Eigen::Index>(1, n / 2);
        const MatrixXd Z = oracles::random_matrix(n, k, gen);
        const rjar::RidgeKernel kern = rjar::build_kernel(Z);
        REQUIRE(kern.r == kern.k);
        const double max_diag = rjar::ridge_diag(kern, 0.0).maxCoeff();
        const double delta = 1.0 - max_diag;
        REQUIRE(delta > 0.0);
        const double s0 = rjar::offdiag_sq_sum(kern, 0.0);
        CHECK(s0 / static_cast<double>(kern.k) >= delta - 1e-9);
        const rjar::PenaltySelection sel = rjar::select_gamma(kern);
        CHECK(sel.s_at_star >= s0 - 1e-12 * std::abs(s0));
    }
}

TEST_CASE("floor binds when the kernel is column-rank deficient") {
    std::mt19937 gen(47);
    const MatrixXd Z = oracles::random_matrix(15, 40, gen);
    const rjar::RidgeKernel kern = rjar::build_kernel(Z);
    REQUIRE(kern.r < kern.k);
    const rjar::PenaltySelection sel = rjar::select_gamma(kern, 1.0);
    CHECK(sel.gamma_star >= 1.0);
    CHECK(sel.s_at_zero_or_floor ==
          doctest::Approx(rjar::offdiag_sq_sum(kern, 1.0)).epsilon(1e-12));
}

TEST_CASE("a denser grid never shrinks the selected penalty materially") {
    // Near-flat S: gigantic singular values make S vary below the plateau
    // tolerance across decades of gamma.
    std::mt19937 gen(53);
    MatrixXd Z = oracles::random_matrix(12, 30, gen) * 1e7;
    const rjar::RidgeKernel kern = rjar::build_kernel(Z);
    rjar::PenaltySearchOptions coarse;
    rjar::PenaltySearchOptions dense;
    dense.grid_points = 401;
    const double g_coarse = rjar::select_gamma(kern, 1.0, coarse).gamma_star;
    const double g_dense = rjar::select_gamma(kern, 1.0, dense).gamma_star;
    CHECK(g_dense >= g_coarse * (1.0 - 1e-8));

    std::mt19937 gen2(59);
    const MatrixXd Zr = oracles::random_matrix(30, 20, gen2);
    const rjar::RidgeKernel kr = rjar::build_kernel(Zr);
    const double gr_coarse = rjar::select_gamma(kr, 1.0, coarse).gamma_star;
    const double gr_dense = rjar::select_gamma(kr, 1.0, dense).gamma_star;
    CHECK(gr_dense >=
          gr_coarse - 1e-6 * std::max(1.0, gr_coarse)); // refinement slack
}

TEST_CASE("diagonal projection designs are rejected") {
    const MatrixXd Z = MatrixXd::Identity(6, 6) * 2.0;
    const rjar::RidgeKernel kern = rjar::build_kernel(Z);
    CHECK_THROWS_AS(rjar::select_gamma(kern), rjar::DiagonalProjectionError);
}

TEST_CASE("invalid arguments") {
    MatrixXd Z(3, 1);
    Z << 1.0, 2.0, 3.0;
    const rjar::RidgeKernel kern = rjar::build_kernel(Z);
    CHECK_THROWS_AS(rjar::select_gamma(kern, 0.0), rjar::DomainError);
    rjar::PenaltySearchOptions opts;
    opts.grid_points = 2;
    CHECK_THROWS_AS(rjar::select_gamma(kern, 1.0, opts), rjar::DomainError);
}

TEST_CASE("diagnostics echo the selection and flag tiny implied constants") {
    MatrixXd Z(2, 1);
    Z << 1.0, 1.0;
    const rjar::RidgeKernel kern = rjar::build_kernel(Z);
    const rjar::PenaltySelection sel = rjar::select_gamma(kern);
    const rjar::Diagnostics diag = rjar::assumption_diagnostics(kern, sel);
    CHECK(diag.implied_c == doctest::Approx(0.5));
    CHECK(diag.max_diag == doctest::Approx(0.5));
    CHECK(diag.r == 1);
    CHECK(diag.k == 1);
    CHECK(diag.n == 2);
    CHECK_FALSE(diag.questionable);
}

TEST_SUITE_END();
