#pragma once

#include <Eigen/Core>

#include "rjar/errors.hpp"

namespace rjar {

// Beyond this row count the n-by-n ridge projection is not formed unless
// forced; quadratic forms fall back to streaming rows of U diag(w) U'.
inline constexpr Eigen::Index kDefaultMaterializeThreshold = 4096;

// Thin SVD of the (standardised) instrument matrix. Every quantity of the
// ridge projection P_gamma = Z (Z'Z + gamma I)^-1 Z' = U diag(w) U' with
// w_l = d_l^2 / (d_l^2 + gamma) is answered from these factors, so the
// factorisation happens once per instrument matrix regardless of how many
// penalties are queried.
struct RidgeKernel {
    Eigen::MatrixXd U;  // n x r, orthonormal columns
    Eigen::VectorXd d;  // r singular values, descending, all > rank_tol
    Eigen::Index r = 0; // numerical rank
    Eigen::Index n = 0;
    Eigen::Index k = 0;
    double rank_tol = 0.0;
};

RidgeKernel build_kernel(const Eigen::MatrixXd& Z);

// w_l = d_l^2 / (d_l^2 + gamma), each in (0, 1].
Eigen::VectorXd shrinkage_weights(const RidgeKernel& kern, double gamma);

// Diagonal of P_gamma: P_ii = sum_l w_l U_il^2.
Eigen::VectorXd ridge_diag(const RidgeKernel& kern, double gamma);

// S(gamma) = sum_{i != j} (P_ij)^2 = sum_l w_l^2 - sum_i P_ii^2.  O(n r).
double offdiag_sq_sum(const RidgeKernel& kern, double gamma);

// sum_{i != j} P_ij e_i e_j = sum_l w_l (U'e)_l^2 - sum_i P_ii e_i^2.  O(n r).
double quad_form_offdiag(const RidgeKernel& kern, double gamma,
                         const Eigen::VectorXd& e);

// sum_{i != j} (P_ij)^2 e_i^2 e_j^2.  Uses the materialised projection when
// n <= threshold, otherwise streams rows p_i = U (w .* U_i').
double hadamard_sq_quad(const RidgeKernel& kern, double gamma,
                        const Eigen::VectorXd& e,
                        Eigen::Index threshold = kDefaultMaterializeThreshold);

// Dense n x n matrix U diag(w) U'. Refuses above the threshold unless forced.
Eigen::MatrixXd materialize(const RidgeKernel& kern, double gamma,
                            bool force = false,
                            Eigen::Index threshold = kDefaultMaterializeThreshold);

// Fixed-gamma view over a kernel for repeated quadratic-form queries (test
// inversion grids, Monte Carlo cells). Caches the diagonal and, when the
// size budget allows, P and P .* P so each query is O(n^2) instead of
// O(n^2 r). Immutable after construction; safe to share across threads.
class ProjectionEvaluator {
public:
    ProjectionEvaluator(const RidgeKernel& kern, double gamma,
                        Eigen::Index threshold = kDefaultMaterializeThreshold);

    double gamma() const noexcept { return gamma_; }
    Eigen::Index rank() const noexcept { return r_; }
    Eigen::Index rows() const noexcept { return n_; }
    bool materialized() const noexcept { return materialized_; }

    const Eigen::VectorXd& diag() const noexcept { return diag_; }

    // Materialised P_gamma; only valid when materialized().
    const Eigen::MatrixXd& projection() const;

    double offdiag_sq_sum() const noexcept { return s_offdiag_; }
    double quad_form_offdiag(const Eigen::VectorXd& e) const;
    double hadamard_sq_quad(const Eigen::VectorXd& e) const;

private:
    double gamma_;
    Eigen::Index n_, r_;
    bool materialized_;
    Eigen::MatrixXd U_;        // kept for the streaming path
    Eigen::VectorXd w_;
    Eigen::VectorXd diag_;
    Eigen::MatrixXd P_;        // empty unless materialized_
    Eigen::MatrixXd P_sq_;     // elementwise square of P_
    double s_offdiag_;
};

} // namespace rjar
