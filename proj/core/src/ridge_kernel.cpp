#include "rjar/ridge_kernel.hpp"

#include <Eigen/SVD>

#include <cmath>
#include <limits>

namespace rjar {

namespace {

void check_gamma(double gamma) {
    if (!(gamma >= 0.0)) {
        throw DomainError("ridge penalty must be non-negative, got " +
                          std::to_string(gamma));
    }
}

} // namespace

RidgeKernel build_kernel(const Eigen::MatrixXd& Z) {
    const Eigen::Index n = Z.rows();
    const Eigen::Index k = Z.cols();
    if (n < 2) {
        throw DimensionError("instrument matrix needs at least 2 rows");
    }
    if (!Z.allFinite()) {
        throw DomainError("instrument matrix contains non-finite entries");
    }

    Eigen::BDCSVD<Eigen::MatrixXd> svd(Z, Eigen::ComputeThinU);
    const Eigen::VectorXd& sv = svd.singularValues();

    const double d_max = sv.size() > 0 ? sv(0) : 0.0;
    const double tol = std::numeric_limits<double>::epsilon() *
                       static_cast<double>(std::max(n, k)) * d_max;

    Eigen::Index r = 0;
    while (r < sv.size() && sv(r) > tol) ++r;
    if (r == 0) {
        throw ZeroRankError("instrument matrix has numerical rank zero");
    }

    RidgeKernel kern;
    kern.U = svd.matrixU().leftCols(r);
    kern.d = sv.head(r);
    kern.r = r;
    kern.n = n;
    kern.k = k;
    kern.rank_tol = tol;
    return kern;
}

Eigen::VectorXd shrinkage_weights(const RidgeKernel& kern, double gamma) {
    check_gamma(gamma);
    const Eigen::ArrayXd d2 = kern.d.array().square();
    return (d2 / (d2 + gamma)).matrix();
}

Eigen::VectorXd ridge_diag(const RidgeKernel& kern, double gamma) {
    const Eigen::VectorXd w = shrinkage_weights(kern, gamma);
    return kern.U.array().square().matrix() * w;
}

double offdiag_sq_sum(const RidgeKernel& kern, double gamma) {
    const Eigen::VectorXd w = shrinkage_weights(kern, gamma);
    const Eigen::VectorXd diag = kern.U.array().square().matrix() * w;
    return w.squaredNorm() - diag.squaredNorm();
}

double quad_form_offdiag(const RidgeKernel& kern, double gamma,
                         const Eigen::VectorXd& e) {
    if (e.size() != kern.n) {
        throw DimensionError("residual vector length does not match kernel");
    }
    if (!e.allFinite()) {
        throw DomainError("residual vector contains non-finite entries");
    }
    const Eigen::VectorXd w = shrinkage_weights(kern, gamma);
    const Eigen::VectorXd ue = kern.U.transpose() * e;
    const Eigen::VectorXd diag = kern.U.array().square().matrix() * w;
    const double full = ue.array().square().matrix().dot(w);
    const double own = diag.dot(e.array().square().matrix());
    return full - own;
}

double hadamard_sq_quad(const RidgeKernel& kern, double gamma,
                        const Eigen::VectorXd& e, Eigen::Index threshold) {
    ProjectionEvaluator pe(kern, gamma, threshold);
    return pe.hadamard_sq_quad(e);
}

Eigen::MatrixXd materialize(const RidgeKernel& kern, double gamma, bool force,
                            Eigen::Index threshold) {
    check_gamma(gamma);
    if (kern.n > threshold && !force) {
        throw ResourceError("materialising a " + std::to_string(kern.n) + "x" +
                            std::to_string(kern.n) +
                            " projection exceeds the threshold of " +
                            std::to_string(threshold) + " rows");
    }
    const Eigen::VectorXd w = shrinkage_weights(kern, gamma);
    Eigen::MatrixXd P(kern.n, kern.n);
    // U diag(w) U' via a scaled copy; selfadjoint rank update keeps it
    // exactly symmetric.
    Eigen::MatrixXd Uw = kern.U * w.cwiseSqrt().asDiagonal();
    P.setZero();
    P.selfadjointView<Eigen::Lower>().rankUpdate(Uw);
    P.triangularView<Eigen::StrictlyUpper>() =
        P.triangularView<Eigen::StrictlyLower>().transpose();
    return P;
}

ProjectionEvaluator::ProjectionEvaluator(const RidgeKernel& kern, double gamma,
                                         Eigen::Index threshold)
    : gamma_(gamma), n_(kern.n), r_(kern.r),
      materialized_(kern.n <= threshold) {
    check_gamma(gamma);
    w_ = shrinkage_weights(kern, gamma);
    diag_ = kern.U.array().square().matrix() * w_;
    s_offdiag_ = w_.squaredNorm() - diag_.squaredNorm();
    if (materialized_) {
        P_ = materialize(kern, gamma, /*force=*/false, threshold);
        P_sq_ = P_.array().square().matrix();
    } else {
        U_ = kern.U;
    }
}

const Eigen::MatrixXd& ProjectionEvaluator::projection() const {
    if (!materialized_) {
        throw ResourceError("projection was not materialised at this size");
    }
    return P_;
}

double ProjectionEvaluator::quad_form_offdiag(const Eigen::VectorXd& e) const {
    if (e.size() != n_) {
        throw DimensionError("residual vector length does not match kernel");
    }
    const double own = diag_.dot(e.array().square().matrix());
    if (materialized_) {
        return e.dot(P_ * e) - own;
    }
    const Eigen::VectorXd ue = U_.transpose() * e;
    return ue.array().square().matrix().dot(w_) - own;
}

double ProjectionEvaluator::hadamard_sq_quad(const Eigen::VectorXd& e) const {
    if (e.size() != n_) {
        throw DimensionError("residual vector length does not match kernel");
    }
    const Eigen::VectorXd s = e.array().square().matrix();
    if (materialized_) {
        const double full = s.dot(P_sq_ * s);
        const double own = diag_.array().square().matrix().dot(
            s.array().square().matrix());
        return full - own;
    }
    // Row streaming: p_i = U (w .* U_i'), one row of P_gamma at a time.
    double total = 0.0;
    Eigen::VectorXd row(n_);
    for (Eigen::Index i = 0; i < n_; ++i) {
        row.noalias() = U_ * (w_.array() * U_.row(i).transpose().array()).matrix();
        double acc = 0.0;
        for (Eigen::Index j = 0; j < n_; ++j) {
            if (j == i) continue;
            acc += row(j) * row(j) * s(j);
        }
        total += acc * s(i);
    }
    return total;
}

} // namespace rjar
