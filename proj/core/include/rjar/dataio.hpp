#pragma once

#include <Eigen/Core>

#include <filesystem>
#include <string>
#include <vector>

#include "rjar/errors.hpp"

namespace rjar {

// Raw inputs of the linear IV model: outcome, endogenous regressors,
// instruments, optional exogenous covariates (an intercept goes in W).
struct Dataset {
    Eigen::VectorXd y;  // n
    Eigen::MatrixXd X;  // n x g
    Eigen::MatrixXd Z;  // n x k
    Eigen::MatrixXd W;  // n x q, q may be 0

    Eigen::Index n() const noexcept { return y.size(); }
    Eigen::Index g() const noexcept { return X.cols(); }
    Eigen::Index k() const noexcept { return Z.cols(); }
    Eigen::Index q() const noexcept { return W.cols(); }
};

// Throws on ragged blocks, n < 2, empty X/Z, or non-finite entries.
void validate(const Dataset& d);

// Column roles for CSV ingestion. Instrument entries may be exact column
// names or trailing-star prefix globs ("z*" matches z1, z2, ...).
struct ColumnSchema {
    std::string outcome;
    std::vector<std::string> endogenous;
    std::vector<std::string> instruments;
    std::vector<std::string> covariates;
};

// Strict CSV: header row, UTF-8, '.' decimal separator, no thousands
// separators. Row order is preserved.
Dataset load_dataset(const std::filesystem::path& path,
                     const ColumnSchema& schema);

// Instrument-major interaction expansion: output column (j * q + m) is the
// elementwise product Z[:, j] .* W[:, m].
Eigen::MatrixXd interact_instruments(const Eigen::MatrixXd& Z,
                                     const Eigen::MatrixXd& W);

// Covariate-residualised data with in-sample standardised instruments:
// (1/n) sum_i Z_t[i, j]^2 = 1 for every retained column.
struct PartialledData {
    Eigen::VectorXd y_t;  // n
    Eigen::MatrixXd X_t;  // n x g
    Eigen::MatrixXd Z_t;  // n x k_eff
    Eigen::VectorXd scales;                // k_eff per-column divisors
    std::vector<Eigen::Index> dropped_cols; // original Z column indices
    Eigen::Index n = 0, g = 0, k_eff = 0, q = 0;
};

// Residualise y, X, Z on W (rank-revealing decomposition, pseudo-inverse on
// deficiency), then divide each instrument column by its root mean square.
// Columns whose post-partialling RMS falls below 1e-12 of the largest are
// dropped and recorded.
PartialledData partial_and_standardise(const Dataset& d);

// e_i(beta0) = y_t[i] - X_t[i, :] . beta0.
Eigen::VectorXd structural_residuals(const PartialledData& pd,
                                     const Eigen::VectorXd& beta0);

} // namespace rjar
