#include "rjar/dataio.hpp"

#include <Eigen/QR>

#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_map>

namespace rjar {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            cells.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    cells.push_back(cur);
    return cells;
}

std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

// Strict numeric cell: the full trimmed cell must parse, and NaN/Inf are
// rejected (they would silently poison every downstream quadratic form).
double parse_cell(const std::string& raw, std::size_t row_1based,
                  const std::string& col_name) {
    const std::string cell = trim(raw);
    auto fail = [&]() -> double {
        throw ParseError("non-numeric or missing value at row " +
                         std::to_string(row_1based) + ", column \"" + col_name +
                         "\" (cell: \"" + cell + "\")");
    };
    if (cell.empty()) return fail();
    double value = 0.0;
    const char* first = cell.data();
    const char* last = cell.data() + cell.size();
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc() || ptr != last) return fail();
    if (!std::isfinite(value)) return fail();
    return value;
}

bool is_prefix_glob(const std::string& name) {
    return !name.empty() && name.back() == '*';
}

} // namespace

void validate(const Dataset& d) {
    const Eigen::Index n = d.y.size();
    if (n < 2) {
        throw DimensionError("dataset needs at least 2 observations");
    }
    if (d.X.rows() != n || d.Z.rows() != n ||
        (d.W.cols() > 0 && d.W.rows() != n)) {
        throw DimensionError("dataset blocks disagree on the row count");
    }
    if (d.X.cols() < 1) {
        throw DimensionError("at least one endogenous regressor is required");
    }
    if (d.Z.cols() < 1) {
        throw DimensionError("at least one instrument is required");
    }
    if (!d.y.allFinite() || !d.X.allFinite() || !d.Z.allFinite() ||
        (d.W.size() > 0 && !d.W.allFinite())) {
        throw DomainError("dataset contains non-finite entries");
    }
}

Dataset load_dataset(const std::filesystem::path& path,
                     const ColumnSchema& schema) {
    std::ifstream in(path);
    if (!in) {
        throw ParseError("cannot open file: " + path.string());
    }

    std::string line;
    if (!std::getline(in, line)) {
        throw ParseError("empty file: " + path.string());
    }
    const std::vector<std::string> raw_header = split_csv_line(line);
    std::vector<std::string> header;
    header.reserve(raw_header.size());
    for (const auto& h : raw_header) header.push_back(trim(h));

    std::unordered_map<std::string, std::size_t> col_index;
    for (std::size_t i = 0; i < header.size(); ++i) col_index[header[i]] = i;

    auto require_col = [&](const std::string& name) -> std::size_t {
        auto it = col_index.find(name);
        if (it == col_index.end()) {
            throw SchemaError("column \"" + name + "\" not found in " +
                              path.string());
        }
        return it->second;
    };

    // Expand instrument prefix globs against the header, keeping header
    // order within each pattern.
    std::vector<std::string> instrument_names;
    for (const auto& pat : schema.instruments) {
        if (is_prefix_glob(pat)) {
            const std::string prefix = pat.substr(0, pat.size() - 1);
            bool matched = false;
            for (const auto& h : header) {
                if (h.compare(0, prefix.size(), prefix) == 0) {
                    instrument_names.push_back(h);
                    matched = true;
                }
            }
            if (!matched) {
                throw SchemaError("instrument pattern \"" + pat +
                                  "\" matches no column in " + path.string());
            }
        } else {
            instrument_names.push_back(pat);
        }
    }

    if (schema.outcome.empty()) throw SchemaError("no outcome column named");
    if (schema.endogenous.empty()) {
        throw SchemaError("no endogenous column named");
    }
    if (instrument_names.empty()) {
        throw SchemaError("no instrument column named");
    }

    const std::size_t y_idx = require_col(schema.outcome);
    std::vector<std::size_t> x_idx, z_idx, w_idx;
    for (const auto& nm : schema.endogenous) x_idx.push_back(require_col(nm));
    for (const auto& nm : instrument_names) z_idx.push_back(require_col(nm));
    for (const auto& nm : schema.covariates) w_idx.push_back(require_col(nm));

    std::vector<std::vector<std::string>> rows;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        std::vector<std::string> cells = split_csv_line(line);
        if (cells.size() != header.size()) {
            throw ParseError("row " + std::to_string(line_no) + " has " +
                             std::to_string(cells.size()) + " cells, expected " +
                             std::to_string(header.size()));
        }
        rows.push_back(std::move(cells));
    }

    const Eigen::Index n = static_cast<Eigen::Index>(rows.size());
    Dataset d;
    d.y.resize(n);
    d.X.resize(n, static_cast<Eigen::Index>(x_idx.size()));
    d.Z.resize(n, static_cast<Eigen::Index>(z_idx.size()));
    d.W.resize(n, static_cast<Eigen::Index>(w_idx.size()));

    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& cells = rows[static_cast<std::size_t>(i)];
        const std::size_t row_no = static_cast<std::size_t>(i) + 1; // data row
        d.y(i) = parse_cell(cells[y_idx], row_no, schema.outcome);
        for (std::size_t j = 0; j < x_idx.size(); ++j) {
            d.X(i, static_cast<Eigen::Index>(j)) =
                parse_cell(cells[x_idx[j]], row_no, schema.endogenous[j]);
        }
        for (std::size_t j = 0; j < z_idx.size(); ++j) {
            d.Z(i, static_cast<Eigen::Index>(j)) =
                parse_cell(cells[z_idx[j]], row_no, instrument_names[j]);
        }
        for (std::size_t j = 0; j < w_idx.size(); ++j) {
            d.W(i, static_cast<Eigen::Index>(j)) =
                parse_cell(cells[w_idx[j]], row_no, schema.covariates[j]);
        }
    }

    validate(d);
    return d;
}

Eigen::MatrixXd interact_instruments(const Eigen::MatrixXd& Z,
                                     const Eigen::MatrixXd& W) {
    if (Z.rows() != W.rows()) {
        throw DimensionError("instrument and covariate row counts differ");
    }
    const Eigen::Index n = Z.rows();
    const Eigen::Index k = Z.cols();
    const Eigen::Index q = W.cols();
    Eigen::MatrixXd out(n, k * q);
    for (Eigen::Index j = 0; j < k; ++j) {
        for (Eigen::Index m = 0; m < q; ++m) {
            out.col(j * q + m) = Z.col(j).cwiseProduct(W.col(m));
        }
    }
    return out;
}

PartialledData partial_and_standardise(const Dataset& d) {
    validate(d);
    const Eigen::Index n = d.n();
    const Eigen::Index q = d.q();

    PartialledData pd;
    pd.n = n;
    pd.g = d.g();
    pd.q = q;

    Eigen::VectorXd y_t = d.y;
    Eigen::MatrixXd X_t = d.X;
    Eigen::MatrixXd Z_t = d.Z;

    if (q > 0) {
        // Minimum-norm least squares handles rank-deficient W (the saturated
        // interaction designs routinely produce collinear covariates).
        Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(d.W);
        y_t -= d.W * cod.solve(d.y);
        X_t -= d.W * cod.solve(d.X);
        Z_t -= d.W * cod.solve(d.Z);
    }

    const Eigen::Index k = Z_t.cols();
    Eigen::VectorXd rms(k);
    double rms_pre_max = 0.0;
    for (Eigen::Index j = 0; j < k; ++j) {
        rms(j) = std::sqrt(Z_t.col(j).squaredNorm() / static_cast<double>(n));
        rms_pre_max = std::max(
            rms_pre_max,
            std::sqrt(d.Z.col(j).squaredNorm() / static_cast<double>(n)));
    }
    const double rms_max = rms.maxCoeff();
    if (rms_max <= 1e-12 * rms_pre_max) {
        throw DegenerateInstrumentsError(
            "every instrument column is zero after partialling");
    }
    const double drop_tol = 1e-12 * rms_max;

    std::vector<Eigen::Index> kept;
    for (Eigen::Index j = 0; j < k; ++j) {
        if (rms(j) > drop_tol) {
            kept.push_back(j);
        } else {
            pd.dropped_cols.push_back(j);
        }
    }
    if (kept.empty()) {
        throw DegenerateInstrumentsError(
            "every instrument column is zero after partialling");
    }

    pd.k_eff = static_cast<Eigen::Index>(kept.size());
    pd.Z_t.resize(n, pd.k_eff);
    pd.scales.resize(pd.k_eff);
    for (Eigen::Index jj = 0; jj < pd.k_eff; ++jj) {
        const Eigen::Index j = kept[static_cast<std::size_t>(jj)];
        pd.scales(jj) = rms(j);
        pd.Z_t.col(jj) = Z_t.col(j) / rms(j);
    }
    pd.y_t = std::move(y_t);
    pd.X_t = std::move(X_t);
    return pd;
}

Eigen::VectorXd structural_residuals(const PartialledData& pd,
                                     const Eigen::VectorXd& beta0) {
    if (beta0.size() != pd.g) {
        throw DimensionError("beta0 length " + std::to_string(beta0.size()) +
                             " does not match g = " + std::to_string(pd.g));
    }
    if (!beta0.allFinite()) {
        throw DomainError("beta0 contains non-finite entries");
    }
    return pd.y_t - pd.X_t * beta0;
}

} // namespace rjar
