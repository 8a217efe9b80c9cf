#include "rjar/montecarlo.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <thread>

#include "rjar/rng.hpp"

namespace rjar {

namespace {

// Instrument draws and error draws live in disjoint stream halves so that
// toggling redraw_instruments never changes the error sequence of a
// replication.
constexpr std::uint64_t kInstrumentStreamBit = 1ull << 63;

Eigen::MatrixXd draw_instruments(const SimConfig& cfg,
                                 const Eigen::MatrixXd& chol_lower,
                                 std::uint64_t stream) {
    PhiloxStream rng(cfg.seed, kInstrumentStreamBit | stream);
    Eigen::MatrixXd G(cfg.n, cfg.k);
    // Row-major fill; the consumption order is part of the reproducibility
    // contract.
    for (int i = 0; i < cfg.n; ++i) {
        for (int l = 0; l < cfg.k; ++l) {
            G(i, l) = rng.normal();
        }
    }
    return G * chol_lower.transpose();
}

struct ErrorDraws {
    Eigen::VectorXd eps;
    Eigen::VectorXd v;
};

ErrorDraws draw_errors(const SimConfig& cfg, std::uint64_t rep_index) {
    PhiloxStream rng(cfg.seed, rep_index);
    const double s_eps = std::sqrt(cfg.sigma_eps2);
    const double s_v = std::sqrt(cfg.sigma_v2);
    const double c = cfg.corr_ev;
    const double c_perp = std::sqrt(1.0 - c * c);
    ErrorDraws out;
    out.eps.resize(cfg.n);
    out.v.resize(cfg.n);
    for (int i = 0; i < cfg.n; ++i) {
        const double a = rng.normal();
        const double b = rng.normal();
        out.eps(i) = s_eps * a;
        out.v(i) = s_v * (c * a + c_perp * b);
    }
    return out;
}

// In-sample standardisation of already-partialled instruments (the
// simulation has no covariates).
Eigen::MatrixXd standardise_columns(const Eigen::MatrixXd& Z) {
    const double n = static_cast<double>(Z.rows());
    Eigen::MatrixXd out = Z;
    for (Eigen::Index j = 0; j < Z.cols(); ++j) {
        const double rms = std::sqrt(Z.col(j).squaredNorm() / n);
        out.col(j) /= rms;
    }
    return out;
}

double quantile_sorted(const std::vector<double>& sorted, double p) {
    if (sorted.empty()) return 0.0;
    const double pos = p * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(pos);
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

} // namespace

std::string to_string(FirstStageDesign d) {
    return d == FirstStageDesign::Sparse ? "sparse" : "dense";
}

FirstStageDesign design_from_string(const std::string& s) {
    if (s == "sparse") return FirstStageDesign::Sparse;
    if (s == "dense") return FirstStageDesign::Dense;
    throw ConfigError("unknown first-stage design: " + s);
}

void validate(const SimConfig& cfg) {
    if (cfg.n < 3) throw ConfigError("n must be at least 3");
    if (cfg.k < 1) throw ConfigError("k must be at least 1");
    if (!(std::abs(cfg.corr_ev) < 1.0)) {
        throw ConfigError("|corr_ev| must be below 1");
    }
    if (!(cfg.z_var > 0.0)) throw ConfigError("z_var must be positive");
    if (!(std::abs(cfg.z_rho) < 1.0)) {
        throw ConfigError("|z_rho| must be below 1");
    }
    if (cfg.reps < 1) throw ConfigError("reps must be at least 1");
    if (!(cfg.mu2 >= 0.0)) throw ConfigError("mu2 must be non-negative");
    if (!(cfg.sigma_eps2 > 0.0) || !(cfg.sigma_v2 > 0.0)) {
        throw ConfigError("error variances must be positive");
    }
    if (!(cfg.gamma_floor > 0.0)) {
        throw ConfigError("gamma_floor must be positive");
    }
    if (!(cfg.c_bcch > 1.0)) throw ConfigError("c_bcch must exceed 1");
    if (cfg.design == FirstStageDesign::Sparse && cfg.k < 5) {
        throw ConfigError("the sparse design needs k >= 5");
    }
    if (cfg.alpha_grid.empty()) throw ConfigError("alpha grid is empty");
    for (double a : cfg.alpha_grid) {
        if (!(a > 0.0 && a < 1.0)) {
            throw ConfigError("every alpha must lie in (0, 1)");
        }
    }
    if (cfg.tests.empty()) throw ConfigError("no tests requested");
}

Eigen::MatrixXd toeplitz_cov(int k, double z_var, double z_rho) {
    Eigen::MatrixXd sigma(k, k);
    for (int l = 0; l < k; ++l) {
        for (int m = 0; m < k; ++m) {
            sigma(l, m) = z_var * std::pow(z_rho, std::abs(l - m));
        }
    }
    return sigma;
}

double rho_from_mu2(double mu2, const Eigen::VectorXd& kappa,
                    const Eigen::MatrixXd& sigma_cov, int n, double sigma_v2) {
    if (!(mu2 >= 0.0)) throw DomainError("mu2 must be non-negative");
    if (mu2 == 0.0) return 0.0;
    const double quad = kappa.dot(sigma_cov * kappa);
    if (!(quad > 0.0)) {
        throw DegenerateSignalError(
            "mu2 > 0 requires a first stage with at least one active "
            "instrument (kappa' Sigma kappa > 0)");
    }
    return std::sqrt(sigma_v2 * mu2 / (static_cast<double>(n) * quad));
}

Eigen::VectorXd design_kappa(FirstStageDesign design, int k) {
    Eigen::VectorXd kappa = Eigen::VectorXd::Zero(k);
    const int ones = design == FirstStageDesign::Sparse
                         ? std::min(5, k)
                         : static_cast<int>(0.4 * k);
    kappa.head(ones).setOnes();
    return kappa;
}

Replication draw_replication(const SimConfig& cfg, std::uint64_t rep_index) {
    validate(cfg);
    const Eigen::MatrixXd sigma = toeplitz_cov(cfg.k, cfg.z_var, cfg.z_rho);
    const Eigen::MatrixXd chol_lower = sigma.llt().matrixL();
    const Eigen::VectorXd kappa = design_kappa(cfg.design, cfg.k);
    const double rho =
        rho_from_mu2(cfg.mu2, kappa, sigma, cfg.n, cfg.sigma_v2);
    const Eigen::VectorXd pi = rho * kappa;

    Replication rep;
    rep.Z = draw_instruments(cfg, chol_lower,
                             cfg.redraw_instruments ? rep_index : 0);
    const ErrorDraws err = draw_errors(cfg, rep_index);
    rep.x = rep.Z * pi + err.v;
    rep.y = cfg.beta_true * rep.x + err.eps;
    return rep;
}

SimResult run_experiment(const SimConfig& cfg,
                         const std::vector<double>& beta0_grid) {
    validate(cfg);
    if (beta0_grid.empty()) throw ConfigError("beta0 grid is empty");

    const std::size_t n_beta = beta0_grid.size();
    const std::size_t n_alpha = cfg.alpha_grid.size();
    const auto reps = static_cast<std::size_t>(cfg.reps);

    SimResult result;
    result.config = cfg;
    result.beta0_grid = beta0_grid;
    result.gamma_star_per_rep.assign(reps, 0.0);

    // Applicability is a property of the configuration, not of a draw.
    for (TestName t : cfg.tests) {
        TestCellTable table;
        table.applicable = true;
        if ((t == TestName::Cms || t == TestName::Ms) && cfg.k >= cfg.n) {
            table.applicable = false;
            table.skip_reason = "requires k < n";
        }
        table.reject_counts.assign(n_beta, std::vector<long>(n_alpha, 0));
        table.eval_counts.assign(n_beta, 0);
        result.tables.emplace(t, std::move(table));
        if (cfg.keep_traces) {
            result.traces[t].assign(
                reps * n_beta, std::numeric_limits<double>::quiet_NaN());
        }
    }

    // Shared read-only precomputation.
    const Eigen::MatrixXd sigma = toeplitz_cov(cfg.k, cfg.z_var, cfg.z_rho);
    const Eigen::MatrixXd chol_lower = sigma.llt().matrixL();
    const Eigen::VectorXd kappa = design_kappa(cfg.design, cfg.k);
    const double rho =
        rho_from_mu2(cfg.mu2, kappa, sigma, cfg.n, cfg.sigma_v2);
    const Eigen::VectorXd pi = rho * kappa;
    result.first_stage_support = static_cast<int>(kappa.sum());

    std::vector<double> q_normal(n_alpha);
    std::vector<double> sup_cv(n_alpha);
    for (std::size_t a = 0; a < n_alpha; ++a) {
        q_normal[a] = normal_quantile(1.0 - cfg.alpha_grid[a]);
        sup_cv[a] = sup_score_critical_value(cfg.alpha_grid[a], cfg.k, cfg.n,
                                             cfg.c_bcch, cfg.supscore_scaling);
    }

    const bool fixed_z = !cfg.redraw_instruments;
    Eigen::MatrixXd fixed_z_matrix;
    if (fixed_z) {
        fixed_z_matrix = draw_instruments(cfg, chol_lower, 0);
    }

    struct ThreadTally {
        std::map<TestName, TestCellTable> tables;
        long negvar = 0;
    };

    unsigned hw = std::thread::hardware_concurrency();
    if (hw == 0) hw = 1;
    const auto n_threads = static_cast<std::size_t>(
        cfg.threads > 0 ? cfg.threads
                        : std::min<std::size_t>(hw, reps));

    std::vector<ThreadTally> tallies(n_threads);
    for (auto& tally : tallies) {
        for (TestName t : cfg.tests) {
            TestCellTable table;
            table.reject_counts.assign(n_beta, std::vector<long>(n_alpha, 0));
            table.eval_counts.assign(n_beta, 0);
            tally.tables.emplace(t, std::move(table));
        }
    }

    std::atomic<std::size_t> next_rep{0};

    auto worker = [&](std::size_t thread_id) {
        ThreadTally& tally = tallies[thread_id];
        for (;;) {
            const std::size_t rep = next_rep.fetch_add(1);
            if (rep >= reps) break;

            Eigen::MatrixXd Z =
                fixed_z ? fixed_z_matrix
                        : draw_instruments(cfg, chol_lower, rep);
            const ErrorDraws err = draw_errors(cfg, rep);
            const Eigen::VectorXd x = Z * pi + err.v;
            const Eigen::VectorXd y = cfg.beta_true * x + err.eps;

            const Eigen::MatrixXd Zs = standardise_columns(Z);
            const RidgeKernel kern = build_kernel(Zs);
            const PenaltySelection sel = select_gamma(kern, cfg.gamma_floor);
            result.gamma_star_per_rep[rep] = sel.gamma_star;

            std::optional<RjarContext> rjar_ctx;
            std::optional<CmsContext> cms_ctx;
            std::optional<MsContext> ms_ctx;
            bool draw_supports_projection = kern.r == kern.k;

            for (std::size_t b = 0; b < n_beta; ++b) {
                const Eigen::VectorXd e = y - beta0_grid[b] * x;
                const Eigen::VectorXd* e_ptr = &e;

                for (TestName t : cfg.tests) {
                    TestCellTable& table = tally.tables.at(t);
                    if (!result.tables.at(t).applicable) continue;
                    try {
                        double stat = 0.0;
                        bool negvar = false;
                        switch (t) {
                            case TestName::Rjar:
                                if (!rjar_ctx) rjar_ctx.emplace(kern, sel);
                                stat = rjar_ctx->statistic(*e_ptr);
                                break;
                            case TestName::Cms:
                                if (!draw_supports_projection) {
                                    throw NotApplicableError(
                                        "draw has rank(Z) < k");
                                }
                                if (!cms_ctx) {
                                    cms_ctx.emplace(materialize(kern, 0.0));
                                }
                                stat = cms_ctx->statistic(*e_ptr);
                                break;
                            case TestName::Ms: {
                                if (!draw_supports_projection) {
                                    throw NotApplicableError(
                                        "draw has rank(Z) < k");
                                }
                                if (!ms_ctx) {
                                    ms_ctx.emplace(materialize(kern, 0.0));
                                }
                                const std::optional<double> s =
                                    ms_ctx->statistic(*e_ptr);
                                if (!s) {
                                    negvar = true;
                                    stat = std::numeric_limits<
                                        double>::quiet_NaN();
                                } else {
                                    stat = *s;
                                }
                                break;
                            }
                            case TestName::SupScore:
                                stat = sup_score_statistic(Zs, *e_ptr);
                                break;
                        }

                        table.eval_counts[b] += 1;
                        if (cfg.keep_traces) {
                            result.traces.at(t)[rep * n_beta + b] = stat;
                        }
                        if (negvar) {
                            tally.negvar += 1;
                            continue; // forced non-rejection at every alpha
                        }
                        for (std::size_t a = 0; a < n_alpha; ++a) {
                            const double cv = t == TestName::SupScore
                                                  ? sup_cv[a]
                                                  : q_normal[a];
                            if (stat > cv) table.reject_counts[b][a] += 1;
                        }
                    } catch (const Error&) {
                        table.errors += 1;
                    }
                }
            }
        }
    };

    if (n_threads == 1) {
        worker(0);
    } else {
        std::vector<std::thread> pool;
        pool.reserve(n_threads);
        for (std::size_t t = 0; t < n_threads; ++t) {
            pool.emplace_back(worker, t);
        }
        for (auto& th : pool) th.join();
    }

    // Integer merges are exact, so totals do not depend on scheduling.
    for (const auto& tally : tallies) {
        result.ms_negative_variance_count += tally.negvar;
        for (const auto& [t, table] : tally.tables) {
            TestCellTable& dst = result.tables.at(t);
            dst.errors += table.errors;
            for (std::size_t b = 0; b < n_beta; ++b) {
                dst.eval_counts[b] += table.eval_counts[b];
                for (std::size_t a = 0; a < n_alpha; ++a) {
                    dst.reject_counts[b][a] += table.reject_counts[b][a];
                }
            }
        }
    }

    std::vector<double> sorted_gamma = result.gamma_star_per_rep;
    std::sort(sorted_gamma.begin(), sorted_gamma.end());
    result.gamma_star_median = quantile_sorted(sorted_gamma, 0.5);
    result.gamma_star_iqr = quantile_sorted(sorted_gamma, 0.75) -
                            quantile_sorted(sorted_gamma, 0.25);
    return result;
}

std::vector<SweepRow> assumption_sweep(const std::vector<int>& n_grid,
                                       double ratio, const SimConfig& params) {
    if (!(ratio > 0.0)) throw DomainError("ratio must be positive");
    std::vector<SweepRow> rows;
    rows.reserve(n_grid.size());
    for (std::size_t idx = 0; idx < n_grid.size(); ++idx) {
        SimConfig cfg = params;
        cfg.n = n_grid[idx];
        cfg.k = static_cast<int>(std::ceil(ratio * n_grid[idx]));
        cfg.reps = 1;
        validate(cfg);
        const Eigen::MatrixXd sigma =
            toeplitz_cov(cfg.k, cfg.z_var, cfg.z_rho);
        const Eigen::MatrixXd chol_lower = sigma.llt().matrixL();
        const Eigen::MatrixXd Z =
            draw_instruments(cfg, chol_lower, static_cast<std::uint64_t>(idx));
        const RidgeKernel kern = build_kernel(standardise_columns(Z));
        const PenaltySelection sel = select_gamma(kern, cfg.gamma_floor);
        rows.push_back({cfg.n, sel.gamma_star,
                        sel.s_at_star / static_cast<double>(kern.r)});
    }
    return rows;
}

} // namespace rjar
