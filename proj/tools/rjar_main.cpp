// Command-line front end: test, confset, simulate, diagnose, sweep.
//
// Exit status: 0 success, 1 usage error, 2 data/model error (one
// machine-readable line on stderr: "error: CODE: message").

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "rjar/artests.hpp"
#include "rjar/confset.hpp"
#include "rjar/dataio.hpp"
#include "rjar/montecarlo.hpp"
#include "rjar/penalty.hpp"

namespace {

using json = nlohmann::json;

std::vector<std::string> split_list(const std::string& csv) {
    std::vector<std::string> out;
    std::string cur;
    std::stringstream ss(csv);
    while (std::getline(ss, cur, ',')) {
        if (!cur.empty()) out.push_back(cur);
    }
    return out;
}

std::vector<double> split_doubles(const std::string& csv) {
    std::vector<double> out;
    for (const auto& tok : split_list(csv)) {
        try {
            std::size_t pos = 0;
            const double v = std::stod(tok, &pos);
            if (pos != tok.size()) throw std::invalid_argument(tok);
            out.push_back(v);
        } catch (const std::exception&) {
            throw rjar::ConfigError("cannot parse number: " + tok);
        }
    }
    return out;
}

std::vector<int> split_ints(const std::string& csv) {
    std::vector<int> out;
    for (double v : split_doubles(csv)) out.push_back(static_cast<int>(v));
    return out;
}

// Full-precision, locale-independent doubles for CSV cells.
std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

// Relative output paths resolve against RJAR_OUTPUT_DIR when it is set.
std::filesystem::path resolve_out(const std::string& path) {
    std::filesystem::path p(path);
    if (p.is_relative()) {
        if (const char* dir = std::getenv("RJAR_OUTPUT_DIR")) {
            return std::filesystem::path(dir) / p;
        }
    }
    return p;
}

void write_file(const std::filesystem::path& path, const std::string& body) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw rjar::ConfigError("cannot open output file: " + path.string());
    }
    out << body;
}

void write_sidecar(const std::filesystem::path& data_path, const json& meta) {
    std::filesystem::path p = data_path;
    p += ".meta.json";
    write_file(p, meta.dump(2) + "\n");
}

json result_to_json(const rjar::TestResult& r) {
    json flags = json::array();
    if (r.negative_variance_no_reject) flags.push_back("NEGATIVE_VARIANCE_NO_REJECT");
    if (r.assumption3_questionable) flags.push_back("ASSUMPTION3_QUESTIONABLE");
    json j{{"name", rjar::to_string(r.test_name)},
           {"statistic", r.statistic},
           {"critical_value", r.critical_value},
           {"alpha", r.alpha},
           {"reject", r.reject},
           {"flags", flags}};
    j["gamma_star"] = r.gamma_used ? json(*r.gamma_used) : json(nullptr);
    j["variance"] = r.variance_estimate ? json(*r.variance_estimate) : json(nullptr);
    return j;
}

struct DataFlags {
    std::string input;
    std::string outcome;
    std::string endogenous;
    std::string instruments;
    std::string covariates;

    void attach(CLI::App* cmd) {
        cmd->add_option("--input", input, "CSV file with a header row")->required();
        cmd->add_option("--outcome", outcome, "Outcome column")->required();
        cmd->add_option("--endogenous", endogenous,
                        "Endogenous columns (comma list)")->required();
        cmd->add_option("--instruments", instruments,
                        "Instrument columns (comma list, trailing-* prefix "
                        "globs allowed)")->required();
        cmd->add_option("--covariates", covariates,
                        "Exogenous covariate columns (comma list)");
    }

    rjar::ColumnSchema schema() const {
        rjar::ColumnSchema s;
        s.outcome = outcome;
        s.endogenous = split_list(endogenous);
        s.instruments = split_list(instruments);
        s.covariates = split_list(covariates);
        return s;
    }

    json to_json() const {
        return json{{"input", input},
                    {"outcome", outcome},
                    {"endogenous", endogenous},
                    {"instruments", instruments},
                    {"covariates", covariates}};
    }
};

rjar::SupScoreScaling scaling_from_string(const std::string& s) {
    if (s == "scale_consistent") return rjar::SupScoreScaling::ScaleConsistent;
    if (s == "as_written") return rjar::SupScoreScaling::AsWritten;
    throw rjar::ConfigError("unknown supscore mode: " + s);
}

struct Pipeline {
    rjar::PartialledData pd;
    rjar::RidgeKernel kern;
    rjar::PenaltySelection sel;
};

Pipeline prepare(const DataFlags& data, double gamma_floor) {
    Pipeline p;
    const rjar::Dataset d = rjar::load_dataset(data.input, data.schema());
    p.pd = rjar::partial_and_standardise(d);
    p.kern = rjar::build_kernel(p.pd.Z_t);
    p.sel = rjar::select_gamma(p.kern, gamma_floor);
    return p;
}

int cmd_test(const DataFlags& data, const std::string& beta0_csv, double alpha,
             const std::string& tests_csv, double gamma_floor, double c_bcch,
             const std::string& supscore_mode, const std::string& out) {
    const Pipeline p = prepare(data, gamma_floor);
    const std::vector<double> beta0_vals = split_doubles(beta0_csv);
    Eigen::VectorXd beta0 =
        Eigen::Map<const Eigen::VectorXd>(beta0_vals.data(),
                                          static_cast<Eigen::Index>(beta0_vals.size()));
    const Eigen::VectorXd e = rjar::structural_residuals(p.pd, beta0);

    std::string body;
    for (const auto& name : split_list(tests_csv)) {
        const rjar::TestName t = rjar::test_from_string(name);
        rjar::check_applicable(t, p.kern.r, p.kern.k, p.kern.n);
        rjar::TestResult res;
        switch (t) {
            case rjar::TestName::Rjar:
                res = rjar::rjar(p.kern, p.sel, e, alpha);
                break;
            case rjar::TestName::Cms:
                res = rjar::cms_ar(rjar::materialize(p.kern, 0.0), e, alpha);
                break;
            case rjar::TestName::Ms:
                res = rjar::ms_ar(rjar::materialize(p.kern, 0.0), e, alpha);
                break;
            case rjar::TestName::SupScore:
                res = rjar::sup_score(p.pd.Z_t, e, alpha, c_bcch,
                                      scaling_from_string(supscore_mode));
                break;
        }
        body += result_to_json(res).dump() + "\n";
    }

    if (out.empty()) {
        std::cout << body;
    } else {
        const auto path = resolve_out(out);
        write_file(path, body);
        write_sidecar(path, json{{"command", "test"},
                                 {"data", data.to_json()},
                                 {"beta0", beta0_vals},
                                 {"alpha", alpha},
                                 {"tests", tests_csv},
                                 {"gamma_floor", gamma_floor},
                                 {"c_bcch", c_bcch},
                                 {"supscore_mode", supscore_mode},
                                 {"gamma_star", p.sel.gamma_star},
                                 {"r", p.kern.r},
                                 {"k", p.kern.k},
                                 {"n", p.kern.n}});
    }
    return 0;
}

int cmd_diagnose(const DataFlags& data, double gamma_floor,
                 const std::string& out) {
    const Pipeline p = prepare(data, gamma_floor);
    const rjar::Diagnostics d = rjar::assumption_diagnostics(p.kern, p.sel);
    const json j{{"gamma_star", d.gamma_star},
                 {"s_at_star", d.s_at_star},
                 {"implied_c", d.implied_c},
                 {"max_diag", d.max_diag},
                 {"r", d.r},
                 {"k", d.k},
                 {"n", d.n},
                 {"questionable", d.questionable},
                 {"dropped_instruments", p.pd.dropped_cols.size()}};
    const std::string body = j.dump(2) + "\n";
    if (out.empty()) {
        std::cout << body;
    } else {
        const auto path = resolve_out(out);
        write_file(path, body);
        write_sidecar(path, json{{"command", "diagnose"},
                                 {"data", data.to_json()},
                                 {"gamma_floor", gamma_floor}});
    }
    return 0;
}

int cmd_confset(const DataFlags& data, double grid_min, double grid_max,
                int grid_points, double alpha, const std::string& tests_csv,
                double gamma_floor, double c_bcch,
                const std::string& supscore_mode, const std::string& out) {
    const Pipeline p = prepare(data, gamma_floor);
    if (p.pd.g != 1) {
        throw rjar::ConfigError(
            "confset grid flags support a single endogenous regressor; got g = " +
            std::to_string(p.pd.g));
    }
    const auto grid = rjar::linear_grid(grid_min, grid_max, grid_points);

    rjar::InvertOptions opts;
    opts.c_bcch = c_bcch;
    opts.supscore_scaling = scaling_from_string(supscore_mode);

    std::string body = "test,beta0,statistic,critical_value,accepted\n";
    for (const auto& name : split_list(tests_csv)) {
        const rjar::TestName t = rjar::test_from_string(name);
        const rjar::ConfidenceSet cs =
            rjar::invert(p.pd, p.kern, p.sel, t, grid, alpha, opts);
        for (std::size_t i = 0; i < cs.grid.size(); ++i) {
            body += rjar::to_string(t) + "," + fmt(cs.grid[i](0)) + "," +
                    fmt(cs.results[i].statistic) + "," +
                    fmt(cs.results[i].critical_value) + "," +
                    (cs.accepted[i] ? "1" : "0") + "\n";
        }
    }

    if (out.empty()) {
        std::cout << body;
    } else {
        const auto path = resolve_out(out);
        write_file(path, body);
        write_sidecar(path, json{{"command", "confset"},
                                 {"data", data.to_json()},
                                 {"grid_min", grid_min},
                                 {"grid_max", grid_max},
                                 {"grid_points", grid_points},
                                 {"alpha", alpha},
                                 {"tests", tests_csv},
                                 {"gamma_floor", gamma_floor},
                                 {"c_bcch", c_bcch},
                                 {"supscore_mode", supscore_mode},
                                 {"gamma_star", p.sel.gamma_star}});
    }
    return 0;
}

json sim_config_json(const rjar::SimConfig& cfg) {
    json tests = json::array();
    for (auto t : cfg.tests) tests.push_back(rjar::to_string(t));
    return json{{"n", cfg.n},
                {"k", cfg.k},
                {"design", rjar::to_string(cfg.design)},
                {"mu2", cfg.mu2},
                {"sigma_eps2", cfg.sigma_eps2},
                {"sigma_v2", cfg.sigma_v2},
                {"corr_ev", cfg.corr_ev},
                {"z_var", cfg.z_var},
                {"z_rho", cfg.z_rho},
                {"beta_true", cfg.beta_true},
                {"reps", cfg.reps},
                {"seed", cfg.seed},
                {"alpha_grid", cfg.alpha_grid},
                {"tests", tests},
                {"redraw_instruments", cfg.redraw_instruments},
                {"gamma_floor", cfg.gamma_floor},
                {"c_bcch", cfg.c_bcch},
                {"supscore_mode",
                 cfg.supscore_scaling == rjar::SupScoreScaling::ScaleConsistent
                     ? "scale_consistent"
                     : "as_written"},
                {"threads", cfg.threads}};
}

int cmd_simulate(rjar::SimConfig cfg, const std::string& mu2_csv,
                 const std::string& alphas_csv, const std::string& tests_csv,
                 double beta0_min, double beta0_max, int beta0_points,
                 bool beta0_grid_set, double power_alpha,
                 const std::string& out_size, const std::string& out_power) {
    cfg.alpha_grid = split_doubles(alphas_csv);
    cfg.tests.clear();
    for (const auto& name : split_list(tests_csv)) {
        cfg.tests.push_back(rjar::test_from_string(name));
    }

    std::vector<double> beta0_grid;
    if (beta0_grid_set) {
        for (const auto& b : rjar::linear_grid(beta0_min, beta0_max, beta0_points)) {
            beta0_grid.push_back(b(0));
        }
    } else {
        beta0_grid.push_back(cfg.beta_true);
    }

    // The power column reports rejection at one nominal level.
    std::size_t power_alpha_idx = cfg.alpha_grid.size();
    for (std::size_t a = 0; a < cfg.alpha_grid.size(); ++a) {
        if (cfg.alpha_grid[a] == power_alpha) power_alpha_idx = a;
    }
    if (power_alpha_idx == cfg.alpha_grid.size()) {
        cfg.alpha_grid.push_back(power_alpha);
        power_alpha_idx = cfg.alpha_grid.size() - 1;
    }

    const std::vector<double> mu2_values = split_doubles(mu2_csv);
    std::string size_body = "alpha,test,frequency\n";
    std::string power_body = "beta0,mu2,test,frequency\n";
    json meta{{"command", "simulate"},
              {"mu2_values", mu2_values},
              {"power_alpha", power_alpha},
              {"beta0_grid", beta0_grid},
              {"experiments", json::array()}};

    for (double mu2 : mu2_values) {
        cfg.mu2 = mu2;
        const rjar::SimResult res = rjar::run_experiment(cfg, beta0_grid);

        // Size rows come from the true-null grid point.
        std::size_t truth_idx = beta0_grid.size();
        for (std::size_t b = 0; b < beta0_grid.size(); ++b) {
            if (beta0_grid[b] == cfg.beta_true) truth_idx = b;
        }
        for (const auto& [t, table] : res.tables) {
            if (!table.applicable) continue;
            if (truth_idx < beta0_grid.size()) {
                for (std::size_t a = 0; a < cfg.alpha_grid.size(); ++a) {
                    size_body += fmt(cfg.alpha_grid[a]) + "," +
                                 rjar::to_string(t) + "," +
                                 fmt(table.frequency(truth_idx, a)) + "\n";
                }
            }
            for (std::size_t b = 0; b < beta0_grid.size(); ++b) {
                power_body += fmt(beta0_grid[b]) + "," + fmt(mu2) + "," +
                              rjar::to_string(t) + "," +
                              fmt(table.frequency(b, power_alpha_idx)) + "\n";
            }
        }

        json skipped = json::object();
        for (const auto& [t, table] : res.tables) {
            if (!table.applicable) skipped[rjar::to_string(t)] = table.skip_reason;
        }
        meta["experiments"].push_back(
            json{{"config", sim_config_json(cfg)},
                 {"gamma_star_median", res.gamma_star_median},
                 {"gamma_star_iqr", res.gamma_star_iqr},
                 {"ms_negative_variance_count", res.ms_negative_variance_count},
                 {"first_stage_support", res.first_stage_support},
                 {"skipped_tests", skipped}});
    }

    const auto size_path = resolve_out(out_size);
    const auto power_path = resolve_out(out_power);
    write_file(size_path, size_body);
    write_file(power_path, power_body);
    write_sidecar(size_path, meta);
    write_sidecar(power_path, meta);
    return 0;
}

int cmd_sweep(const std::string& n_grid_csv, double ratio, double z_var,
              double z_rho, double gamma_floor, std::uint64_t seed,
              const std::string& out) {
    rjar::SimConfig params;
    params.z_var = z_var;
    params.z_rho = z_rho;
    params.gamma_floor = gamma_floor;
    params.seed = seed;
    const std::vector<int> n_grid = split_ints(n_grid_csv);
    const auto rows = rjar::assumption_sweep(n_grid, ratio, params);

    std::string body = "n,gamma_star,s_over_r\n";
    for (const auto& row : rows) {
        body += std::to_string(row.n) + "," + fmt(row.gamma_star) + "," +
                fmt(row.ratio) + "\n";
    }
    if (out.empty()) {
        std::cout << body;
    } else {
        const auto path = resolve_out(out);
        write_file(path, body);
        write_sidecar(path, json{{"command", "sweep"},
                                 {"n_grid", n_grid},
                                 {"ratio", ratio},
                                 {"z_var", z_var},
                                 {"z_rho", z_rho},
                                 {"gamma_floor", gamma_floor},
                                 {"seed", seed}});
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Weak-identification-robust IV inference with many instruments"};
    app.require_subcommand(1);

    // test
    auto* test_cmd = app.add_subcommand("test", "Run hypothesis tests at one null value");
    DataFlags test_data;
    test_data.attach(test_cmd);
    std::string beta0_csv = "0";
    double alpha = 0.05;
    std::string tests_csv = "rjar";
    double gamma_floor = 1.0;
    double c_bcch = 1.1;
    std::string supscore_mode = "scale_consistent";
    std::string out;
    test_cmd->add_option("--beta0", beta0_csv, "Null value(s), one per endogenous column")->required();
    test_cmd->add_option("--alpha", alpha, "Significance level");
    test_cmd->add_option("--tests", tests_csv, "Comma list: rjar,cms,ms,supscore");
    test_cmd->add_option("--gamma-floor", gamma_floor, "Lower penalty bound when rank(Z) < k");
    test_cmd->add_option("--c-bcch", c_bcch, "Sup Score critical-value constant");
    test_cmd->add_option("--supscore-mode", supscore_mode, "scale_consistent | as_written");
    test_cmd->add_option("--out", out, "Output file (default stdout)");

    // diagnose
    auto* diag_cmd = app.add_subcommand("diagnose", "Penalty selection and projection diagnostics");
    DataFlags diag_data;
    diag_data.attach(diag_cmd);
    double diag_floor = 1.0;
    std::string diag_out;
    diag_cmd->add_option("--gamma-floor", diag_floor, "Lower penalty bound when rank(Z) < k");
    diag_cmd->add_option("--out", diag_out, "Output file (default stdout)");

    // confset
    auto* conf_cmd = app.add_subcommand("confset", "Invert tests over a null-value grid");
    DataFlags conf_data;
    conf_data.attach(conf_cmd);
    double grid_min = 0.0, grid_max = 0.0;
    int grid_points = 100;
    double conf_alpha = 0.05;
    std::string conf_tests = "rjar";
    double conf_floor = 1.0;
    double conf_cbcch = 1.1;
    std::string conf_mode = "scale_consistent";
    std::string conf_out;
    conf_cmd->add_option("--grid-min", grid_min, "Lower grid bound")->required();
    conf_cmd->add_option("--grid-max", grid_max, "Upper grid bound")->required();
    conf_cmd->add_option("--grid-points", grid_points, "Grid size");
    conf_cmd->add_option("--alpha", conf_alpha, "Significance level");
    conf_cmd->add_option("--tests", conf_tests, "Comma list: rjar,cms,ms,supscore");
    conf_cmd->add_option("--gamma-floor", conf_floor, "Lower penalty bound when rank(Z) < k");
    conf_cmd->add_option("--c-bcch", conf_cbcch, "Sup Score critical-value constant");
    conf_cmd->add_option("--supscore-mode", conf_mode, "scale_consistent | as_written");
    conf_cmd->add_option("--out", conf_out, "Output CSV (default stdout)");

    // simulate
    auto* sim_cmd = app.add_subcommand("simulate", "Monte Carlo size and power experiments");
    rjar::SimConfig sim_cfg;
    std::string mu2_csv = "0";
    std::string alphas_csv = "0.05";
    std::string sim_tests = "rjar,cms,ms,supscore";
    std::string design_str = "sparse";
    double b0_min = 0.0, b0_max = 0.0;
    int b0_points = 1;
    double power_alpha = 0.05;
    std::string out_size = "size.csv";
    std::string out_power = "power.csv";
    bool no_redraw = false;
    sim_cmd->add_option("--n", sim_cfg.n, "Observations per replication");
    sim_cmd->add_option("--k", sim_cfg.k, "Number of instruments");
    sim_cmd->add_option("--design", design_str, "sparse | dense");
    sim_cmd->add_option("--mu2", mu2_csv, "Concentration parameter(s), comma list");
    sim_cmd->add_option("--reps", sim_cfg.reps, "Monte Carlo replications");
    sim_cmd->add_option("--seed", sim_cfg.seed, "RNG seed");
    sim_cmd->add_option("--alphas", alphas_csv, "Nominal sizes, comma list");
    sim_cmd->add_option("--tests", sim_tests, "Comma list: rjar,cms,ms,supscore");
    sim_cmd->add_option("--beta-true", sim_cfg.beta_true, "True coefficient");
    auto* b0min_opt = sim_cmd->add_option("--beta0-min", b0_min, "Null grid lower bound");
    sim_cmd->add_option("--beta0-max", b0_max, "Null grid upper bound");
    sim_cmd->add_option("--beta0-points", b0_points, "Null grid size");
    sim_cmd->add_option("--power-alpha", power_alpha, "Nominal size for the power output");
    sim_cmd->add_flag("--no-redraw-instruments", no_redraw,
                      "Hold one instrument draw fixed across replications");
    sim_cmd->add_option("--gamma-floor", sim_cfg.gamma_floor, "Lower penalty bound when rank(Z) < k");
    sim_cmd->add_option("--c-bcch", sim_cfg.c_bcch, "Sup Score critical-value constant");
    std::string sim_mode = "scale_consistent";
    sim_cmd->add_option("--supscore-mode", sim_mode, "scale_consistent | as_written");
    sim_cmd->add_option("--threads", sim_cfg.threads, "Worker threads (0 = all cores)");
    sim_cmd->add_option("--out-size", out_size, "Size CSV path");
    sim_cmd->add_option("--out-power", out_power, "Power CSV path");

    // sweep
    auto* sweep_cmd = app.add_subcommand("sweep", "Penalty diagnostics across sample sizes");
    std::string n_grid_csv = "250,500,1000,2000";
    double ratio = 1.9;
    double sweep_zvar = 0.3, sweep_zrho = 0.5, sweep_floor = 1.0;
    std::uint64_t sweep_seed = 0;
    std::string sweep_out;
    sweep_cmd->add_option("--n-grid", n_grid_csv, "Sample sizes, comma list");
    sweep_cmd->add_option("--ratio", ratio, "Instruments per observation (k = ceil(ratio * n))");
    sweep_cmd->add_option("--z-var", sweep_zvar, "Instrument variance");
    sweep_cmd->add_option("--z-rho", sweep_zrho, "Toeplitz correlation decay");
    sweep_cmd->add_option("--gamma-floor", sweep_floor, "Lower penalty bound when rank(Z) < k");
    sweep_cmd->add_option("--seed", sweep_seed, "RNG seed");
    sweep_cmd->add_option("--out", sweep_out, "Output CSV (default stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1; // help exits 0, any usage error exits 1
    }

    try {
        if (test_cmd->parsed()) {
            return cmd_test(test_data, beta0_csv, alpha, tests_csv, gamma_floor,
                            c_bcch, supscore_mode, out);
        }
        if (diag_cmd->parsed()) {
            return cmd_diagnose(diag_data, diag_floor, diag_out);
        }
        if (conf_cmd->parsed()) {
            return cmd_confset(conf_data, grid_min, grid_max, grid_points,
                               conf_alpha, conf_tests, conf_floor, conf_cbcch,
                               conf_mode, conf_out);
        }
        if (sim_cmd->parsed()) {
            sim_cfg.design = rjar::design_from_string(design_str);
            sim_cfg.redraw_instruments = !no_redraw;
            sim_cfg.supscore_scaling = scaling_from_string(sim_mode);
            return cmd_simulate(sim_cfg, mu2_csv, alphas_csv, sim_tests, b0_min,
                                b0_max, b0_points, b0min_opt->count() > 0,
                                power_alpha, out_size, out_power);
        }
        if (sweep_cmd->parsed()) {
            return cmd_sweep(n_grid_csv, ratio, sweep_zvar, sweep_zrho,
                             sweep_floor, sweep_seed, sweep_out);
        }
    } catch (const rjar::Error& err) {
        std::cerr << "error: " << err.code() << ": " << err.what() << "\n";
        return 2;
    } catch (const std::exception& err) {
        std::cerr << "error: INTERNAL: " << err.what() << "\n";
        return 2;
    }
    return 1;
}
