// Command-line front end: theory / simulate / compare / density.
//
// Exit codes: 0 success, 1 config error, 2 numeric error, 3 tolerance failure
// in `compare`.
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "lssclt/lssclt.hpp"

namespace fs = std::filesystem;
using namespace lssclt;

namespace {

struct CommonArgs {
    std::string config_path;
    std::string out_dir;
    std::string kernels_csv;
    std::uint64_t seed = 0;
    bool seed_set = false;
    int reps = 0;
    int nodes = 0;
    double margin = 0.0;
};

void add_common(CLI::App* cmd, CommonArgs& a) {
    cmd->add_option("--config", a.config_path, "JSON config file")->required();
    cmd->add_option("--out", a.out_dir, "output directory");
    cmd->add_option("--kernels", a.kernels_csv, "comma-separated kernel list override");
    cmd->add_option("--seed", a.seed, "RNG seed override")->each([&a](const std::string&) {
        a.seed_set = true;
    });
    cmd->add_option("--reps", a.reps, "repetition count override");
    cmd->add_option("--nodes", a.nodes, "quadrature nodes per side override");
    cmd->add_option("--margin", a.margin, "contour margin override");
}

RunConfig load(const CommonArgs& a) {
    RunConfig cfg = parse_config(a.config_path);
    if (!a.out_dir.empty()) cfg.out_dir = a.out_dir;
    if (!a.kernels_csv.empty()) {
        cfg.kernel_specs.clear();
        std::stringstream ss(a.kernels_csv);
        std::string item;
        while (std::getline(ss, item, ',')) cfg.kernel_specs.push_back(item);
        for (const auto& s : cfg.kernel_specs) (void)Kernel::parse(s);
    }
    if (a.seed_set) cfg.sim.seed = a.seed;
    if (a.reps > 0) cfg.sim.reps = a.reps;
    if (a.nodes > 0) {
        cfg.contour.nodes_per_side = a.nodes;
        cfg.contour.nodes_per_side_double = std::max(64, a.nodes / 4);
    }
    if (a.margin > 0.0) cfg.contour.margin = a.margin;
    cfg.sim.spectrum = cfg.spectrum;
    return cfg;
}

void write_file(const fs::path& path, const std::string& content) {
    fs::create_directories(path.parent_path().empty() ? "." : path.parent_path());
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << content;
}

std::string sanitize(std::string name) {
    for (auto& ch : name)
        if (ch == '^' || ch == ':' || ch == ',' || ch == '/') ch = '_';
    return name;
}

int print_validation(const RunConfig& cfg) {
    auto vrep = validate_assumptions(cfg.spectrum, cfg.moments, cfg.validation);
    for (const auto& e : vrep.entries) {
        const char* st = e.status == CheckStatus::pass ? "pass"
                         : e.status == CheckStatus::warn ? "WARN" : "FAIL";
        std::cout << "  [" << st << "] " << e.name << " (" << e.value << ") " << e.message << "\n";
    }
    return vrep.has_fail() ? 1 : 0;
}

int cmd_theory(const CommonArgs& a) {
    RunConfig cfg = load(a);
    std::cout << "model validation:\n";
    if (print_validation(cfg) != 0) {
        std::cerr << "error: model assumptions failed validation\n";
        return 1;
    }
    const auto kernels = parse_kernels(cfg.kernel_specs);
    CltOptions opts{cfg.contour, cfg.solver};
    const CltPrediction pred = clt_prediction(cfg.spectrum, cfg.moments, kernels, opts);
    json out;
    out["config"] = to_json(cfg);
    out["prediction"] = to_json(pred);
    write_file(fs::path(cfg.out_dir) / "report.json", out.dump(2) + "\n");
    std::cout << "asymptotic law of the normalized LSS vector:\n";
    for (std::size_t l = 0; l < kernels.size(); ++l)
        std::cout << "  f=" << pred.kernel_names[l] << ": rho=" << pred.rho[l]
                  << " mean=" << pred.mean[l] << " var=" << pred.cov(l, l)
                  << " (spiked share " << pred.spiked_variance_share(l) << ")\n";
    std::cout << "report written to " << (fs::path(cfg.out_dir) / "report.json").string() << "\n";
    return 0;
}

SimulationReport simulate_impl(const RunConfig& cfg, const std::vector<Kernel>& kernels) {
    RunOptions ropts;
    ropts.clt = CltOptions{cfg.contour, cfg.solver};
    return run_experiment(cfg.sim, cfg.moments, kernels, ropts);
}

void emit_simulation(const RunConfig& cfg, const SimulationReport& rep) {
    json out;
    out["config"] = to_json(cfg);
    out["simulation"] = to_json(rep);
    write_file(fs::path(cfg.out_dir) / "report.json", out.dump(2) + "\n");
    for (const auto& k : rep.kernels) {
        std::ostringstream os;
        write_histogram_csv(os, histogram_normalized(k));
        write_file(fs::path(cfg.out_dir) / ("hist_" + sanitize(k.kernel) + ".csv"), os.str());
    }
}

int cmd_simulate(const CommonArgs& a) {
    RunConfig cfg = load(a);
    const auto kernels = parse_kernels(cfg.kernel_specs);
    const SimulationReport rep = simulate_impl(cfg, kernels);
    emit_simulation(cfg, rep);
    std::cout << "simulated " << rep.reps_total << " reps (" << rep.reps_invalid
              << " invalid) in " << std::fixed << std::setprecision(1) << rep.elapsed_seconds
              << " s; report in " << cfg.out_dir << "\n";
    for (const auto& k : rep.kernels)
        std::cout << "  f=" << k.kernel << ": norm mean " << std::setprecision(4)
                  << k.normalized_mean << ", norm var " << k.normalized_variance << ", KS p "
                  << (k.ks ? k.ks->p_value : -1.0) << "\n";
    return 0;
}

int cmd_compare(const CommonArgs& a) {
    RunConfig cfg = load(a);
    const auto kernels = parse_kernels(cfg.kernel_specs);
    const SimulationReport rep = simulate_impl(cfg, kernels);
    emit_simulation(cfg, rep);
    const auto& tol = cfg.compare;
    bool ok = true;
    std::cout << "kernel        pred mean  emp mean   pred var   emp var    KS p      verdict\n";
    for (const auto& k : rep.kernels) {
        const bool mean_ok = std::abs(k.normalized_mean) <= tol.mean_tol;
        const bool var_ok = std::abs(k.normalized_variance - 1.0) <= tol.var_tol;
        const bool ks_ok = !k.ks || k.ks->p_value > tol.ks_p_min;
        const bool pass = mean_ok && var_ok && ks_ok;
        ok = ok && pass;
        std::cout << std::left << std::setw(12) << k.kernel << std::right << std::fixed
                  << std::setprecision(4) << std::setw(10) << k.predicted_mean << std::setw(10)
                  << k.sample_mean << std::setw(11) << k.predicted_variance << std::setw(10)
                  << k.sample_variance << std::setw(10)
                  << (k.ks ? k.ks->p_value : -1.0) << "   " << (pass ? "pass" : "FAIL") << "\n";
    }
    for (std::size_t g = 0; g < rep.groups.size(); ++g) {
        const auto& gr = rep.groups[g];
        const double rel = std::abs(gr.gamma_sum_variance - gr.sigma_sq_predicted) /
                           gr.sigma_sq_predicted;
        const bool pass = rel <= tol.gamma_var_rel_tol;
        ok = ok && pass;
        std::cout << "group " << g + 1 << " (phi_n=" << std::setprecision(3) << gr.phi
                  << "): Var(sum gamma) " << std::setprecision(4) << gr.gamma_sum_variance
                  << " vs sigma_k^2 " << gr.sigma_sq_predicted << " (" << std::setprecision(1)
                  << rel * 100.0 << "%)  " << (pass ? "pass" : "FAIL") << "\n";
    }
    std::cout << (ok ? "compare: all tolerances met\n" : "compare: tolerance failure\n");
    return ok ? 0 : 3;
}

int cmd_density(const CommonArgs& a) {
    RunConfig cfg = load(a);
    const double c = cfg.spectrum.c_nM();
    const auto intervals = support_edges(c, cfg.spectrum.bulk);
    std::ostringstream os;
    os << "x,density\n";
    const double lo = intervals.front().left_edge * 0.9;
    const double hi = intervals.back().right_edge * 1.1;
    const int npts = 800;
    for (int i = 0; i <= npts; ++i) {
        const double x = lo + (hi - lo) * i / npts;
        os << x << "," << density_at(x, c, cfg.spectrum.bulk) << "\n";
    }
    write_file(fs::path(cfg.out_dir) / "density.csv", os.str());
    std::cout << "support:";
    for (const auto& iv : intervals) std::cout << " [" << iv.left_edge << ", " << iv.right_edge << "]";
    std::cout << "\ndensity curve written to " << (fs::path(cfg.out_dir) / "density.csv").string()
              << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Gaussian law of linear spectral statistics for generalized spiked sample "
                 "covariance matrices, with Monte Carlo validation"};
    app.require_subcommand(1);

    CommonArgs a_theory, a_sim, a_cmp, a_dens;
    add_common(app.add_subcommand("theory", "compute the asymptotic mean/covariance"), a_theory);
    add_common(app.add_subcommand("simulate", "Monte Carlo experiment"), a_sim);
    add_common(app.add_subcommand("compare", "predicted vs empirical, with tolerances"), a_cmp);
    add_common(app.add_subcommand("density", "bulk LSD density curve"), a_dens);

    CLI11_PARSE(app, argc, argv);

    try {
        if (app.got_subcommand("theory")) return cmd_theory(a_theory);
        if (app.got_subcommand("simulate")) return cmd_simulate(a_sim);
        if (app.got_subcommand("compare")) return cmd_compare(a_cmp);
        if (app.got_subcommand("density")) return cmd_density(a_dens);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
