// JSON config ingestion and report serialization. Schema errors carry the
// offending field path.
#pragma once

#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "lssclt/montecarlo.hpp"

namespace lssclt {

using nlohmann::json;

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct CompareTolerances {
    double mean_tol = 0.1;          // |normalized mean|
    double var_tol = 0.15;          // |normalized variance - 1|
    double ks_p_min = 0.005;
    double gamma_var_rel_tol = 0.15;
};

struct RunConfig {
    PopulationSpectrum spectrum;
    MomentProfile moments = MomentProfile::gaussian_real();
    std::vector<std::string> kernel_specs{"x"};
    SampleConfig sim;
    ContourOptions contour;
    SolverOptions solver;
    ValidationOptions validation;
    CompareTolerances compare;
    std::string out_dir = ".";
};

namespace detail {

inline double number_at(const json& j, const std::string& path, const char* key,
                        std::optional<double> fallback = std::nullopt) {
    if (!j.contains(key)) {
        if (fallback) return *fallback;
        throw ConfigError(path + "." + key + ": missing");
    }
    const auto& v = j.at(key);
    if (v.is_string()) {
        // fractions like "1/3" keep the n-exponents exact in configs
        const std::string s = v.get<std::string>();
        const auto slash = s.find('/');
        try {
            if (slash == std::string::npos) return std::stod(s);
            return std::stod(s.substr(0, slash)) / std::stod(s.substr(slash + 1));
        } catch (const std::exception&) {
            throw ConfigError(path + "." + key + ": bad number '" + s + "'");
        }
    }
    if (!v.is_number()) throw ConfigError(path + "." + key + ": expected a number");
    return v.get<double>();
}

}  // namespace detail

inline RunConfig parse_config_json(const json& j) {
    RunConfig cfg;
    try {
        cfg.spectrum.p = static_cast<int>(detail::number_at(j, "$", "p"));
        cfg.spectrum.n = static_cast<int>(detail::number_at(j, "$", "n"));

        if (j.contains("spikes")) {
            int idx = 0;
            for (const auto& s : j.at("spikes")) {
                const std::string path = "$.spikes[" + std::to_string(idx++) + "]";
                SpikeGroup g;
                g.coeff = detail::number_at(s, path, "coeff", 1.0);
                g.exponent = detail::number_at(s, path, "exponent", 0.0);
                g.offset = detail::number_at(s, path, "offset", 0.0);
                g.multiplicity = static_cast<int>(detail::number_at(s, path, "multiplicity", 1.0));
                if (g.multiplicity < 1) throw ConfigError(path + ".multiplicity: must be >= 1");
                cfg.spectrum.spikes.push_back(g);
            }
        }

        if (!j.contains("bulk")) throw ConfigError("$.bulk: missing");
        const int pb = cfg.spectrum.p - cfg.spectrum.spike_count();
        int idx = 0;
        for (const auto& b : j.at("bulk")) {
            const std::string path = "$.bulk[" + std::to_string(idx++) + "]";
            BulkAtom a;
            a.value = detail::number_at(b, path, "value");
            if (a.value <= 0.0) throw ConfigError(path + ".value: must be positive");
            if (b.contains("weight")) {
                a.weight = detail::number_at(b, path, "weight");
            } else if (b.contains("count")) {
                a.weight = detail::number_at(b, path, "count") / pb;
            } else {
                throw ConfigError(path + ": needs 'weight' or 'count'");
            }
            if (a.weight <= 0.0) throw ConfigError(path + ".weight: must be positive");
            cfg.spectrum.bulk.atoms.push_back(a);
        }
        if (std::abs(cfg.spectrum.bulk.weight_sum() - 1.0) > 1e-12)
            throw ConfigError("$.bulk: weights must sum to 1");

        if (j.contains("kernels")) {
            cfg.kernel_specs.clear();
            for (const auto& k : j.at("kernels")) cfg.kernel_specs.push_back(k.get<std::string>());
            if (cfg.kernel_specs.empty()) throw ConfigError("$.kernels: empty list");
            for (const auto& s : cfg.kernel_specs) (void)Kernel::parse(s);  // fail early
        }

        if (j.contains("moments")) {
            const auto& m = j.at("moments");
            if (m.contains("distribution")) {
                const std::string d = m.at("distribution").get<std::string>();
                if (d == "gaussian") cfg.moments = MomentProfile::gaussian_real();
                else if (d == "rademacher") cfg.moments = MomentProfile::rademacher_real();
                else if (d == "uniform-standardized") cfg.moments = MomentProfile::uniform_real();
                else if (d == "gaussian-complex") cfg.moments = MomentProfile::gaussian_complex();
                else throw ConfigError("$.moments.distribution: unknown '" + d + "'");
            } else {
                cfg.moments.alpha_x = detail::number_at(m, "$.moments", "alpha_x", 1.0);
                cfg.moments.beta_x = detail::number_at(m, "$.moments", "beta_x", 0.0);
                cfg.moments.q = static_cast<int>(detail::number_at(m, "$.moments", "q", 1.0));
                cfg.moments.fourth_moment =
                    detail::number_at(m, "$.moments", "fourth_moment",
                                      cfg.moments.beta_x + cfg.moments.alpha_x + 2.0);
            }
            if (m.contains("u1")) {
                const auto& u = m.at("u1");
                const int rows = static_cast<int>(u.size());
                if (rows != cfg.spectrum.p) throw ConfigError("$.moments.u1: needs p rows");
                const int cols = static_cast<int>(u.at(0).size());
                Eigen::MatrixXd u1(rows, cols);
                for (int r = 0; r < rows; ++r)
                    for (int cidx = 0; cidx < cols; ++cidx) u1(r, cidx) = u.at(r).at(cidx).get<double>();
                cfg.moments.u1 = u1;
            }
        }

        if (j.contains("simulation")) {
            const auto& s = j.at("simulation");
            cfg.sim.reps = static_cast<int>(detail::number_at(s, "$.simulation", "reps", 3000.0));
            if (cfg.sim.reps < 1) throw ConfigError("$.simulation.reps: must be >= 1");
            cfg.sim.seed = static_cast<std::uint64_t>(
                detail::number_at(s, "$.simulation", "seed", 0.0));
            cfg.sim.parallel = s.value("parallel", true);
            cfg.sim.threads = static_cast<int>(detail::number_at(s, "$.simulation", "threads", 0.0));
            const std::string d = s.value("entry_dist", "gaussian");
            if (d == "gaussian") cfg.sim.entry_dist = EntryDist::gaussian;
            else if (d == "rademacher") cfg.sim.entry_dist = EntryDist::rademacher;
            else if (d == "uniform-standardized") cfg.sim.entry_dist = EntryDist::uniform_standardized;
            else throw ConfigError("$.simulation.entry_dist: unknown '" + d + "'");
        }
        cfg.sim.spectrum = cfg.spectrum;

        if (j.contains("contour")) {
            const auto& c = j.at("contour");
            cfg.contour.margin = detail::number_at(c, "$.contour", "margin", 0.1);
            cfg.contour.nodes_per_side =
                static_cast<int>(detail::number_at(c, "$.contour", "nodes", 1024.0));
            cfg.contour.nodes_per_side_double =
                static_cast<int>(detail::number_at(c, "$.contour", "nodes_double", 256.0));
        }
        if (j.contains("validation")) {
            const auto& v = j.at("validation");
            cfg.validation.mn_ratio_warn = detail::number_at(v, "$.validation", "mn_ratio_warn", 0.1);
            cfg.validation.separation_warn =
                detail::number_at(v, "$.validation", "separation_warn", 2.0);
        }
        if (j.contains("compare")) {
            const auto& t = j.at("compare");
            cfg.compare.mean_tol = detail::number_at(t, "$.compare", "mean_tol", 0.1);
            cfg.compare.var_tol = detail::number_at(t, "$.compare", "var_tol", 0.15);
            cfg.compare.ks_p_min = detail::number_at(t, "$.compare", "ks_p_min", 0.005);
            cfg.compare.gamma_var_rel_tol =
                detail::number_at(t, "$.compare", "gamma_var_rel_tol", 0.15);
        }
        if (j.contains("out_dir")) cfg.out_dir = j.at("out_dir").get<std::string>();

        cfg.spectrum.validate();
    } catch (const ConfigError&) {
        throw;
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    return cfg;
}

inline RunConfig parse_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open '" + path + "'");
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError("config: JSON syntax error in '" + path + "': " + e.what());
    }
    return parse_config_json(j);
}

inline json to_json(const RunConfig& cfg) {
    json j;
    j["p"] = cfg.spectrum.p;
    j["n"] = cfg.spectrum.n;
    j["spikes"] = json::array();
    for (const auto& s : cfg.spectrum.spikes)
        j["spikes"].push_back({{"coeff", s.coeff},
                               {"exponent", s.exponent},
                               {"offset", s.offset},
                               {"multiplicity", s.multiplicity}});
    j["bulk"] = json::array();
    for (const auto& a : cfg.spectrum.bulk.atoms)
        j["bulk"].push_back({{"value", a.value}, {"weight", a.weight}});
    j["kernels"] = cfg.kernel_specs;
    j["moments"] = {{"alpha_x", cfg.moments.alpha_x},
                    {"beta_x", cfg.moments.beta_x},
                    {"q", cfg.moments.q},
                    {"fourth_moment", cfg.moments.fourth_moment}};
    j["simulation"] = {{"reps", cfg.sim.reps},
                       {"seed", cfg.sim.seed},
                       {"parallel", cfg.sim.parallel},
                       {"threads", cfg.sim.threads},
                       {"entry_dist", to_string(cfg.sim.entry_dist)}};
    j["contour"] = {{"margin", cfg.contour.margin},
                    {"nodes", cfg.contour.nodes_per_side},
                    {"nodes_double", cfg.contour.nodes_per_side_double}};
    j["validation"] = {{"mn_ratio_warn", cfg.validation.mn_ratio_warn},
                       {"separation_warn", cfg.validation.separation_warn}};
    j["compare"] = {{"mean_tol", cfg.compare.mean_tol},
                    {"var_tol", cfg.compare.var_tol},
                    {"ks_p_min", cfg.compare.ks_p_min},
                    {"gamma_var_rel_tol", cfg.compare.gamma_var_rel_tol}};
    j["out_dir"] = cfg.out_dir;
    return j;
}

inline json to_json(const ValidationReport& rep) {
    json out = json::array();
    for (const auto& e : rep.entries) {
        const char* st = e.status == CheckStatus::pass ? "pass"
                         : e.status == CheckStatus::warn ? "warn" : "fail";
        out.push_back({{"name", e.name}, {"status", st}, {"message", e.message}, {"value", e.value}});
    }
    return out;
}

inline json to_json(const CltPrediction& pred) {
    json j;
    j["kernels"] = pred.kernel_names;
    j["rho"] = pred.rho;
    j["mean"] = pred.mean;
    const auto h = pred.cov.rows();
    json cov = json::array();
    for (Eigen::Index s = 0; s < h; ++s) {
        json row = json::array();
        for (Eigen::Index t = 0; t < h; ++t) row.push_back(pred.cov(s, t));
        cov.push_back(row);
    }
    j["cov"] = cov;
    json groups = json::array();
    for (const auto& g : pred.spiked.groups)
        groups.push_back({{"alpha", g.alpha},
                          {"multiplicity", g.multiplicity},
                          {"phi_n", g.phi},
                          {"theta", g.theta},
                          {"nu", g.nu},
                          {"sigma_sq", g.sigma_sq}});
    j["spiked_groups"] = groups;
    json diag;
    diag["bulk_mean"] = pred.bulk_mean_raw;
    json bc = json::array(), sc = json::array();
    for (Eigen::Index s = 0; s < h; ++s) {
        json brow = json::array(), srow = json::array();
        for (Eigen::Index t = 0; t < h; ++t) {
            brow.push_back(pred.bulk_cov_raw(s, t));
            srow.push_back(pred.spiked_cov_raw(s, t));
        }
        bc.push_back(brow);
        sc.push_back(srow);
    }
    diag["bulk_cov"] = bc;
    diag["spiked_cov"] = sc;
    json shares = json::array();
    for (Eigen::Index l = 0; l < h; ++l)
        shares.push_back(pred.spiked_variance_share(static_cast<std::size_t>(l)));
    diag["spiked_variance_share"] = shares;
    diag["rho_multiplicity_weighted"] = pred.rho_multiplicity_weighted;
    j["diagnostics"] = diag;
    return j;
}

inline json to_json(const SimulationReport& rep, bool include_samples = true) {
    json j;
    j["reps_total"] = rep.reps_total;
    j["reps_invalid"] = rep.reps_invalid;
    j["eigen_identity_violations"] = rep.eigen_identity_violations;
    j["elapsed_seconds"] = rep.elapsed_seconds;
    j["seed"] = rep.seed;
    json kernels = json::array();
    for (const auto& k : rep.kernels) {
        json kk;
        kk["kernel"] = k.kernel;
        kk["sample_mean"] = k.sample_mean;
        kk["sample_variance"] = k.sample_variance;
        kk["predicted_mean"] = k.predicted_mean;
        kk["predicted_variance"] = k.predicted_variance;
        kk["normalized_mean"] = k.normalized_mean;
        kk["normalized_variance"] = k.normalized_variance;
        if (k.ks) kk["ks"] = {{"statistic", k.ks->statistic}, {"p_value", k.ks->p_value}};
        kk["lemma2_mc_mean"] = k.lemma2_mc_mean;
        kk["lemma2_mc_se"] = k.lemma2_mc_se;
        kk["spiked_bulk_correlation"] = k.spiked_bulk_correlation;
        if (include_samples) kk["samples"] = k.samples;
        kernels.push_back(kk);
    }
    j["kernels"] = kernels;
    json groups = json::array();
    for (const auto& g : rep.groups) {
        json gg;
        gg["phi_n"] = g.phi;
        gg["sigma_sq_predicted"] = g.sigma_sq_predicted;
        gg["gamma_sum_mean"] = g.gamma_sum_mean;
        gg["gamma_sum_variance"] = g.gamma_sum_variance;
        if (include_samples) gg["gamma_sums"] = g.gamma_sums;
        groups.push_back(gg);
    }
    j["groups"] = groups;
    return j;
}

inline void write_histogram_csv(std::ostream& os, const std::vector<HistogramRow>& rows) {
    os << "bin_left,bin_right,count,density\n";
    for (const auto& r : rows)
        os << r.bin_left << "," << r.bin_right << "," << r.count << "," << r.density << "\n";
}

}  // namespace lssclt
