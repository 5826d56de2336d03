// Population covariance spectrum: spiked groups (possibly n-dependent) on top
// of a bounded atomic bulk distribution H, the phase-transition function
//
//   phi(x) = x (1 + c * sum_i w_i t_i / (x - t_i)),
//
// and structural validation of the model assumptions.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace lssclt {

// One group of equal spiked eigenvalues, resolved as coeff * n^exponent + offset.
struct SpikeGroup {
    double coeff = 1.0;
    double exponent = 0.0;  // power of n
    double offset = 0.0;
    int multiplicity = 1;

    double resolve(int n) const {
        return coeff * std::pow(static_cast<double>(n), exponent) + offset;
    }
};

struct BulkAtom {
    double value = 0.0;
    double weight = 0.0;
};

// Finitely many atoms; weights sum to 1.
struct BulkDistribution {
    std::vector<BulkAtom> atoms;

    double max_value() const {
        double m = 0.0;
        for (const auto& a : atoms) m = std::max(m, a.value);
        return m;
    }

    double weight_sum() const {
        double s = 0.0;
        for (const auto& a : atoms) s += a.weight;
        return s;
    }

    double mean() const {
        double s = 0.0;
        for (const auto& a : atoms) s += a.weight * a.value;
        return s;
    }

    double second_moment() const {
        double s = 0.0;
        for (const auto& a : atoms) s += a.weight * a.value * a.value;
        return s;
    }

    void validate() const {
        if (atoms.empty()) throw std::invalid_argument("bulk: no atoms");
        for (const auto& a : atoms) {
            if (a.value < 0.0) throw std::invalid_argument("bulk: negative atom value");
            if (a.weight <= 0.0) throw std::invalid_argument("bulk: nonpositive atom weight");
        }
        if (std::abs(weight_sum() - 1.0) > 1e-12)
            throw std::invalid_argument("bulk: weights do not sum to 1");
    }

    static BulkDistribution point_mass(double value) { return BulkDistribution{{{value, 1.0}}}; }
};

// Fourth/second moment profile of the matrix entries (Assumptions 1, 4, 5).
//   alpha_x = |E x^2|^2, beta_x = E|x|^4 - alpha_x - 2, q = 1 real / 0 complex.
struct MomentProfile {
    double alpha_x = 1.0;
    double beta_x = 0.0;
    int q = 1;
    double fourth_moment = 3.0;  // E|x_11|^4
    std::optional<Eigen::MatrixXd> u1;  // p x M orthonormal block; canonical basis if absent

    static MomentProfile gaussian_real() { return {1.0, 0.0, 1, 3.0, std::nullopt}; }
    static MomentProfile rademacher_real() { return {1.0, -2.0, 1, 1.0, std::nullopt}; }
    static MomentProfile uniform_real() { return {1.0, -1.2, 1, 1.8, std::nullopt}; }
    static MomentProfile gaussian_complex() { return {0.0, 0.0, 0, 2.0, std::nullopt}; }

    bool moments_consistent(double tol = 1e-9) const {
        return std::abs(beta_x - (fourth_moment - alpha_x - 2.0)) <= tol;
    }
};

struct PopulationSpectrum {
    std::vector<SpikeGroup> spikes;
    BulkDistribution bulk;
    int p = 0;
    int n = 0;

    int spike_count() const {  // M
        int m = 0;
        for (const auto& s : spikes) m += s.multiplicity;
        return m;
    }
    int bulk_count() const { return p - spike_count(); }
    double c_n() const { return static_cast<double>(p) / n; }
    double c_nM() const { return static_cast<double>(bulk_count()) / n; }

    void validate() const {
        if (p <= 0 || n <= 0) throw std::invalid_argument("spectrum: p and n must be positive");
        bulk.validate();
        for (const auto& s : spikes) {
            if (s.multiplicity < 1) throw std::invalid_argument("spectrum: spike multiplicity < 1");
        }
        if (spike_count() >= p) throw std::invalid_argument("spectrum: total spike multiplicity must be < p");
        if (spike_count() >= n) throw std::invalid_argument("spectrum: M/n must be < 1");
    }
};

struct ResolvedSpike {
    double value = 0.0;
    int multiplicity = 0;
};

// Materializes the spike expressions at the configured n; descending, groups
// with equal resolved values merged.
inline std::vector<ResolvedSpike> resolve_spikes(const PopulationSpectrum& spec) {
    if (spec.n < 1) throw std::invalid_argument("resolve_spikes: n >= 1 required");
    std::vector<ResolvedSpike> out;
    for (const auto& g : spec.spikes) out.push_back({g.resolve(spec.n), g.multiplicity});
    std::sort(out.begin(), out.end(),
              [](const ResolvedSpike& a, const ResolvedSpike& b) { return a.value > b.value; });
    std::vector<ResolvedSpike> merged;
    for (const auto& s : out) {
        if (!merged.empty() &&
            std::abs(merged.back().value - s.value) <= 1e-12 * std::max(1.0, std::abs(s.value))) {
            merged.back().multiplicity += s.multiplicity;
        } else {
            merged.push_back(s);
        }
    }
    const double bulk_max = spec.bulk.max_value();
    for (const auto& s : merged) {
        if (s.value <= bulk_max) {
            std::ostringstream os;
            os << "spike below bulk: resolved spike " << s.value
               << " does not exceed max bulk eigenvalue " << bulk_max;
            throw std::domain_error(os.str());
        }
    }
    return merged;
}

inline double phi(double alpha, double c, const BulkDistribution& H) {
    double s = 0.0;
    for (const auto& a : H.atoms) {
        if (alpha == a.value) throw std::domain_error("phi: alpha equals a bulk atom (pole)");
        s += a.weight * a.value / (alpha - a.value);
    }
    return alpha * (1.0 + c * s);
}

// d phi / d alpha; positive value means the spike is above the phase transition.
inline double phi_prime(double alpha, double c, const BulkDistribution& H) {
    double s1 = 0.0, s2 = 0.0;
    for (const auto& a : H.atoms) {
        if (alpha == a.value) throw std::domain_error("phi_prime: alpha equals a bulk atom (pole)");
        const double d = alpha - a.value;
        s1 += a.weight * a.value / d;
        s2 += a.weight * a.value / (d * d);
    }
    return 1.0 + c * s1 - c * alpha * s2;
}

// Finite-n surrogate pair of Lemma 1's proof:
//   H_n  : M atoms at zero plus the bulk, weights over p points (c_n  = p/n)
//   H_2n : the bulk alone, weights over p - M points        (c_nM = (p-M)/n)
struct HnPair {
    BulkDistribution h_n;
    BulkDistribution h_2n;
    double c_n = 0.0;
    double c_nM = 0.0;
};

inline HnPair build_H_n(const PopulationSpectrum& spec) {
    spec.validate();
    const int M = spec.spike_count();
    const int pb = spec.bulk_count();
    HnPair out;
    out.c_n = spec.c_n();
    out.c_nM = spec.c_nM();
    out.h_2n = spec.bulk;
    if (M > 0) {
        out.h_n.atoms.push_back({0.0, static_cast<double>(M) / spec.p});
        for (const auto& a : spec.bulk.atoms)
            out.h_n.atoms.push_back({a.value, a.weight * pb / spec.p});
    } else {
        out.h_n = spec.bulk;
    }
    return out;
}

// phi_n(alpha): phi with the finite-n surrogates (c_n, H_n). Atoms at zero
// contribute nothing, so this equals phi(alpha, c_nM, H_2n).
inline double phi_n(double alpha, const PopulationSpectrum& spec) {
    return phi(alpha, spec.c_nM(), spec.bulk);
}

enum class CheckStatus { pass, warn, fail };

struct ValidationEntry {
    std::string name;
    CheckStatus status = CheckStatus::pass;
    std::string message;
    double value = 0.0;
};

struct ValidationReport {
    std::vector<ValidationEntry> entries;
    bool has_fail() const {
        return std::any_of(entries.begin(), entries.end(),
                           [](const ValidationEntry& e) { return e.status == CheckStatus::fail; });
    }
    bool all_pass() const {
        return std::all_of(entries.begin(), entries.end(),
                           [](const ValidationEntry& e) { return e.status == CheckStatus::pass; });
    }
};

struct ValidationOptions {
    double mn_ratio_warn = 0.1;       // warn when M/n exceeds this
    double separation_warn = 2.0;     // warn when sqrt(n) relative spike gap is below this
};

// Structured pass/warn/fail report; never throws.
inline ValidationReport validate_assumptions(const PopulationSpectrum& spec,
                                             const MomentProfile& moments,
                                             const ValidationOptions& opts = {}) {
    ValidationReport rep;
    auto add = [&rep](std::string name, CheckStatus st, std::string msg, double value) {
        rep.entries.push_back({std::move(name), st, std::move(msg), value});
    };

    const double cn = spec.n > 0 ? spec.c_n() : 0.0;
    add("c_n positive", (spec.p > 0 && spec.n > 0 && cn > 0.0) ? CheckStatus::pass : CheckStatus::fail,
        "c_n = p/n", cn);

    double wsum = spec.bulk.weight_sum();
    add("bulk weights normalized",
        std::abs(wsum - 1.0) <= 1e-12 ? CheckStatus::pass : CheckStatus::fail,
        "sum of bulk weights", wsum);

    std::vector<ResolvedSpike> resolved;
    try {
        resolved = resolve_spikes(spec);
        add("spikes above bulk", CheckStatus::pass, "all resolved spikes exceed max bulk atom",
            resolved.empty() ? 0.0 : resolved.front().value);
    } catch (const std::exception& e) {
        add("spikes above bulk", CheckStatus::fail, e.what(), 0.0);
    }

    const double c_nM = spec.c_nM();
    for (std::size_t k = 0; k < resolved.size(); ++k) {
        double pp = 0.0;
        CheckStatus st = CheckStatus::pass;
        std::string msg = "phi'(alpha_k) > 0";
        try {
            pp = phi_prime(resolved[k].value, c_nM, spec.bulk);
            if (pp <= 0.0) {
                st = CheckStatus::fail;
                msg = "phi'(alpha_k) <= 0: spike below phase transition";
            }
        } catch (const std::exception& e) {
            st = CheckStatus::fail;
            msg = e.what();
        }
        add("phi_prime spike " + std::to_string(k + 1), st, msg, pp);
    }

    const double mn = static_cast<double>(spec.spike_count()) / std::max(1, spec.n);
    add("M/n small", mn <= opts.mn_ratio_warn ? CheckStatus::pass : CheckStatus::warn,
        "M/n should be o(1)", mn);

    // Spike separation heuristic: sqrt(n) (phi_n(a_k) - phi_n(a_{k+1})) / phi_n(a_k).
    for (std::size_t k = 0; k + 1 < resolved.size(); ++k) {
        double pk = phi_n(resolved[k].value, spec);
        double pk1 = phi_n(resolved[k + 1].value, spec);
        double sep = std::sqrt(static_cast<double>(spec.n)) * (pk - pk1) / pk;
        add("spike separation " + std::to_string(k + 1) + "-" + std::to_string(k + 2),
            sep >= opts.separation_warn ? CheckStatus::pass : CheckStatus::warn,
            "sqrt(n)-scaled gap between adjacent spikes", sep);
    }

    add("moment consistency",
        moments.moments_consistent() ? CheckStatus::pass : CheckStatus::fail,
        "beta_x = E|x|^4 - alpha_x - 2", moments.beta_x);

    const bool real_case = moments.q == 1;
    if (real_case && moments.alpha_x != 1.0)
        add("real case alpha_x", CheckStatus::fail, "real case requires alpha_x = 1", moments.alpha_x);
    if (!real_case && moments.alpha_x != 0.0)
        add("complex case alpha_x", CheckStatus::fail, "complex case requires alpha_x = 0", moments.alpha_x);

    if (moments.u1.has_value() && moments.beta_x != 0.0)
        add("u1 with beta_x", CheckStatus::warn,
            "non-canonical u1 requires T* T diagonal or beta_x = 0", moments.beta_x);

    return rep;
}

}  // namespace lssclt
