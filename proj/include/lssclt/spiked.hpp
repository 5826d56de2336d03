// Spiked-part quantities of the CLT: phi_n(alpha_k), theta_k, nu_k, pi_x,
// sigma_k^2, the rho_l weights, the limiting law of the normalized spiked
// fluctuations, and the assembled prediction (mean vector and h x h
// covariance of the normalized LSS vector).
#pragma once

#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Eigenvalues>

#include "lssclt/contour.hpp"
#include "lssclt/kernels.hpp"
#include "lssclt/spectrum.hpp"
#include "lssclt/stieltjes.hpp"

namespace lssclt {

struct SpikedGroupQuantities {
    double alpha = 0.0;     // resolved population spike
    int multiplicity = 0;   // m_k
    double phi = 0.0;       // phi_n(alpha_k)
    double theta = 0.0;     // phi^2 m_2(phi)
    double nu = 0.0;        // phi^2 m(phi)^2
    double sigma_sq = 0.0;  // variance of sum_{j in J_k} gamma_kj
};

struct SpikedQuantities {
    std::vector<SpikedGroupQuantities> groups;
};

// pi_{x,i1 j1 i2 j2} = sum_t  u[t,i1] u[t,j1] u[t,i2] u[t,j2] * (E|x|^4 - 2 - q)
// evaluated at finite n with real orthonormal u1 (truncation indicator dropped:
// exact for the bounded-fourth-moment profiles in scope). 1-based indices.
inline double pi_x(const Eigen::MatrixXd& u1, double fourth_moment, int q, int i1, int j1,
                   int i2, int j2) {
    const int M = static_cast<int>(u1.cols());
    if (i1 < 1 || j1 < 1 || i2 < 1 || j2 < 1 || i1 > M || j1 > M || i2 > M || j2 > M)
        throw std::out_of_range("pi_x: index outside 1..M");
    Eigen::MatrixXd gram = u1.transpose() * u1;
    if ((gram - Eigen::MatrixXd::Identity(M, M)).cwiseAbs().maxCoeff() > 1e-8)
        throw std::invalid_argument("pi_x: u1 columns are not orthonormal");
    const double factor = fourth_moment - 2.0 - q;
    double s = 0.0;
    for (int t = 0; t < u1.rows(); ++t)
        s += u1(t, i1 - 1) * u1(t, j1 - 1) * u1(t, i2 - 1) * u1(t, j2 - 1);
    return s * factor;
}

// Canonical-basis shortcut: pi vanishes unless i1 = j1 = i2 = j2.
inline double pi_x_canonical(double fourth_moment, int q, int i1, int j1, int i2, int j2) {
    return (i1 == j1 && j1 == i2 && i2 == j2) ? (fourth_moment - 2.0 - q) : 0.0;
}

namespace detail {

inline double pi_entry(const MomentProfile& mom, int i1, int j1, int i2, int j2) {
    if (mom.u1.has_value()) return pi_x(*mom.u1, mom.fourth_moment, mom.q, i1, j1, i2, j2);
    return pi_x_canonical(mom.fourth_moment, mom.q, i1, j1, i2, j2);
}

}  // namespace detail

// theta_k, nu_k from the real branch at lambda = phi_n(alpha_k) with the
// finite-n surrogates (c_nM, H_2n); sigma_k^2 from the Lemma 4 covariance
// table:
//   sigma_k^2 = [ sum_{j in J_k} ((q+1) theta + pi_jjjj nu)
//                 + sum_{j1 != j2} pi_{j1 j1 j2 j2} nu ] / theta^2.
inline SpikedQuantities spiked_quantities(const PopulationSpectrum& spec,
                                          const MomentProfile& moments) {
    spec.validate();
    const auto resolved = resolve_spikes(spec);
    const double c = spec.c_nM();
    const BulkDistribution& H = spec.bulk;

    SpikedQuantities out;
    int j_base = 0;  // 1-based offset of the group inside 1..M
    for (const auto& rs : resolved) {
        if (phi_prime(rs.value, c, H) <= 0.0)
            throw std::domain_error("spiked_quantities: spike below phase transition");
        SpikedGroupQuantities g;
        g.alpha = rs.value;
        g.multiplicity = rs.multiplicity;
        g.phi = phi(rs.value, c, H);
        const RealBranch rb = m_under_real(g.phi, c, H);
        g.theta = g.phi * g.phi * rb.m_under2;
        g.nu = g.phi * g.phi * rb.m_under * rb.m_under;
        if (g.theta <= 0.0 || g.nu <= 0.0)
            throw std::runtime_error("spiked_quantities: nonpositive theta or nu");

        double num = 0.0;
        for (int j = 1; j <= g.multiplicity; ++j) {
            const int gj = j_base + j;
            num += (moments.q + 1.0) * g.theta + detail::pi_entry(moments, gj, gj, gj, gj) * g.nu;
        }
        for (int j1 = 1; j1 <= g.multiplicity; ++j1)
            for (int j2 = 1; j2 <= g.multiplicity; ++j2)
                if (j1 != j2)
                    num += detail::pi_entry(moments, j_base + j1, j_base + j1, j_base + j2,
                                            j_base + j2) *
                           g.nu;
        g.sigma_sq = num / (g.theta * g.theta);
        out.groups.push_back(g);
        j_base += g.multiplicity;
    }
    return out;
}

// rho_l = 1 / sqrt( sum_k (phi_n(alpha_k) f_l'(phi_n(alpha_k)) / sqrt(n))^2 + 1 ),
// one term per spike group (no multiplicity factor, as printed).
inline std::vector<double> rho(const std::vector<Kernel>& kernels,
                               const PopulationSpectrum& spec) {
    const auto resolved = resolve_spikes(spec);
    std::vector<double> phis;
    for (const auto& rs : resolved) phis.push_back(phi_n(rs.value, spec));
    std::vector<double> out;
    out.reserve(kernels.size());
    for (const auto& f : kernels) {
        double s = 0.0;
        for (double ph : phis) {
            const double term = ph * f.deriv(ph) / std::sqrt(static_cast<double>(spec.n));
            s += term * term;
        }
        out.push_back(1.0 / std::sqrt(s + 1.0));
    }
    return out;
}

// Limiting law of the spiked fluctuation sums for group k (Lemma 4): mean 0,
// Var(sum_{j in J_k} gamma_kj) = sigma_k^2; for the canonical diagonal case
// the per-eigenvalue marginal is ((q+1) theta + pi_jjjj nu) / theta^2.
struct GammaLaw {
    double mean = 0.0;
    double group_variance = 0.0;
    double marginal_variance = 0.0;
};

inline GammaLaw gamma_law(const PopulationSpectrum& spec, const MomentProfile& moments,
                          std::size_t group_index) {
    const auto sq = spiked_quantities(spec, moments);
    if (group_index >= sq.groups.size())
        throw std::out_of_range("gamma_law: group index out of range");
    const auto& g = sq.groups[group_index];
    int j_base = 0;
    for (std::size_t k = 0; k < group_index; ++k) j_base += sq.groups[k].multiplicity;
    GammaLaw law;
    law.group_variance = g.sigma_sq;
    law.marginal_variance = ((moments.q + 1.0) * g.theta +
                             detail::pi_entry(moments, j_base + 1, j_base + 1, j_base + 1,
                                              j_base + 1) *
                                 g.nu) /
                            (g.theta * g.theta);
    return law;
}

struct CltOptions {
    ContourOptions contour;
    SolverOptions solver;
};

// Asymptotic law of the normalized LSS vector (Y_{f_1}, ..., Y_{f_h}):
//   E Y_l = rho_l mu_l
//   Cov(Y_s, Y_t) = (1/n) rho_s rho_t sum_k phi_k^2 f_s' f_t' sigma_k^2
//                   + rho_s rho_t sigma^2_{s,t}
struct CltPrediction {
    std::vector<std::string> kernel_names;
    std::vector<double> rho;
    std::vector<double> mean;            // rho_l mu_l
    Eigen::MatrixXd cov;                 // h x h
    // diagnostics
    std::vector<double> bulk_mean_raw;   // mu_l
    Eigen::MatrixXd bulk_cov_raw;        // sigma^2_{s,t}
    Eigen::MatrixXd spiked_cov_raw;      // (1/n) sum_k phi^2 f_s' f_t' sigma_k^2
    SpikedQuantities spiked;
    // the per-group sum in rho is unweighted as printed; the multiplicity-
    // weighted variant is kept alongside for diagnostics
    std::vector<double> rho_multiplicity_weighted;

    double spiked_variance_share(std::size_t l) const {
        const double s = spiked_cov_raw(l, l), b = bulk_cov_raw(l, l);
        return (s + b) > 0.0 ? s / (s + b) : 0.0;
    }
};

inline CltPrediction clt_prediction(const PopulationSpectrum& spec, const MomentProfile& moments,
                                    const std::vector<Kernel>& kernels,
                                    const CltOptions& opts = {}) {
    spec.validate();
    if (kernels.empty()) throw std::invalid_argument("clt_prediction: no kernels");
    const std::size_t h = kernels.size();
    const double c = spec.c_nM();
    const BulkDistribution& H = spec.bulk;

    const auto resolved = resolve_spikes(spec);
    std::vector<double> phis;
    for (const auto& rs : resolved) phis.push_back(phi_n(rs.value, spec));

    bool needs_positive = false;
    for (const auto& f : kernels) needs_positive |= f.requires_positive_domain();

    const auto intervals = support_edges(c, H);
    const SupportInterval support{intervals.front().left_edge, intervals.back().right_edge};
    const ContourSpec c1 = build_contour(support, phis, needs_positive, opts.contour.margin,
                                         opts.contour.nodes_per_side_double);
    const ContourSpec c2 = widen_contour(c1, support, phis, opts.contour.margin);
    const QuadratureGrid g1 =
        build_grid(c1, c, H, opts.contour.panel_order, opts.solver);
    const QuadratureGrid g2 =
        build_grid(c2, c, H, opts.contour.panel_order, opts.solver);
    ContourSpec c_single = c1;
    c_single.nodes_per_side = opts.contour.nodes_per_side;
    const QuadratureGrid g_single =
        build_grid(c_single, c, H, opts.contour.panel_order, opts.solver);

    const auto sq = spiked_quantities(spec, moments);
    const auto rhos = rho(kernels, spec);

    CltPrediction pred;
    pred.kernel_names.reserve(h);
    for (const auto& f : kernels) pred.kernel_names.push_back(f.name());
    pred.rho = rhos;
    pred.spiked = sq;
    pred.rho_multiplicity_weighted.reserve(h);
    for (const auto& f : kernels) {
        double s = 0.0;
        for (const auto& rs : resolved) {
            const double ph = phi_n(rs.value, spec);
            const double term = ph * f.deriv(ph) / std::sqrt(static_cast<double>(spec.n));
            s += rs.multiplicity * term * term;
        }
        pred.rho_multiplicity_weighted.push_back(1.0 / std::sqrt(s + 1.0));
    }
    pred.bulk_mean_raw.resize(h);
    pred.mean.resize(h);
    for (std::size_t l = 0; l < h; ++l) {
        pred.bulk_mean_raw[l] = bulk_mean(kernels[l], g_single, moments.alpha_x, moments.beta_x);
        pred.mean[l] = rhos[l] * pred.bulk_mean_raw[l];
    }

    pred.bulk_cov_raw.resize(h, h);
    for (std::size_t s = 0; s < h; ++s)
        for (std::size_t t = s; t < h; ++t) {
            const double v =
                bulk_cov(kernels[s], kernels[t], g1, g2, moments.alpha_x, moments.beta_x);
            pred.bulk_cov_raw(s, t) = v;
            pred.bulk_cov_raw(t, s) = v;
        }

    pred.spiked_cov_raw = Eigen::MatrixXd::Zero(h, h);
    for (std::size_t s = 0; s < h; ++s)
        for (std::size_t t = 0; t < h; ++t) {
            double acc = 0.0;
            for (const auto& g : sq.groups)
                acc += g.phi * g.phi * kernels[s].deriv(g.phi) * kernels[t].deriv(g.phi) *
                       g.sigma_sq;
            pred.spiked_cov_raw(s, t) = acc / spec.n;
        }

    pred.cov.resize(h, h);
    for (std::size_t s = 0; s < h; ++s)
        for (std::size_t t = 0; t < h; ++t)
            pred.cov(s, t) = rhos[s] * rhos[t] * (pred.spiked_cov_raw(s, t) + pred.bulk_cov_raw(s, t));

    // symmetric PSD within tolerance
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(pred.cov);
    if (es.eigenvalues().minCoeff() < -1e-8)
        throw std::runtime_error("clt_prediction: covariance not PSD");
    return pred;
}

}  // namespace lssclt
