// Rectangular contours around the bulk support and every contour integral of
// the CLT: the centering integral, the bulk mean, the three-term bulk
// covariance, and the spiked correction term.
//
// Quadrature: composite Gauss-Legendre panels per rectangle side, nodes
// ordered counterclockwise so m(z) solves continue along the path. The
// covariance kernel 1/(m1 - m2)^2 dm1 dm2 is integrated in the regularized
// form
//
//   K(z1,z2) = m'(z1) m'(z2)/(m(z1)-m(z2))^2 - 1/(z1-z2)^2,
//
// which is analytic across z1 = z2; the subtracted term integrates to zero
// over nonoverlapping contours, while removing it from the quadrature kills
// the near-diagonal blow-up that otherwise dominates the error for nested
// contour pairs.
#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <numbers>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "lssclt/kernels.hpp"
#include "lssclt/numeric.hpp"
#include "lssclt/spectrum.hpp"
#include "lssclt/stieltjes.hpp"

namespace lssclt {

struct ContourSqueezeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ConvergenceError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ContourSpec {
    double x_left = 0.0;
    double x_right = 0.0;
    double half_height = 0.0;
    int nodes_per_side = 1024;
};

struct ContourOptions {
    double margin = 0.1;
    int nodes_per_side = 1024;         // single contour integrals
    int nodes_per_side_double = 256;   // per contour of a nested pair
    int panel_order = 16;
};

// Rectangle enclosing [left_edge, right_edge] and excluding every spiked phi:
//   x_left  = max(eps, left_edge (1 - margin))
//   x_right = geometric midpoint of right_edge and min spiked phi (or
//             right_edge (1 + margin) without spikes)
//   half_height = margin (x_right - x_left)
inline ContourSpec build_contour(const SupportInterval& support,
                                 const std::vector<double>& spiked_phis,
                                 bool needs_positive_left, double margin,
                                 int nodes_per_side = 1024) {
    if (margin <= 0.0 || margin >= 1.0)
        throw std::invalid_argument("build_contour: margin must be in (0, 1)");
    double min_phi = std::numeric_limits<double>::infinity();
    for (double f : spiked_phis) min_phi = std::min(min_phi, f);
    if (!spiked_phis.empty() && min_phi <= support.right_edge * (1.0 + 2.0 * margin)) {
        std::ostringstream os;
        os << "contour squeeze: min spiked phi " << min_phi << " too close to bulk edge "
           << support.right_edge;
        throw ContourSqueezeError(os.str());
    }
    ContourSpec spec;
    spec.x_left = std::max(1e-12, support.left_edge * (1.0 - margin));
    spec.x_right = spiked_phis.empty() ? support.right_edge * (1.0 + margin)
                                       : std::sqrt(support.right_edge * min_phi);
    spec.half_height = margin * (spec.x_right - spec.x_left);
    spec.nodes_per_side = nodes_per_side;
    if (needs_positive_left && spec.x_left <= 0.0)
        throw ContourSqueezeError("build_contour: log kernel requires x_left > 0");
    return spec;
}

// Strictly enclosing second contour for double integrals: half_height 1.5x,
// x-margins widened by 1.25x relative to the support edges.
inline ContourSpec widen_contour(const ContourSpec& inner, const SupportInterval& support,
                                 const std::vector<double>& spiked_phis, double margin) {
    ContourSpec outer = inner;
    outer.x_left = std::max(1e-12 * 0.5, support.left_edge * (1.0 - 1.25 * margin));
    if (outer.x_left >= inner.x_left) outer.x_left = inner.x_left * 0.99;
    outer.x_right = support.right_edge + 1.25 * (inner.x_right - support.right_edge);
    double min_phi = std::numeric_limits<double>::infinity();
    for (double f : spiked_phis) min_phi = std::min(min_phi, f);
    if (outer.x_right >= min_phi)
        throw ContourSqueezeError("widen_contour: outer contour would swallow a spike");
    outer.half_height = 1.5 * inner.half_height;
    return outer;
}

// Closed counterclockwise path with cached m(z), m'(z) at every node.
struct QuadratureGrid {
    ContourSpec spec;
    std::vector<cdouble> nodes;
    std::vector<cdouble> weights;  // complex dz increments
    std::vector<cdouble> m;        // m(z)
    std::vector<cdouble> mp;       // m'(z)
    double c = 0.0;
    BulkDistribution H;

    std::size_t size() const { return nodes.size(); }
};

inline QuadratureGrid build_grid(const ContourSpec& spec, double c, const BulkDistribution& H,
                                 int panel_order = 16, const SolverOptions& sopts = {}) {
    if (spec.nodes_per_side < panel_order)
        throw std::invalid_argument("build_grid: nodes_per_side below one panel");
    QuadratureGrid g;
    g.spec = spec;
    g.c = c;
    g.H = H;

    const int panels = std::max(1, spec.nodes_per_side / panel_order);
    const GaussRule rule = gauss_legendre(panel_order);
    const cdouble corners[5] = {
        {spec.x_left, -spec.half_height},  {spec.x_right, -spec.half_height},
        {spec.x_right, spec.half_height},  {spec.x_left, spec.half_height},
        {spec.x_left, -spec.half_height}};

    g.nodes.reserve(4 * panels * panel_order);
    g.weights.reserve(4 * panels * panel_order);
    for (int side = 0; side < 4; ++side) {
        const cdouble a = corners[side], b = corners[side + 1];
        for (int p = 0; p < panels; ++p) {
            const cdouble p0 = a + (b - a) * (static_cast<double>(p) / panels);
            const cdouble p1 = a + (b - a) * (static_cast<double>(p + 1) / panels);
            const cdouble mid = 0.5 * (p0 + p1), half = 0.5 * (p1 - p0);
            for (int i = 0; i < panel_order; ++i) {
                g.nodes.push_back(mid + half * rule.nodes[i]);
                g.weights.push_back(half * rule.weights[i]);
            }
        }
    }

    g.m.resize(g.nodes.size());
    g.mp.resize(g.nodes.size());
    std::optional<cdouble> hint;
    for (std::size_t i = 0; i < g.nodes.size(); ++i) {
        auto sol = solve_m_under(g.nodes[i], c, H, hint, sopts);
        g.m[i] = sol.m_under;
        g.mp[i] = sol.m_prime;
        hint = sol.m_under;
    }
    return g;
}

// sum_i w_i f(z_i), fixed-order pairwise reduction
template <typename F>
inline cdouble integrate(const QuadratureGrid& g, F&& integrand) {
    std::vector<cdouble> terms(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) terms[i] = g.weights[i] * integrand(i);
    return pairwise_sum(terms);
}

namespace detail {

inline double check_real(cdouble v, double abs_tol, const char* what) {
    const double scale = std::max(1.0, std::abs(v.real()));
    if (std::abs(v.imag()) > abs_tol * scale) {
        std::ostringstream os;
        os << what << ": imaginary residue " << v.imag() << " exceeds tolerance (value "
           << v.real() << ")";
        throw ConvergenceError(os.str());
    }
    return v.real();
}

}  // namespace detail

// p * int f dF^{c_n,H_n} = -(n/2 pi i) oint f(z) m(z) dz over a contour
// enclosing the positive bulk support (atom at zero and spikes excluded).
inline double centering_integral(const Kernel& f, const QuadratureGrid& grid, int n) {
    cdouble acc = integrate(grid, [&](std::size_t i) { return f.eval(grid.nodes[i]) * grid.m[i]; });
    cdouble val = -static_cast<double>(n) / (2.0 * std::numbers::pi * cdouble{0.0, 1.0}) * acc;
    return detail::check_real(val, 1e-8, "centering_integral");
}

// Bulk CLT mean (Lemma 3):
//   mu = -(alpha_x/2 pi i) oint f I3 / ((1-I2)(1-alpha_x I2)) dz
//        -(beta_x /2 pi i) oint f I3 / (1-I2) dz
// with I2 = c int m^2 t^2 (1+tm)^-2 dH, I3 = c int m^3 t^2 (1+tm)^-3 dH.
inline double bulk_mean(const Kernel& f, const QuadratureGrid& grid, double alpha_x, double beta_x) {
    const double c = grid.c;
    const BulkDistribution& H = grid.H;
    cdouble acc{};
    std::vector<cdouble> terms(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const cdouble m = grid.m[i];
        cdouble s2{}, s3{};
        for (const auto& a : H.atoms) {
            const cdouble d = 1.0 + a.value * m;
            s2 += a.weight * a.value * a.value / (d * d);
            s3 += a.weight * a.value * a.value * a.value / (d * d * d);
        }
        const cdouble I2 = c * m * m * s2;
        const cdouble I3 = c * m * m * m * s3;
        const cdouble d1 = 1.0 - I2;
        const cdouble d2 = 1.0 - alpha_x * I2;
        if (std::abs(d1) < 1e-10 || std::abs(d2) < 1e-10)
            throw ContourSqueezeError("bulk_mean: 1 - c int m^2 t^2 (1+tm)^-2 dH vanishes on contour");
        terms[i] = grid.weights[i] * f.eval(grid.nodes[i]) *
                   (alpha_x * I3 / (d1 * d2) + beta_x * I3 / d1);
    }
    acc = pairwise_sum(terms);
    cdouble val = -acc / (2.0 * std::numbers::pi * cdouble{0.0, 1.0});
    return detail::check_real(val, 1e-8, "bulk_mean");
}

// Spiked correction term. Group-resolved form (exact for finite spikes):
//   sum_k (m_k / 2 pi i) oint f(z) alpha_k m'(z) / (1 + alpha_k m(z)) dz,
// which tends to the divergent-spike limit (M/2 pi i) oint f m'/m dz used in
// the asymptotic statement. Pass empty spikes with M > 0 for the limit form.
inline double correction_term(const Kernel& f, const std::vector<ResolvedSpike>& spikes,
                              const QuadratureGrid& grid) {
    if (spikes.empty()) return 0.0;
    cdouble acc{};
    for (const auto& s : spikes) {
        cdouble one = integrate(grid, [&](std::size_t i) {
            return f.eval(grid.nodes[i]) * s.value * grid.mp[i] / (1.0 + s.value * grid.m[i]);
        });
        acc += static_cast<double>(s.multiplicity) * one;
    }
    cdouble val = acc / (2.0 * std::numbers::pi * cdouble{0.0, 1.0});
    return detail::check_real(val, 1e-8, "correction_term");
}

// Divergent-spike limit form: (M / 2 pi i) oint f(z) m'(z)/m(z) dz.
inline double correction_term_limit(const Kernel& f, int M, const QuadratureGrid& grid) {
    if (M == 0) return 0.0;
    for (std::size_t i = 0; i < grid.size(); ++i)
        if (std::abs(grid.m[i]) < 1e-14)
            throw std::runtime_error("correction_term: m(z) = 0 on contour");
    cdouble acc =
        integrate(grid, [&](std::size_t i) { return f.eval(grid.nodes[i]) * grid.mp[i] / grid.m[i]; });
    cdouble val = static_cast<double>(M) * acc / (2.0 * std::numbers::pi * cdouble{0.0, 1.0});
    return detail::check_real(val, 1e-8, "correction_term_limit");
}

namespace detail {

// Per-pair kernels of the covariance integrand, from cached m, m'.
struct PairContext {
    const QuadratureGrid& g1;
    const QuadratureGrid& g2;
    double alpha_x;
    double beta_x;

    // J = c sum w t^2 / ((1+tm1)^2 (1+tm2)^2)
    cdouble j_sum(const cdouble& m1, const cdouble& m2) const {
        cdouble s{};
        for (const auto& a : g1.H.atoms) {
            const cdouble d1 = 1.0 + a.value * m1;
            const cdouble d2 = 1.0 + a.value * m2;
            s += a.weight * a.value * a.value / (d1 * d1 * d2 * d2);
        }
        return g1.c * s;
    }

    // A = alpha_x c sum w t^2 m1 m2 / ((1+tm1)(1+tm2)); equals the paper's
    // a(z1,z2) by the Silverstein-equation identity.
    cdouble a_sum(const cdouble& m1, const cdouble& m2) const {
        cdouble s{};
        for (const auto& a : g1.H.atoms) {
            const cdouble d1 = 1.0 + a.value * m1;
            const cdouble d2 = 1.0 + a.value * m2;
            s += a.weight * a.value * a.value / (d1 * d2);
        }
        return alpha_x * g1.c * s * m1 * m2;
    }

    // dA/dz1 = alpha_x c m1' sum w t^2 m2 / ((1+tm1)^2 (1+tm2))
    cdouble a_d1(const cdouble& m1, const cdouble& m2, const cdouble& mp1) const {
        cdouble s{};
        for (const auto& a : g1.H.atoms) {
            const cdouble d1 = 1.0 + a.value * m1;
            const cdouble d2 = 1.0 + a.value * m2;
            s += a.weight * a.value * a.value / (d1 * d1 * d2);
        }
        return alpha_x * g1.c * s * mp1 * m2;
    }
};

}  // namespace detail

struct BulkCovOptions {
    bool t3_finite_difference_check = false;  // cross-validate the analytic mixed partial
    double fd_rel_tol = 1e-4;
};

struct BulkCovTerms {
    double t1 = 0.0;  // -(1/4pi^2) oint oint f g K dz1 dz2 (regularized kernel)
    double t2 = 0.0;  // -(beta_x/4pi^2) oint oint f g J dm1 dm2
    double t3 = 0.0;  //  (1/4pi^2) oint oint f g d^2/dz1dz2 log(1-A) dz1 dz2
    double total() const { return t1 + t2 + t3; }
};

namespace detail {

// m(z + dz) for every node, Newton-refined from the cached solution.
inline std::vector<cdouble> displaced_m(const QuadratureGrid& g, double rel_step, double dir) {
    std::vector<cdouble> out(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
        const double h = rel_step * std::max(1.0, std::abs(g.nodes[i]));
        const cdouble z = g.nodes[i] + dir * h;
        out[i] = solve_m_under(z, g.c, g.H, g.m[i]).m_under;
    }
    return out;
}

}  // namespace detail

// Bulk CLT covariance sigma^2_{s,t} (Lemma 3): three double contour integrals
// over the nonoverlapping pair (g1 strictly inside g2). The sign of T3 is
// fixed by the exact Var(tr B) = 2 p/n oracle in the real Gaussian case
// (total = 2 T1 there, the classical real-vs-complex factor).
inline BulkCovTerms bulk_cov_terms(const Kernel& fs, const Kernel& ft, const QuadratureGrid& g1,
                                   const QuadratureGrid& g2, double alpha_x, double beta_x) {
    if (&g1 == &g2 ||
        (g1.spec.x_left == g2.spec.x_left && g1.spec.x_right == g2.spec.x_right &&
         g1.spec.half_height == g2.spec.half_height))
        throw std::invalid_argument("bulk_cov: contours must be nonoverlapping, got coincident grids");

    detail::PairContext ctx{g1, g2, alpha_x, beta_x};
    const std::size_t n1 = g1.size(), n2 = g2.size();

    std::vector<cdouble> f1(n1), w1(n1), g2v(n2), w2(n2);
    for (std::size_t i = 0; i < n1; ++i) {
        f1[i] = fs.eval(g1.nodes[i]);
        w1[i] = g1.weights[i];
    }
    for (std::size_t j = 0; j < n2; ++j) {
        g2v[j] = ft.eval(g2.nodes[j]);
        w2[j] = g2.weights[j];
    }

    std::vector<cdouble> outer1(n1), outer2(n1), outer3(n1);
    std::vector<cdouble> inner(n2);
    for (std::size_t i = 0; i < n1; ++i) {
        const cdouble z1 = g1.nodes[i], m1 = g1.m[i], mp1 = g1.mp[i];
        // T1 inner pass
        for (std::size_t j = 0; j < n2; ++j) {
            const cdouble dz = z1 - g2.nodes[j];
            const cdouble dm = m1 - g2.m[j];
            inner[j] = w2[j] * g2v[j] * (mp1 * g2.mp[j] / (dm * dm) - 1.0 / (dz * dz));
        }
        outer1[i] = w1[i] * f1[i] * pairwise_sum(inner);
        // T2 inner pass (dm measures)
        for (std::size_t j = 0; j < n2; ++j)
            inner[j] = w2[j] * g2v[j] * g2.mp[j] * ctx.j_sum(m1, g2.m[j]);
        outer2[i] = w1[i] * f1[i] * mp1 * pairwise_sum(inner);
        // T3 inner pass
        if (alpha_x != 0.0) {
            for (std::size_t j = 0; j < n2; ++j) {
                const cdouble m2 = g2.m[j], mp2 = g2.mp[j];
                const cdouble A = ctx.a_sum(m1, m2);
                const cdouble one_m_a = 1.0 - A;
                if (std::abs(one_m_a) < 1e-8)
                    throw ContourSqueezeError("bulk_cov: a(z1,z2) reaches 1 on the grid");
                const cdouble dA1 = ctx.a_d1(m1, m2, mp1);
                const cdouble dA2 = ctx.a_d1(m2, m1, mp2);
                const cdouble dA12 = alpha_x * mp1 * mp2 * ctx.j_sum(m1, m2);
                const cdouble mixed = -(dA12 * one_m_a + dA1 * dA2) / (one_m_a * one_m_a);
                inner[j] = w2[j] * g2v[j] * mixed;
            }
            outer3[i] = w1[i] * f1[i] * pairwise_sum(inner);
        } else {
            outer3[i] = cdouble{};
        }
    }

    const double four_pi_sq = 4.0 * std::numbers::pi * std::numbers::pi;
    BulkCovTerms terms;
    terms.t1 = detail::check_real(-pairwise_sum(outer1) / four_pi_sq, 1e-6, "bulk_cov T1");
    terms.t2 = detail::check_real(-beta_x * pairwise_sum(outer2) / four_pi_sq, 1e-6, "bulk_cov T2");
    terms.t3 = detail::check_real(pairwise_sum(outer3) / four_pi_sq, 1e-6, "bulk_cov T3");
    return terms;
}

// T3 with the mixed partial from central differences of log(1 - A) in both
// variables (one Richardson pass); cross-validates the analytic form.
inline double bulk_cov_t3_finite_difference(const Kernel& fs, const Kernel& ft,
                                            const QuadratureGrid& g1, const QuadratureGrid& g2,
                                            double alpha_x, double rel_step = 1e-4) {
    detail::PairContext ctx{g1, g2, alpha_x, 0.0};
    const std::size_t n1 = g1.size(), n2 = g2.size();

    auto t3_at_step = [&](double h) {
        const auto m1p = detail::displaced_m(g1, h, +1.0);
        const auto m1m = detail::displaced_m(g1, h, -1.0);
        const auto m2p = detail::displaced_m(g2, h, +1.0);
        const auto m2m = detail::displaced_m(g2, h, -1.0);
        std::vector<cdouble> outer(n1), inner(n2);
        for (std::size_t i = 0; i < n1; ++i) {
            const double h1 = h * std::max(1.0, std::abs(g1.nodes[i]));
            for (std::size_t j = 0; j < n2; ++j) {
                const double h2 = h * std::max(1.0, std::abs(g2.nodes[j]));
                const cdouble lpp = std::log(1.0 - ctx.a_sum(m1p[i], m2p[j]));
                const cdouble lpm = std::log(1.0 - ctx.a_sum(m1p[i], m2m[j]));
                const cdouble lmp = std::log(1.0 - ctx.a_sum(m1m[i], m2p[j]));
                const cdouble lmm = std::log(1.0 - ctx.a_sum(m1m[i], m2m[j]));
                inner[j] = g2.weights[j] * ft.eval(g2.nodes[j]) *
                           (lpp - lpm - lmp + lmm) / (4.0 * h1 * h2);
            }
            outer[i] = g1.weights[i] * fs.eval(g1.nodes[i]) * pairwise_sum(inner);
        }
        return pairwise_sum(outer) / (4.0 * std::numbers::pi * std::numbers::pi);
    };

    const cdouble coarse = t3_at_step(rel_step);
    const cdouble fine = t3_at_step(rel_step / 2.0);
    return detail::check_real((4.0 * fine - coarse) / 3.0, 1e-4, "bulk_cov T3 (fd)");
}

inline double bulk_cov(const Kernel& fs, const Kernel& ft, const QuadratureGrid& g1,
                       const QuadratureGrid& g2, double alpha_x, double beta_x,
                       const BulkCovOptions& opts = {}) {
    const BulkCovTerms terms = bulk_cov_terms(fs, ft, g1, g2, alpha_x, beta_x);
    if (opts.t3_finite_difference_check && alpha_x != 0.0) {
        const double fd = bulk_cov_t3_finite_difference(fs, ft, g1, g2, alpha_x);
        const double tol = std::max(opts.fd_rel_tol * std::abs(terms.t3), 1e-7);
        if (std::abs(fd - terms.t3) > tol) {
            std::ostringstream os;
            os << "bulk_cov: analytic T3 " << terms.t3 << " disagrees with finite differences "
               << fd;
            throw ConvergenceError(os.str());
        }
    }
    return terms.total();
}

struct ConvergenceReport {
    std::vector<int> node_counts;
    std::vector<double> values;
    bool converged = false;
    double final_value = 0.0;
};

// Evaluate an integral at N, 2N, ... nodes per side until the relative change
// drops below tol; error out at N_max.
inline ConvergenceReport quadrature_convergence(const std::function<double(int)>& eval_at,
                                                int n_start = 128, int n_max = 1 << 14,
                                                double tol = 1e-6) {
    ConvergenceReport rep;
    double prev = 0.0;
    bool have_prev = false;
    for (int n = n_start; n <= n_max; n *= 2) {
        double v = eval_at(n);
        rep.node_counts.push_back(n);
        rep.values.push_back(v);
        if (have_prev) {
            double rel = std::abs(v - prev) / std::max(1.0, std::abs(v));
            if (rel < tol) {
                rep.converged = true;
                rep.final_value = v;
                return rep;
            }
        }
        prev = v;
        have_prev = true;
    }
    throw ConvergenceError("quadrature_convergence: no convergence by N_max");
}

}  // namespace lssclt
