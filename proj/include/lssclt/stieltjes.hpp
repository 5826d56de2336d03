// Silverstein fixed-point machinery for the companion Stieltjes transform
// m(z) of F^{c,H} with atomic H:
//
//   z = -1/m + c * sum_i w_i t_i / (1 + t_i m)                      (*)
//
// Complex solves use damped fixed-point iteration with Newton refinement;
// derivatives come from implicit differentiation of (*), never from finite
// differences. Real evaluations outside the support use the bracketed real
// branch; support edges are the images of the real stationary points of z(m).
#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <tuple>
#include <utility>
#include <vector>

#include "lssclt/spectrum.hpp"

namespace lssclt {

using cdouble = std::complex<double>;

struct SolverError : std::runtime_error {
    double residual;
    explicit SolverError(const std::string& what, double res)
        : std::runtime_error(what), residual(res) {}
};

struct SolverOptions {
    double tolerance = 1e-13;  // on the z-residual
    int max_iterations = 500;
};

struct SilversteinSolution {
    cdouble z;
    cdouble m_under;
    cdouble m_prime;
    double residual = 0.0;
    int iterations = 0;
};

namespace detail {

// c * sum w t / (1 + t m)
template <typename T>
inline T h_sum(const T& m, double c, const BulkDistribution& H) {
    T s{};
    for (const auto& a : H.atoms) s += a.weight * a.value / (1.0 + a.value * m);
    return c * s;
}

template <typename T>
inline T z_of_m(const T& m, double c, const BulkDistribution& H) {
    return -1.0 / m + h_sum(m, c, H);
}

// z'(m) = 1/m^2 - c sum w t^2/(1+tm)^2
template <typename T>
inline T z1_of_m(const T& m, double c, const BulkDistribution& H) {
    T s{};
    for (const auto& a : H.atoms) {
        T d = 1.0 + a.value * m;
        s += a.weight * a.value * a.value / (d * d);
    }
    return 1.0 / (m * m) - c * s;
}

template <typename F>
inline double bisect(F&& g, double lo, double hi, int iters = 200) {
    double glo = g(lo);
    for (int i = 0; i < iters; ++i) {
        double mid = 0.5 * (lo + hi);
        double gm = g(mid);
        if (gm == 0.0) return mid;
        if ((gm > 0) == (glo > 0)) {
            lo = mid;
            glo = gm;
        } else {
            hi = mid;
        }
    }
    return 0.5 * (lo + hi);
}

// Zeros of z'(m) on the open interval (lo, hi) via sign scan + bisection.
// Sample points cluster geometrically toward both ends so sign-change windows
// pinched against a pole (width ~ sqrt(c) for small c) are not missed.
inline std::vector<double> stationary_points_on(double lo, double hi, double c,
                                                const BulkDistribution& H, int grid = 2000) {
    const double L = hi - lo;
    std::vector<double> pts;
    pts.reserve(grid + 600);
    for (int i = 1; i < grid; ++i) pts.push_back(lo + L * i / grid);
    for (double x = -14.0; x < -0.3; x += 0.05) {
        const double d = L * std::pow(10.0, x);
        pts.push_back(lo + d);
        pts.push_back(hi - d);
    }
    std::sort(pts.begin(), pts.end());

    std::vector<double> zeros;
    auto zp = [&](double m) { return z1_of_m(m, c, H); };
    double prev_m = 0.0, prev_v = 0.0;
    bool have_prev = false;
    for (double m : pts) {
        if (m <= lo || m >= hi) continue;
        double v = zp(m);
        if (!std::isfinite(v)) continue;
        if (have_prev && ((v > 0) != (prev_v > 0))) zeros.push_back(bisect(zp, prev_m, m));
        prev_m = m;
        prev_v = v;
        have_prev = true;
    }
    return zeros;
}

}  // namespace detail

namespace detail {

// Fixed-point iteration with best-iterate tracking, then Newton from the best
// point. The plain map m -> 1/(S(m) - z) contracts for Im z != 0; transient
// residual bumps are normal, so nothing is rejected mid-flight.
inline std::pair<cdouble, double> solve_core(cdouble z, double c, const BulkDistribution& H,
                                             cdouble m0, const SolverOptions& opts, int& iters) {
    auto residual_of = [&](cdouble mm) { return std::abs(z - z_of_m(mm, c, H)); };
    const double zscale = std::max(1.0, std::abs(z));
    cdouble m = m0, best = m0;
    double best_res = residual_of(m0);
    for (int it = 0; it < opts.max_iterations && best_res > opts.tolerance * zscale; ++it, ++iters) {
        m = 1.0 / (h_sum(m, c, H) - z);
        if (!std::isfinite(m.real()) || !std::isfinite(m.imag())) {
            m = best;
            break;
        }
        const double r = residual_of(m);
        if (r < best_res) {
            best = m;
            best_res = r;
        }
    }
    m = best;
    for (int k = 0; k < 100 && best_res > opts.tolerance * zscale; ++k, ++iters) {
        const cdouble Fp = z1_of_m(m, c, H);
        if (Fp == cdouble{}) break;
        cdouble step = -(z_of_m(m, c, H) - z) / Fp;
        cdouble cand = m + step;
        double cres = residual_of(cand);
        int halvings = 0;
        while ((!std::isfinite(cres) || cres >= best_res) && halvings < 30) {
            step *= 0.5;
            cand = m + step;
            cres = residual_of(cand);
            ++halvings;
        }
        if (!std::isfinite(cres) || cres >= best_res) break;
        m = cand;
        best = cand;
        best_res = cres;
    }
    return {best, best_res};
}

}  // namespace detail

// Solve (*) for m on the Herglotz branch (Im m has the sign of Im z). Without
// a caller hint, starts near the -1/z asymptote; points close to (or on) the
// real axis, and any attempt that lands on a wrong root, are handled by
// continuation in the imaginary part.
inline SilversteinSolution solve_m_under(cdouble z, double c, const BulkDistribution& H,
                                         std::optional<cdouble> hint = std::nullopt,
                                         const SolverOptions& opts = {}) {
    H.validate();
    if (z == cdouble{0.0, 0.0}) throw std::domain_error("solve_m_under: z = 0");
    const double zscale = std::max(1.0, std::abs(z));

    // On-axis limits converge to the real branch; a vanishing imaginary part
    // up to roundoff is acceptable there.
    auto herglotz_ok = [&](cdouble m) {
        if (z.imag() == 0.0) return true;
        if (m.imag() * z.imag() > 0.0) return true;
        return std::abs(m.imag()) <= 1e3 * std::numeric_limits<double>::epsilon() * std::abs(m);
    };

    int iters = 0;
    cdouble m;
    double res;
    std::tie(m, res) = detail::solve_core(z, c, H, hint.value_or(-1.0 / z), opts, iters);

    if (res > opts.tolerance * zscale || !herglotz_ok(m)) {
        // imaginary-part ladder: solve high above the axis, walk down
        const double sign = (z.imag() > 0.0 || z.imag() == 0.0) ? 1.0 : -1.0;
        double im = 0.5 * std::max(1.0, std::abs(z.real()));
        cdouble zz{z.real(), sign * im};
        cdouble mm;
        double rr;
        std::tie(mm, rr) = detail::solve_core(zz, c, H, -1.0 / zz, opts, iters);
        const double target = std::abs(z.imag());
        while (im > std::max(target * 1.5, 1e-12 * zscale)) {
            im *= 0.3;
            if (im < target) im = target;
            zz = {z.real(), sign * std::max(im, target)};
            std::tie(mm, rr) = detail::solve_core(zz, c, H, mm, opts, iters);
            if (im <= target) break;
        }
        std::tie(m, res) = detail::solve_core(z, c, H, mm, opts, iters);
    }

    if (res > opts.tolerance * zscale * 10.0) {
        std::ostringstream os;
        os << "solve_m_under: no convergence at z = (" << z.real() << ", " << z.imag()
           << "), residual " << res;
        throw SolverError(os.str(), res);
    }
    if (!herglotz_ok(m))
        throw SolverError("solve_m_under: converged to non-Herglotz branch", res);

    SilversteinSolution sol;
    sol.z = z;
    sol.m_under = m;
    sol.m_prime = 1.0 / detail::z1_of_m(m, c, H);  // implicit differentiation
    sol.residual = res;
    sol.iterations = iters;
    return sol;
}

struct SupportInterval {
    double left_edge = 0.0;
    double right_edge = 0.0;
};

// Support intervals of F^{c,H} from the stationary points of z(m) between
// consecutive poles m = -1/t_i; exact for atomic H. Ascending order.
inline std::vector<SupportInterval> support_edges(double c, const BulkDistribution& H) {
    H.validate();
    std::vector<double> poles;  // m = -1/t, ascending
    double tmin = std::numeric_limits<double>::max();
    for (const auto& a : H.atoms)
        if (a.value > 0.0) {
            poles.push_back(-1.0 / a.value);
            tmin = std::min(tmin, a.value);
        }
    if (poles.empty()) throw std::invalid_argument("support_edges: H has no positive atoms");
    std::sort(poles.begin(), poles.end());

    std::vector<double> images;
    {
        // (-inf, -1/t_min): the sweep start scales with the leftmost pole.
        double lo = poles.front() * 64.0 - 64.0;
        double hi = poles.front() - std::abs(poles.front()) * 1e-10;
        for (double s : detail::stationary_points_on(lo, hi, c, H))
            images.push_back(detail::z_of_m(s, c, H));
    }
    for (std::size_t i = 0; i + 1 < poles.size(); ++i) {
        double pad = 1e-10 * (poles[i + 1] - poles[i]);
        for (double s : detail::stationary_points_on(poles[i] + pad, poles[i + 1] - pad, c, H))
            images.push_back(detail::z_of_m(s, c, H));
    }
    {
        double pad = std::abs(poles.back()) * 1e-10;
        for (double s : detail::stationary_points_on(poles.back() + pad, -pad, c, H))
            images.push_back(detail::z_of_m(s, c, H));
    }
    if (c > 1.0) {
        // left edge comes from the positive-m branch when c > 1
        double hi = 64.0 / tmin + 64.0;
        for (double s : detail::stationary_points_on(1e-12 / tmin, hi, c, H))
            images.push_back(detail::z_of_m(s, c, H));
    }
    if (images.size() < 2 || images.size() % 2 != 0) {
        std::ostringstream os;
        os << "support_edges: expected an even number of stationary images, got " << images.size();
        throw std::runtime_error(os.str());
    }
    std::sort(images.begin(), images.end());
    std::vector<SupportInterval> out;
    for (std::size_t i = 0; i + 1 < images.size(); i += 2)
        out.push_back({images[i], images[i + 1]});
    return out;
}

struct RealBranch {
    double m_under = 0.0;   // m(lambda) = int dF_under/(x - lambda); negative right of support
    double m_under2 = 0.0;  // int (lambda - x)^{-2} dF_under = d m_under/d lambda > 0
};

// Real-branch evaluation at lambda > 0 strictly outside the support.
inline RealBranch m_under_real(double lambda, double c, const BulkDistribution& H) {
    H.validate();
    if (lambda <= 0.0) throw std::domain_error("m_under_real: lambda must be positive");
    const auto intervals = support_edges(c, H);
    for (const auto& iv : intervals)
        if (lambda >= iv.left_edge && lambda <= iv.right_edge)
            throw std::domain_error("m_under_real: lambda inside the support");

    const double right = intervals.back().right_edge;
    const double left = intervals.front().left_edge;
    auto zf = [&](double m) { return detail::z_of_m(m, c, H); };

    std::vector<double> poles;
    for (const auto& a : H.atoms)
        if (a.value > 0.0) poles.push_back(-1.0 / a.value);
    std::sort(poles.begin(), poles.end());

    double m_lo = 0.0, m_hi = 0.0;
    if (lambda > right) {
        // branch in (m*, 0): z increases from the right edge to +inf
        double pad = std::abs(poles.back()) * 1e-10;
        auto zeros = detail::stationary_points_on(poles.back() + pad, -pad, c, H);
        if (zeros.empty()) throw std::runtime_error("m_under_real: missing right stationary point");
        m_lo = zeros.back();  // z(m_lo) = right edge < lambda
        m_hi = -1e-3 / lambda;
        while (zf(m_hi) < lambda && m_hi < -1e-300) m_hi *= 0.5;
    } else if (lambda < left) {
        // branch in (-inf, m**): z increases from 0+ to the left edge
        double lo_sweep = poles.front() * 64.0 - 64.0;
        double hi_sweep = poles.front() - std::abs(poles.front()) * 1e-10;
        auto zeros = detail::stationary_points_on(lo_sweep, hi_sweep, c, H);
        if (zeros.empty()) throw std::runtime_error("m_under_real: missing left stationary point");
        m_hi = zeros.front();  // z(m_hi) = left edge > lambda
        m_lo = m_hi * 2.0;
        while (zf(m_lo) > lambda) m_lo *= 2.0;
    } else {
        // spectral gap between two bulk intervals
        bool found = false;
        for (std::size_t i = 0; i + 1 < poles.size() && !found; ++i) {
            double pad = 1e-10 * (poles[i + 1] - poles[i]);
            auto zeros = detail::stationary_points_on(poles[i] + pad, poles[i + 1] - pad, c, H);
            if (zeros.size() >= 2) {
                double za = zf(zeros.front()), zb = zf(zeros.back());
                if (std::min(za, zb) < lambda && lambda < std::max(za, zb)) {
                    m_lo = zeros.front();
                    m_hi = zeros.back();
                    if (za > zb) std::swap(m_lo, m_hi);
                    found = true;
                }
            }
        }
        if (!found) throw std::domain_error("m_under_real: lambda not inside a spectral gap");
    }

    double m = detail::bisect([&](double mm) { return zf(mm) - lambda; }, m_lo, m_hi);
    for (int k = 0; k < 60; ++k) {
        double F = zf(m) - lambda;
        double Fp = detail::z1_of_m(m, c, H);
        if (Fp == 0.0) break;
        double cand = m - F / Fp;
        if (!std::isfinite(cand) || std::abs(zf(cand) - lambda) >= std::abs(F)) break;
        m = cand;
    }

    RealBranch out;
    out.m_under = m;
    out.m_under2 = 1.0 / detail::z1_of_m(m, c, H);  // positive off the support
    if (out.m_under2 <= 0.0)
        throw std::runtime_error("m_under_real: non-positive m_2 (wrong branch)");
    return out;
}

// Both finite-n solutions of Lemma 1's Eq. (*): (c_n, H_n) and (c_nM, H_2n).
// They agree identically; returning both makes the equality testable.
inline std::pair<SilversteinSolution, SilversteinSolution> solve_finite_n_pair(
    cdouble z, const PopulationSpectrum& spec, std::optional<cdouble> hint = std::nullopt,
    const SolverOptions& opts = {}) {
    const HnPair hn = build_H_n(spec);
    auto s1 = solve_m_under(z, hn.c_n, hn.h_n, hint, opts);
    auto s2 = solve_m_under(z, hn.c_nM, hn.h_2n, s1.m_under, opts);
    return {s1, s2};
}

// Bulk density of F^{c,H} at x, via m = (m_under + (1-c)/z)/c just above the
// real axis; zero outside the support.
inline double density_at(double x, double c, const BulkDistribution& H) {
    if (x <= 0.0) return 0.0;
    const auto intervals = support_edges(c, H);
    bool inside = false;
    for (const auto& iv : intervals)
        if (x > iv.left_edge && x < iv.right_edge) inside = true;
    if (!inside) return 0.0;
    const double eps = 1e-9 * std::max(1.0, x);
    const cdouble z{x, eps};
    auto sol = solve_m_under(z, c, H);
    const cdouble m = (sol.m_under + (1.0 - c) / z) / c;
    return std::max(0.0, m.imag() / std::numbers::pi);
}

}  // namespace lssclt
