// Small numeric building blocks shared across the library: Gauss-Legendre
// rules and fixed-order pairwise summation (deterministic reductions).
#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <stdexcept>
#include <vector>

namespace lssclt {

struct GaussRule {
    std::vector<double> nodes;    // on (-1, 1), ascending
    std::vector<double> weights;  // sum to 2
};

// Nodes/weights via Newton iteration on P_n; accurate to machine precision
// for the orders used here (<= a few hundred).
inline GaussRule gauss_legendre(int n) {
    if (n < 1) throw std::invalid_argument("gauss_legendre: order must be >= 1");
    GaussRule rule;
    rule.nodes.resize(n);
    rule.weights.resize(n);
    const int mid = (n + 1) / 2;
    for (int i = 0; i < mid; ++i) {
        double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
        double pp = 0.0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0, p1 = x;
            for (int k = 2; k <= n; ++k) {
                double p2 = ((2 * k - 1) * x * p1 - (k - 1) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            pp = n * (x * p1 - p0) / (x * x - 1.0);
            double dx = p1 / pp;
            x -= dx;
            if (std::abs(dx) < 1e-15) break;
        }
        double w = 2.0 / ((1.0 - x * x) * pp * pp);
        rule.nodes[i] = -x;
        rule.nodes[n - 1 - i] = x;
        rule.weights[i] = w;
        rule.weights[n - 1 - i] = w;
    }
    return rule;
}

// Pairwise (cascade) summation in a fixed order independent of thread count.
template <typename T>
inline T pairwise_sum(const T* data, std::size_t count) {
    if (count == 0) return T{};
    if (count <= 8) {
        T acc = data[0];
        for (std::size_t i = 1; i < count; ++i) acc += data[i];
        return acc;
    }
    const std::size_t half = count / 2;
    return pairwise_sum(data, half) + pairwise_sum(data + half, count - half);
}

template <typename T>
inline T pairwise_sum(const std::vector<T>& v) {
    return pairwise_sum(v.data(), v.size());
}

inline double sample_mean(const std::vector<double>& v) {
    if (v.empty()) return 0.0;
    return pairwise_sum(v) / static_cast<double>(v.size());
}

inline double sample_variance(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    const double mu = sample_mean(v);
    std::vector<double> sq(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) sq[i] = (v[i] - mu) * (v[i] - mu);
    return pairwise_sum(sq) / static_cast<double>(v.size() - 1);
}

inline double sample_correlation(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size() || a.size() < 2)
        throw std::invalid_argument("sample_correlation: need two equal-length samples, n >= 2");
    const double ma = sample_mean(a), mb = sample_mean(b);
    std::vector<double> xy(a.size()), xx(a.size()), yy(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        xy[i] = (a[i] - ma) * (b[i] - mb);
        xx[i] = (a[i] - ma) * (a[i] - ma);
        yy[i] = (b[i] - mb) * (b[i] - mb);
    }
    const double denom = std::sqrt(pairwise_sum(xx) * pairwise_sum(yy));
    if (denom == 0.0) throw std::domain_error("sample_correlation: zero variance");
    return pairwise_sum(xy) / denom;
}

}  // namespace lssclt
