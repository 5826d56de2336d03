#include <catch2/catch_amalgamated.hpp>

#include <complex>
#include <random>

#include "lssclt/stieltjes.hpp"

using namespace lssclt;
using Catch::Approx;

namespace {

// Closed-form oracle for H = delta_1: root of z m^2 + (z+1-c) m + 1 = 0 on
// the Herglotz branch. Independent of the fixed-point solver.
cdouble quadratic_oracle(cdouble z, double c) {
    const cdouble b = z + 1.0 - c;
    const cdouble disc = std::sqrt(b * b - 4.0 * z);
    const cdouble r1 = (-b + disc) / (2.0 * z);
    const cdouble r2 = (-b - disc) / (2.0 * z);
    if (z.imag() != 0.0) return r1.imag() * z.imag() > 0.0 ? r1 : r2;
    return std::abs(r1) < std::abs(r2) ? r1 : r2;
}

PopulationSpectrum paper_spectrum(int which) {
    PopulationSpectrum s;
    s.p = 100;
    s.n = 3000;
    if (which == 1)
        s.spikes = {{1.0, 1.0 / 3.0, 0.0, 6}, {1.0, 1.0 / 3.0, -1.0, 6}, {1.0, 0.25, -2.0, 6}};
    else if (which == 2)
        s.spikes = {{1.0, 0.5, 0.0, 6}, {1.0, 1.0 / 3.0, -1.0, 6}, {1.0, 0.25, -2.0, 6}};
    else
        s.spikes = {{1.0, 1.0, 0.0, 6}, {1.0, 0.5, 0.0, 6}, {1.0, 1.0 / 3.0, 0.0, 6}};
    s.bulk = BulkDistribution::point_mass(1.0);
    return s;
}

}  // namespace

TEST_CASE("solver matches the closed-form quadratic for H = delta_1") {
    const auto H = BulkDistribution::point_mass(1.0);
    for (double c : {0.1, 0.5, 0.9}) {
        std::mt19937_64 eng(7);
        std::uniform_real_distribution<double> ur(-1.0, 4.0), ui(0.05, 2.0);
        for (int i = 0; i < 100; ++i) {
            const cdouble z{ur(eng), (i % 2 ? 1.0 : -1.0) * ui(eng)};
            const auto sol = solve_m_under(z, c, H);
            const cdouble oracle = quadratic_oracle(z, c);
            INFO("c=" << c << " z=" << z);
            REQUIRE(std::abs(sol.m_under - oracle) < 1e-10);
        }
    }
}

TEST_CASE("solve_m_under basics") {
    const auto H = BulkDistribution::point_mass(1.0);
    SECTION("-1/z asymptote far from the support") {
        const cdouble z{0.0, 1e6};
        const auto sol = solve_m_under(z, 0.5, H);
        REQUIRE(std::abs(sol.m_under - cdouble{0.0, 1e-6}) < 1e-9);
    }
    SECTION("Herglotz branch inside the support") {
        const auto sol = solve_m_under({1.0, 0.01}, 0.25, H);
        REQUIRE(sol.m_under.imag() > 0.0);
    }
    SECTION("residual satisfies the fixed-point equation") {
        const auto sol = solve_m_under({2.0, 0.1}, 0.5, H);
        const cdouble lhs = -1.0 / sol.m_under + 0.5 / (1.0 + sol.m_under);
        REQUIRE(std::abs(lhs - sol.z) < 1e-12 * std::abs(sol.z));
    }
    SECTION("implicit derivative matches central differences") {
        std::mt19937_64 eng(3);
        std::uniform_real_distribution<double> ur(0.2, 4.0), ui(0.2, 1.5);
        BulkDistribution H2;
        H2.atoms = {{0.7, 0.4}, {1.3, 0.6}};
        for (int i = 0; i < 25; ++i) {
            const cdouble z{ur(eng), ui(eng)};
            const auto sol = solve_m_under(z, 0.3, H2);
            const cdouble dz = 1e-6 * std::abs(z);
            const auto up = solve_m_under(z + dz, 0.3, H2, sol.m_under);
            const auto dn = solve_m_under(z - dz, 0.3, H2, sol.m_under);
            const cdouble fd = (up.m_under - dn.m_under) / (2.0 * dz);
            REQUIRE(std::abs(sol.m_prime - fd) < 1e-5 * std::abs(sol.m_prime));
        }
    }
}

TEST_CASE("support_edges") {
    SECTION("MP edges (1 +- sqrt(c))^2 for H = delta_1") {
        const auto H = BulkDistribution::point_mass(1.0);
        for (double c : {0.25, 1.0 / 30.0}) {
            auto iv = support_edges(c, H);
            REQUIRE(iv.size() == 1);
            REQUIRE(iv[0].left_edge == Approx(std::pow(1.0 - std::sqrt(c), 2)).epsilon(1e-9));
            REQUIRE(iv[0].right_edge == Approx(std::pow(1.0 + std::sqrt(c), 2)).epsilon(1e-9));
        }
    }
    SECTION("c -> 0 shrinks the interval to the atom") {
        const auto H = BulkDistribution::point_mass(1.0);
        auto iv = support_edges(1e-8, H);
        REQUIRE(iv[0].left_edge == Approx(1.0).margin(1e-3));
        REQUIRE(iv[0].right_edge == Approx(1.0).margin(1e-3));
    }
    SECTION("well-separated atoms give two intervals") {
        BulkDistribution H;
        H.atoms = {{1.0, 0.5}, {10.0, 0.5}};
        auto iv = support_edges(0.05, H);
        REQUIRE(iv.size() == 2);
        REQUIRE(iv[0].right_edge < iv[1].left_edge);
    }
}

TEST_CASE("m_under_real") {
    const auto H = BulkDistribution::point_mass(1.0);
    const double c = 0.5;
    SECTION("tail behavior lambda m(lambda) -> -1") {
        const auto rb = m_under_real(1e6, c, H);
        REQUIRE(1e6 * rb.m_under == Approx(-1.0).margin(1e-6));
        REQUIRE(rb.m_under < 0.0);
        REQUIRE(rb.m_under2 > 0.0);
    }
    SECTION("spiked identity m(phi(alpha)) = -1/alpha for H = delta_1") {
        for (double alpha : {5.0, 14.4225, 100.0}) {
            const double lam = phi(alpha, c, H);
            const auto rb = m_under_real(lam, c, H);
            REQUIRE(rb.m_under == Approx(-1.0 / alpha).epsilon(1e-10));
        }
    }
    SECTION("Cauchy-Schwarz m_2 >= m^2") {
        BulkDistribution H2;
        H2.atoms = {{0.8, 0.5}, {1.4, 0.5}};
        for (double lam : {4.0, 7.0, 25.0, 300.0}) {
            const auto rb = m_under_real(lam, 0.35, H2);
            REQUIRE(rb.m_under2 >= rb.m_under * rb.m_under);
        }
    }
    SECTION("left of the support") {
        const auto iv = support_edges(c, H);
        const double lam = iv[0].left_edge * 0.5;
        const auto rb = m_under_real(lam, c, H);
        // check against the quadratic closed form
        const cdouble oracle = quadratic_oracle({lam, 0.0}, c);
        const double resid = std::abs(-1.0 / rb.m_under + 0.5 / (1.0 + rb.m_under) - lam);
        REQUIRE(resid < 1e-10);
        REQUIRE(rb.m_under < -1.0);  // left branch sits left of the pole at -1/t
        (void)oracle;
    }
    SECTION("inside the support is a domain error") {
        REQUIRE_THROWS_AS(m_under_real(1.0, c, H), std::domain_error);
        REQUIRE_THROWS_AS(m_under_real(-1.0, c, H), std::domain_error);
    }
}

TEST_CASE("solve_finite_n_pair agrees across the two normalizations") {
    SECTION("paper spectra, 50-point contour grid") {
        for (int which : {1, 2, 3}) {
            const auto spec = paper_spectrum(which);
            std::optional<cdouble> hint;
            for (int i = 0; i < 50; ++i) {
                const double t = static_cast<double>(i) / 49.0;
                const cdouble z{0.3 + 2.2 * t, (i % 2 ? 0.3 : -0.3)};
                auto [s1, s2] = solve_finite_n_pair(z, spec, hint);
                hint = s1.m_under;
                INFO("spectrum " << which << " z=" << z);
                REQUIRE(std::abs(s1.m_under - s2.m_under) < 1e-8);
            }
        }
    }
    SECTION("M = 0 gives exact equality") {
        PopulationSpectrum s;
        s.p = 50;
        s.n = 200;
        s.bulk = BulkDistribution::point_mass(1.0);
        auto [s1, s2] = solve_finite_n_pair({1.5, 0.4}, s);
        REQUIRE(s1.m_under == s2.m_under);
    }
    SECTION("finite-n solution approaches the limit as n grows") {
        // fixed c = 0.5 and two fixed unit spikes; H_n -> delta_1
        const auto H = BulkDistribution::point_mass(1.0);
        const cdouble z{2.0, 0.5};
        const auto limit = solve_m_under(z, 0.5, H);
        double prev = 1e300;
        for (int n : {200, 2000, 20000}) {
            PopulationSpectrum s;
            s.n = n;
            s.p = n / 2;
            s.spikes = {{0.0, 0.0, 1e4, 2}};
            s.bulk = BulkDistribution::point_mass(1.0);
            auto [s1, s2] = solve_finite_n_pair(z, s);
            const double diff = std::abs(s1.m_under - limit.m_under);
            REQUIRE(diff < prev);
            prev = diff;
        }
        REQUIRE(prev < 1e-3);
    }
}

TEST_CASE("density_at") {
    const auto H = BulkDistribution::point_mass(1.0);
    const double c = 0.25;
    SECTION("matches the closed-form MP density") {
        const double a = std::pow(1.0 - std::sqrt(c), 2), b = std::pow(1.0 + std::sqrt(c), 2);
        for (double x : {0.5, 1.0, 1.5, 2.0}) {
            const double oracle = std::sqrt((b - x) * (x - a)) / (2.0 * std::numbers::pi * c * x);
            REQUIRE(density_at(x, c, H) == Approx(oracle).epsilon(1e-4));
        }
    }
    SECTION("zero outside the support") {
        REQUIRE(density_at(0.2, c, H) == 0.0);
        REQUIRE(density_at(2.3, c, H) == 0.0);
        REQUIRE(density_at(-1.0, c, H) == 0.0);
    }
    SECTION("integrates to one") {
        const auto iv = support_edges(c, H)[0];
        // theta-substitution x = mid + rad sin(theta) removes the edge roots
        const double mid = 0.5 * (iv.left_edge + iv.right_edge);
        const double rad = 0.5 * (iv.right_edge - iv.left_edge);
        const int N = 2000;
        double total = 0.0;
        for (int i = 0; i < N; ++i) {
            const double th = -std::numbers::pi / 2 + std::numbers::pi * (i + 0.5) / N;
            const double x = mid + rad * std::sin(th);
            total += density_at(x, c, H) * rad * std::cos(th) * std::numbers::pi / N;
        }
        REQUIRE(total == Approx(1.0).margin(1e-4));
    }
}

TEST_CASE("branch continuity along a closed contour path") {
    // walk a full rectangle including the vertical sides: successive m values
    // change by O(|dz|), and the path closes back on itself (no branch jumps)
    BulkDistribution H;
    H.atoms = {{0.9, 0.65}, {1.6, 0.35}};
    const double c = 0.4;
    const auto iv = support_edges(c, H);
    const double xl = iv.front().left_edge * 0.9, xr = iv.back().right_edge * 1.1;
    const double hh = 0.1 * (xr - xl);
    const cdouble corners[5] = {{xl, -hh}, {xr, -hh}, {xr, hh}, {xl, hh}, {xl, -hh}};
    std::vector<cdouble> path;
    const int per_side = 600;
    for (int side = 0; side < 4; ++side)
        for (int i = 0; i < per_side; ++i)
            path.push_back(corners[side] +
                           (corners[side + 1] - corners[side]) * (static_cast<double>(i) / per_side));
    std::optional<cdouble> hint;
    cdouble first{}, prev{};
    bool have_prev = false;
    for (const auto& z : path) {
        auto sol = solve_m_under(z, c, H, hint);
        if (have_prev) {
            REQUIRE(std::abs(sol.m_under - prev) < 0.08);
        } else {
            first = sol.m_under;
        }
        prev = sol.m_under;
        have_prev = true;
        hint = prev;
    }
    REQUIRE(std::abs(prev - first) < 0.08);  // the walk closes
}
