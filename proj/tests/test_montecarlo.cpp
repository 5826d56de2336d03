#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "lssclt/config.hpp"
#include "lssclt/montecarlo.hpp"

using namespace lssclt;
using Catch::Approx;

namespace {

PopulationSpectrum small_spec(int p = 40, int n = 400, bool with_spike = true) {
    PopulationSpectrum s;
    s.p = p;
    s.n = n;
    if (with_spike) s.spikes = {{0.0, 0.0, 25.0, 2}};
    s.bulk = BulkDistribution::point_mass(1.0);
    return s;
}

}  // namespace

TEST_CASE("sample_B") {
    SECTION("identity population: eigenvalue mean concentrates at 1") {
        auto s = small_spec(60, 600, false);
        auto r = sample_B(s, EntryDist::gaussian, 123);
        double mean = 0.0;
        for (double v : r.eigenvalues) mean += v;
        mean /= s.p;
        REQUIRE(mean == Approx(1.0).margin(0.15));
        REQUIRE(std::is_sorted(r.eigenvalues.rbegin(), r.eigenvalues.rend()));
    }
    SECTION("all eigenvalues nonnegative (Gram matrix)") {
        auto s = small_spec();
        for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
            auto r = sample_B(s, EntryDist::rademacher, seed);
            REQUIRE(r.eigenvalues.back() >= -1e-12);
        }
    }
    SECTION("2x2 fixed matrix matches the characteristic-polynomial oracle") {
        // rebuild the same Z = D^{1/2} X from the same substream and solve the
        // 2x2 eigenvalue problem by the quadratic formula, independent of the
        // library eigensolver
        PopulationSpectrum s;
        s.p = 2;
        s.n = 2;
        s.bulk = {{{1.0, 0.5}, {4.0, 0.5}}};
        const std::uint64_t seed = 99;
        auto r = sample_B(s, EntryDist::gaussian, seed);

        std::mt19937_64 eng(seed);
        Eigen::MatrixXd X(2, 2);
        lssclt::detail::fill_entries(X, EntryDist::gaussian, eng);
        // population eigenvalues fill coordinates in configured atom order
        Eigen::MatrixXd Z = X;
        Z.row(0) *= std::sqrt(1.0);
        Z.row(1) *= std::sqrt(4.0);
        Eigen::MatrixXd B = Z * Z.transpose() / 2.0;
        const double tr = B(0, 0) + B(1, 1);
        const double det = B(0, 0) * B(1, 1) - B(0, 1) * B(1, 0);
        const double disc = std::sqrt(std::max(0.0, tr * tr / 4.0 - det));
        REQUIRE(r.eigenvalues[0] == Approx(tr / 2 + disc).epsilon(1e-12));
        REQUIRE(r.eigenvalues[1] == Approx(tr / 2 - disc).epsilon(1e-12));
        REQUIRE(r.trace == Approx(tr).epsilon(1e-14));
    }
    SECTION("eigenvalue sum equals the trace") {
        auto s = small_spec();
        auto r = sample_B(s, EntryDist::gaussian, 5);
        double sum = 0.0;
        for (double v : r.eigenvalues) sum += v;
        REQUIRE(sum == Approx(r.trace).epsilon(1e-10));
    }
    SECTION("bulk weights that do not materialize as counts are rejected") {
        PopulationSpectrum s;
        s.p = 10;
        s.n = 100;
        s.bulk = {{{1.0, 0.37}, {2.0, 0.63}}};  // 3.7 and 6.3 atoms
        REQUIRE_THROWS_AS(sample_B(s, EntryDist::gaussian, 1), std::invalid_argument);
    }
}

TEST_CASE("lss_statistic") {
    CltOptions fast;
    fast.contour.nodes_per_side = 512;
    fast.contour.nodes_per_side_double = 128;

    SECTION("no spikes, f = x: collapses to tr B minus the centering") {
        auto s = small_spec(50, 200, false);
        auto theory = prepare_theory(s, MomentProfile::gaussian_real(), {Kernel::identity()}, fast);
        auto r = sample_B(s, EntryDist::gaussian, 7);
        const double y = lss_statistic(r.eigenvalues, 0, theory);
        double sum = 0.0;
        for (double v : r.eigenvalues) sum += v;
        REQUIRE(theory.rho[0] == Approx(1.0));
        REQUIRE(y == Approx(sum - theory.centering[0]).margin(1e-9));
    }
    SECTION("affine kernel x + 5 gives the same statistic as x") {
        auto s = small_spec();
        auto theory = prepare_theory(s, MomentProfile::gaussian_real(),
                                     {Kernel::identity(), Kernel::affine(1.0, 5.0)}, fast);
        auto r = sample_B(s, EntryDist::gaussian, 11);
        const double y0 = lss_statistic(r.eigenvalues, 0, theory);
        const double y1 = lss_statistic(r.eigenvalues, 1, theory);
        REQUIRE(y0 == Approx(y1).margin(1e-7));
    }
}

TEST_CASE("spiked_gamma") {
    auto s = small_spec();
    CltOptions fast;
    fast.contour.nodes_per_side = 256;
    fast.contour.nodes_per_side_double = 128;
    auto theory = prepare_theory(s, MomentProfile::gaussian_real(), {Kernel::identity()}, fast);
    SECTION("eigenvalue exactly at phi_n gives gamma = 0") {
        std::vector<double> ev(s.p, 0.5);
        ev[0] = theory.phis[0];
        ev[1] = theory.phis[0];
        auto g = spiked_gamma(ev, theory, s.n);
        REQUIRE(g.size() == 1);
        REQUIRE(g[0].size() == 2);
        REQUIRE(g[0][0] == 0.0);
        REQUIRE(g[0][1] == 0.0);
    }
    SECTION("scaling: gamma = sqrt(n) relative deviation") {
        std::vector<double> ev(s.p, 0.5);
        ev[0] = theory.phis[0] * 1.01;
        ev[1] = theory.phis[0];
        auto g = spiked_gamma(ev, theory, s.n);
        REQUIRE(g[0][0] == Approx(std::sqrt(400.0) * 0.01).epsilon(1e-9));
    }
}

TEST_CASE("ks_normal") {
    SECTION("null behavior: 1e5 standard normal draws") {
        std::mt19937_64 eng(2024);
        std::normal_distribution<double> nd(0.0, 1.0);
        std::vector<double> xs(100000);
        for (auto& x : xs) x = nd(eng);
        auto ks = ks_normal(xs, 0.0, 1.0);
        REQUIRE(ks.statistic < 5.0 / std::sqrt(100000.0));
        REQUIRE(ks.p_value > 0.01);
    }
    SECTION("shifted sample is rejected") {
        std::mt19937_64 eng(2025);
        std::normal_distribution<double> nd(1.0, 1.0);
        std::vector<double> xs(5000);
        for (auto& x : xs) x = nd(eng);
        auto ks = ks_normal(xs, 0.0, 1.0);
        REQUIRE(ks.p_value < 1e-6);
    }
    SECTION("preconditions") {
        REQUIRE_THROWS_AS(ks_normal({1, 2, 3}, 0.0, 1.0), std::invalid_argument);
        REQUIRE_THROWS_AS(ks_normal(std::vector<double>(10, 1.0), 0.0, 0.0), std::domain_error);
    }
}

TEST_CASE("run_experiment") {
    SampleConfig cfg;
    cfg.spectrum = small_spec();
    cfg.reps = 40;
    cfg.seed = 314;
    cfg.parallel = false;
    RunOptions opts;
    opts.clt.contour.nodes_per_side = 256;
    opts.clt.contour.nodes_per_side_double = 128;
    const std::vector<Kernel> kernels = {Kernel::identity()};
    const auto moments = MomentProfile::gaussian_real();

    SECTION("deterministic: same seed gives a bit-identical report") {
        auto r1 = run_experiment(cfg, moments, kernels, opts);
        auto r2 = run_experiment(cfg, moments, kernels, opts);
        auto j1 = to_json(r1), j2 = to_json(r2);
        j1.erase("elapsed_seconds");  // wall-clock metadata, not part of the contract
        j2.erase("elapsed_seconds");
        REQUIRE(j1.dump() == j2.dump());
    }
    SECTION("parallel equals serial") {
        auto serial = run_experiment(cfg, moments, kernels, opts);
        SampleConfig par = cfg;
        par.parallel = true;
        par.threads = 4;
        auto parallel = run_experiment(par, moments, kernels, opts);
        // config echo differs (parallel flag); compare the statistics
        auto js = to_json(serial), jp = to_json(parallel);
        REQUIRE(js["kernels"].dump() == jp["kernels"].dump());
        REQUIRE(js["groups"].dump() == jp["groups"].dump());
    }
    SECTION("per-rep eigen identity holds") {
        auto r = run_experiment(cfg, moments, kernels, opts);
        REQUIRE(r.eigen_identity_violations == 0);
        REQUIRE(r.reps_invalid == 0);
        REQUIRE(static_cast<int>(r.kernels[0].samples.size()) == cfg.reps);
    }
    SECTION("reps = 1: single sample, KS skipped") {
        SampleConfig one = cfg;
        one.reps = 1;
        auto r = run_experiment(one, moments, kernels, opts);
        REQUIRE(r.kernels[0].samples.size() == 1);
        REQUIRE_FALSE(r.kernels[0].ks.has_value());
    }
    SECTION("gamma sums: mean within 3 SE of zero, variance near the law") {
        SampleConfig big = cfg;
        big.reps = 400;
        big.parallel = true;
        auto r = run_experiment(big, moments, kernels, opts);
        const auto& g = r.groups[0];
        const double se = std::sqrt(g.gamma_sum_variance / big.reps);
        REQUIRE(std::abs(g.gamma_sum_mean) <= 3.0 * se);
        REQUIRE(g.gamma_sum_variance ==
                Approx(g.sigma_sq_predicted).epsilon(0.35));  // loose at 400 reps
    }
    SECTION("log kernel with p > n: every rep invalid, policy triggers") {
        SampleConfig bad;
        bad.spectrum.p = 30;
        bad.spectrum.n = 20;
        bad.spectrum.bulk = BulkDistribution::point_mass(1.0);
        bad.reps = 5;
        bad.seed = 1;
        bad.parallel = false;
        REQUIRE_THROWS_AS(
            run_experiment(bad, moments, {Kernel::log()}, opts), std::runtime_error);
    }
    SECTION("custom orthonormal u1 block samples cleanly") {
        PopulationSpectrum s = small_spec(12, 60);
        Eigen::MatrixXd raw = Eigen::MatrixXd::Random(12, 2);
        Eigen::HouseholderQR<Eigen::MatrixXd> qr(raw);
        Eigen::MatrixXd u1 = Eigen::MatrixXd(qr.householderQ()).leftCols(2);
        auto r = sample_B(s, EntryDist::rademacher, 5, u1, true);
        REQUIRE(static_cast<int>(r.eigenvalues.size()) == 12);
        double sum = 0.0;
        for (double v : r.eigenvalues) sum += v;
        REQUIRE(sum == Approx(r.trace).epsilon(1e-10));
        REQUIRE(r.s22_eigenvalues.size() == 10);
    }
    SECTION("histogram rows cover [-4, 4] with 50 bins") {
        auto r = run_experiment(cfg, moments, kernels, opts);
        auto rows = histogram_normalized(r.kernels[0]);
        REQUIRE(rows.size() == 50);
        REQUIRE(rows.front().bin_left == Approx(-4.0));
        REQUIRE(rows.back().bin_right == Approx(4.0));
        int count = 0;
        for (const auto& row : rows) count += row.count;
        REQUIRE(count <= cfg.reps);
        REQUIRE(count >= cfg.reps / 2);  // most samples inside the window
    }
}
