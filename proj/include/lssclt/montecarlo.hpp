// Monte Carlo side of the experiment: sampling generalized spiked sample
// covariance matrices, the empirical LSS statistics Y_n(f_l), the spiked
// fluctuations gamma_kj, and the comparison statistics against the predicted
// Gaussian law. Per-rep RNG substreams are derived from (seed, rep) so the
// report is a pure function of the config; parallel and serial runs produce
// bit-identical statistics (fixed-order reduction over the rep index).
#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <exception>
#include <mutex>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Eigenvalues>
#include <Eigen/QR>

#include "lssclt/numeric.hpp"
#include "lssclt/spiked.hpp"

namespace lssclt {

enum class EntryDist { gaussian, rademacher, uniform_standardized };

inline MomentProfile moment_profile_for(EntryDist d) {
    switch (d) {
        case EntryDist::gaussian: return MomentProfile::gaussian_real();
        case EntryDist::rademacher: return MomentProfile::rademacher_real();
        case EntryDist::uniform_standardized: return MomentProfile::uniform_real();
    }
    throw std::invalid_argument("unknown entry distribution");
}

inline std::string to_string(EntryDist d) {
    switch (d) {
        case EntryDist::gaussian: return "gaussian";
        case EntryDist::rademacher: return "rademacher";
        case EntryDist::uniform_standardized: return "uniform-standardized";
    }
    return "?";
}

struct SampleConfig {
    PopulationSpectrum spectrum;
    EntryDist entry_dist = EntryDist::gaussian;
    int reps = 3000;
    std::uint64_t seed = 0;
    bool parallel = true;
    int threads = 0;  // 0: hardware concurrency
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t rep_seed(std::uint64_t seed, int rep) {
    return splitmix64(splitmix64(seed) ^ (0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(rep + 1)));
}

inline void fill_entries(Eigen::MatrixXd& X, EntryDist dist, std::mt19937_64& eng) {
    switch (dist) {
        case EntryDist::gaussian: {
            std::normal_distribution<double> g(0.0, 1.0);
            for (Eigen::Index j = 0; j < X.cols(); ++j)
                for (Eigen::Index i = 0; i < X.rows(); ++i) X(i, j) = g(eng);
            break;
        }
        case EntryDist::rademacher: {
            for (Eigen::Index j = 0; j < X.cols(); ++j)
                for (Eigen::Index i = 0; i < X.rows(); ++i) X(i, j) = (eng() & 1u) ? 1.0 : -1.0;
            break;
        }
        case EntryDist::uniform_standardized: {
            const double half = std::sqrt(3.0);
            std::uniform_real_distribution<double> u(-half, half);
            for (Eigen::Index j = 0; j < X.cols(); ++j)
                for (Eigen::Index i = 0; i < X.rows(); ++i) X(i, j) = u(eng);
            break;
        }
    }
}

// Population eigenvalues in the fixed coordinate order: spikes (descending,
// repeated by multiplicity), then bulk atoms (weights materialized as counts).
inline Eigen::VectorXd population_diagonal(const PopulationSpectrum& spec) {
    const auto resolved = resolve_spikes(spec);
    const int pb = spec.bulk_count();
    Eigen::VectorXd d(spec.p);
    int idx = 0;
    for (const auto& s : resolved)
        for (int j = 0; j < s.multiplicity; ++j) d(idx++) = s.value;
    for (const auto& a : spec.bulk.atoms) {
        const double exact = a.weight * pb;
        const int count = static_cast<int>(std::llround(exact));
        if (std::abs(exact - count) > 1e-9 * pb)
            throw std::invalid_argument(
                "sampling requires integral bulk atom counts: weight * (p - M) not integral");
        for (int j = 0; j < count && idx < spec.p; ++j) d(idx++) = a.value;
    }
    if (idx != spec.p) throw std::invalid_argument("bulk atom counts do not fill p - M slots");
    return d;
}

// Orthogonal completion [u1 | rest] of a p x M orthonormal block.
inline Eigen::MatrixXd complete_basis(const Eigen::MatrixXd& u1, int p) {
    const int M = static_cast<int>(u1.cols());
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(u1);
    Eigen::MatrixXd Q = qr.householderQ();
    Eigen::MatrixXd U(p, p);
    U.leftCols(M) = u1;
    U.rightCols(p - M) = Q.rightCols(p - M);
    return U;
}

}  // namespace detail

struct SampleResult {
    std::vector<double> eigenvalues;       // of B, descending
    std::vector<double> s22_eigenvalues;   // of the bulk submatrix, descending
    double trace = 0.0;                    // tr B, computed directly
    double trace_s11 = 0.0;                // tr of the spiked block
};

// Eigenvalues of B = (1/n) T X X^T T^T for one rep. With the canonical basis
// T is diagonal sqrt(population); a configured orthonormal u1 block enters as
// X <- U^T X (only the entry law beyond Gaussian makes this matter).
inline SampleResult sample_B(const PopulationSpectrum& spec, EntryDist dist,
                             std::uint64_t rep_seed_value,
                             const std::optional<Eigen::MatrixXd>& u1 = std::nullopt,
                             bool with_s22 = false) {
    spec.validate();
    const int p = spec.p, n = spec.n, M = spec.spike_count();
    const Eigen::VectorXd d = detail::population_diagonal(spec);
    const Eigen::VectorXd sq = d.cwiseSqrt();

    std::mt19937_64 eng(rep_seed_value);
    Eigen::MatrixXd X(p, n);
    detail::fill_entries(X, dist, eng);
    if (u1.has_value()) {
        const Eigen::MatrixXd U = detail::complete_basis(*u1, p);
        X = U.transpose() * X;
    }
    Eigen::MatrixXd Z = sq.asDiagonal() * X;
    Eigen::MatrixXd S(p, p);
    S.noalias() = Z * Z.transpose() / static_cast<double>(n);

    SampleResult out;
    out.trace = S.trace();
    out.trace_s11 = S.topLeftCorner(M, M).trace();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S, Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success) throw std::runtime_error("sample_B: eigensolver failed");
    out.eigenvalues.assign(es.eigenvalues().data(), es.eigenvalues().data() + p);
    std::reverse(out.eigenvalues.begin(), out.eigenvalues.end());
    if (with_s22 && M > 0) {
        Eigen::MatrixXd S22 = S.bottomRightCorner(p - M, p - M);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es2(S22, Eigen::EigenvaluesOnly);
        if (es2.info() != Eigen::Success) throw std::runtime_error("sample_B: S22 eigensolver failed");
        out.s22_eigenvalues.assign(es2.eigenvalues().data(), es2.eigenvalues().data() + (p - M));
        std::reverse(out.s22_eigenvalues.begin(), out.s22_eigenvalues.end());
    }
    return out;
}

// Deterministic per-config quantities reused across reps.
struct TheoryTerms {
    std::vector<Kernel> kernels;
    std::vector<double> rho;
    std::vector<double> centering;    // p int f dF^{c_n,H_n} per kernel
    std::vector<double> correction;   // group-resolved spiked correction per kernel
    std::vector<ResolvedSpike> resolved;
    std::vector<double> phis;         // phi_n per group
    CltPrediction prediction;
};

inline TheoryTerms prepare_theory(const PopulationSpectrum& spec, const MomentProfile& moments,
                                  const std::vector<Kernel>& kernels, const CltOptions& opts = {}) {
    TheoryTerms t;
    t.kernels = kernels;
    t.resolved = resolve_spikes(spec);
    for (const auto& rs : t.resolved) t.phis.push_back(phi_n(rs.value, spec));
    t.prediction = clt_prediction(spec, moments, kernels, opts);
    t.rho = t.prediction.rho;

    bool needs_positive = false;
    for (const auto& f : kernels) needs_positive |= f.requires_positive_domain();
    const double c = spec.c_nM();
    const auto intervals = support_edges(c, spec.bulk);
    const SupportInterval support{intervals.front().left_edge, intervals.back().right_edge};
    ContourSpec cs = build_contour(support, t.phis, needs_positive, opts.contour.margin,
                                   opts.contour.nodes_per_side);
    const QuadratureGrid grid = build_grid(cs, c, spec.bulk, opts.contour.panel_order, opts.solver);
    for (const auto& f : kernels) {
        t.centering.push_back(centering_integral(f, grid, spec.n));
        t.correction.push_back(correction_term(f, t.resolved, grid));
    }
    return t;
}

// Y_n(f_l) = rho_l [ sum_j f(lambda_j) - centering - sum_k m_k f(phi_n(alpha_k))
//                    - correction ].
// Throws std::domain_error when the kernel domain is violated (the caller
// marks the rep invalid).
inline double lss_statistic(const std::vector<double>& eigenvalues, std::size_t kernel_index,
                            const TheoryTerms& t) {
    const Kernel& f = t.kernels.at(kernel_index);
    std::vector<double> vals(eigenvalues.size());
    for (std::size_t i = 0; i < eigenvalues.size(); ++i) vals[i] = f.eval(eigenvalues[i]);
    double spiked = 0.0;
    for (std::size_t k = 0; k < t.resolved.size(); ++k)
        spiked += t.resolved[k].multiplicity * f.eval(t.phis[k]);
    return t.rho[kernel_index] *
           (pairwise_sum(vals) - t.centering[kernel_index] - spiked - t.correction[kernel_index]);
}

// gamma_kj = sqrt(n) (lambda_j - phi_n(alpha_k)) / phi_n(alpha_k); descending
// block assignment of the top M eigenvalues to groups.
inline std::vector<std::vector<double>> spiked_gamma(const std::vector<double>& eigenvalues,
                                                     const TheoryTerms& t, int n) {
    std::vector<std::vector<double>> out;
    std::size_t idx = 0;
    const double root_n = std::sqrt(static_cast<double>(n));
    for (std::size_t k = 0; k < t.resolved.size(); ++k) {
        std::vector<double> g;
        for (int j = 0; j < t.resolved[k].multiplicity; ++j, ++idx)
            g.push_back(root_n * (eigenvalues.at(idx) - t.phis[k]) / t.phis[k]);
        out.push_back(std::move(g));
    }
    return out;
}

struct KsResult {
    double statistic = 0.0;
    double p_value = 0.0;
};

// One-sample Kolmogorov-Smirnov against Normal(mean, variance); asymptotic
// p-value from the Kolmogorov series, truncated at 100 terms.
inline KsResult ks_normal(std::vector<double> samples, double mean, double variance) {
    if (samples.size() < 8) throw std::invalid_argument("ks_normal: need >= 8 samples");
    if (variance <= 0.0) throw std::domain_error("ks_normal: variance must be positive");
    std::sort(samples.begin(), samples.end());
    const double sd = std::sqrt(variance);
    const double N = static_cast<double>(samples.size());
    double d = 0.0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const double z = (samples[i] - mean) / sd;
        const double cdf = 0.5 * std::erfc(-z / std::numbers::sqrt2);
        d = std::max(d, std::max((i + 1) / N - cdf, cdf - i / N));
    }
    const double lambda = std::sqrt(N) * d;
    double q = 0.0;
    for (int k = 1; k <= 100; ++k) {
        const double term = 2.0 * std::exp(-2.0 * k * k * lambda * lambda);
        q += (k % 2 == 1) ? term : -term;
    }
    return {d, std::clamp(q, 0.0, 1.0)};
}

struct KernelReport {
    std::string kernel;
    std::vector<double> samples;          // raw Y_n
    double sample_mean = 0.0;
    double sample_variance = 0.0;
    double predicted_mean = 0.0;
    double predicted_variance = 0.0;
    double normalized_mean = 0.0;         // of (Y - pred_mean)/pred_sd
    double normalized_variance = 0.0;
    std::optional<KsResult> ks;           // vs the predicted Gaussian
    double lemma2_mc_mean = 0.0;          // mean of L1 - L2 over reps
    double lemma2_mc_se = 0.0;
    double spiked_bulk_correlation = 0.0; // Lemma 5 check
};

struct GroupReport {
    double phi = 0.0;
    double sigma_sq_predicted = 0.0;
    double gamma_sum_variance = 0.0;
    double gamma_sum_mean = 0.0;
    std::vector<double> gamma_sums;
};

struct SimulationReport {
    SampleConfig config_echo;
    std::vector<KernelReport> kernels;
    std::vector<GroupReport> groups;
    int reps_total = 0;
    int reps_invalid = 0;
    int eigen_identity_violations = 0;   // |sum lambda - tr B| > 1e-8 rel
    double elapsed_seconds = 0.0;
    std::uint64_t seed = 0;
};

struct RunOptions {
    CltOptions clt;
    bool with_s22 = true;    // needed for the Lemma 2 / Lemma 5 empirical checks
    double invalid_fraction_limit = 0.01;
    int histogram_bins = 50;
    double histogram_range = 4.0;  // bins over [-4, 4] on the normalized scale
};

namespace detail {

struct RepOutcome {
    bool valid = false;
    std::vector<double> y;            // per kernel
    std::vector<double> spiked_part;  // per kernel: sum_{j<=M} f - sum f(phi)
    std::vector<double> bulk_part;    // per kernel: sum f(s22 eig) - centering
    std::vector<double> l1_l2;        // per kernel
    std::vector<double> gamma_sums;   // per group
    bool eigen_identity_ok = true;
};

}  // namespace detail

inline SimulationReport run_experiment(const SampleConfig& config, const MomentProfile& moments,
                                       const std::vector<Kernel>& kernels,
                                       const RunOptions& opts = {}) {
    const auto t0 = std::chrono::steady_clock::now();
    config.spectrum.validate();
    if (config.reps < 1) throw std::invalid_argument("run_experiment: reps >= 1 required");
    const TheoryTerms theory = prepare_theory(config.spectrum, moments, kernels, opts.clt);
    const int M = config.spectrum.spike_count();
    const std::size_t h = kernels.size();
    const std::size_t K = theory.resolved.size();

    std::vector<detail::RepOutcome> outcomes(config.reps);

    auto run_one = [&](int r, detail::RepOutcome& o) {
        const SampleResult sample =
            sample_B(config.spectrum, config.entry_dist, detail::rep_seed(config.seed, r),
                     moments.u1, opts.with_s22 && M > 0);
        const std::vector<double>& ev = sample.eigenvalues;
        const double esum = pairwise_sum(ev);
        o.eigen_identity_ok =
            std::abs(esum - sample.trace) <= 1e-8 * std::max(1.0, std::abs(sample.trace));
        o.y.resize(h);
        o.spiked_part.resize(h);
        o.bulk_part.resize(h);
        o.l1_l2.resize(h);
        for (std::size_t l = 0; l < h; ++l) {
            const Kernel& f = kernels[l];
            o.y[l] = lss_statistic(ev, l, theory);
            double sp = 0.0;
            for (int j = 0; j < M; ++j) sp += f.eval(ev[j]);
            double sp_center = 0.0;
            for (std::size_t k = 0; k < K; ++k)
                sp_center += theory.resolved[k].multiplicity * f.eval(theory.phis[k]);
            o.spiked_part[l] = sp - sp_center;
            if (!sample.s22_eigenvalues.empty()) {
                std::vector<double> bulk_vals(sample.s22_eigenvalues.size());
                for (std::size_t i = 0; i < bulk_vals.size(); ++i)
                    bulk_vals[i] = f.eval(sample.s22_eigenvalues[i]);
                const double l2 = pairwise_sum(bulk_vals);
                o.bulk_part[l] = l2 - theory.centering[l];
                double tail = 0.0;
                for (std::size_t j = M; j < ev.size(); ++j) tail += f.eval(ev[j]);
                o.l1_l2[l] = tail - l2;
            }
        }
        const auto gammas = spiked_gamma(ev, theory, config.spectrum.n);
        o.gamma_sums.resize(K);
        for (std::size_t k = 0; k < K; ++k) o.gamma_sums[k] = pairwise_sum(gammas[k]);
        o.valid = true;
    };

    std::atomic<int> next{0};
    std::mutex error_mutex;
    std::exception_ptr first_error;
    auto worker = [&]() {
        for (;;) {
            const int r = next.fetch_add(1);
            if (r >= config.reps) return;
            detail::RepOutcome& o = outcomes[r];
            try {
                run_one(r, o);
            } catch (const std::domain_error&) {
                o.valid = false;  // kernel domain violation; rep excluded and counted
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
                return;
            }
        }
    };

    int threads = 1;
    if (config.parallel) {
        threads = config.threads > 0 ? config.threads
                                     : static_cast<int>(std::thread::hardware_concurrency());
        threads = std::max(1, std::min(threads, config.reps));
    }
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(threads);
        for (int i = 0; i < threads; ++i) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    if (first_error) std::rethrow_exception(first_error);

    SimulationReport rep;
    rep.config_echo = config;
    rep.seed = config.seed;
    rep.reps_total = config.reps;
    for (const auto& o : outcomes) {
        if (!o.valid) ++rep.reps_invalid;
        if (!o.eigen_identity_ok) ++rep.eigen_identity_violations;
    }
    if (rep.reps_invalid > opts.invalid_fraction_limit * config.reps)
        throw std::runtime_error("run_experiment: more than the allowed fraction of invalid reps");

    for (std::size_t l = 0; l < h; ++l) {
        KernelReport kr;
        kr.kernel = kernels[l].name();
        kr.predicted_mean = theory.prediction.mean[l];
        kr.predicted_variance = theory.prediction.cov(l, l);
        std::vector<double> spiked_s, bulk_s, l12_s;
        for (const auto& o : outcomes) {
            if (!o.valid) continue;
            kr.samples.push_back(o.y[l]);
            spiked_s.push_back(o.spiked_part[l]);
            bulk_s.push_back(o.bulk_part[l]);
            l12_s.push_back(o.l1_l2[l]);
        }
        kr.sample_mean = sample_mean(kr.samples);
        kr.sample_variance = sample_variance(kr.samples);
        const double sd = std::sqrt(kr.predicted_variance);
        kr.normalized_mean = (kr.sample_mean - kr.predicted_mean) / sd;
        kr.normalized_variance = kr.sample_variance / kr.predicted_variance;
        if (kr.samples.size() >= 8)
            kr.ks = ks_normal(kr.samples, kr.predicted_mean, kr.predicted_variance);
        if (!l12_s.empty() && M > 0 && opts.with_s22) {
            kr.lemma2_mc_mean = sample_mean(l12_s);
            kr.lemma2_mc_se =
                std::sqrt(sample_variance(l12_s) / static_cast<double>(l12_s.size()));
            if (spiked_s.size() >= 2 && sample_variance(bulk_s) > 0.0 &&
                sample_variance(spiked_s) > 0.0)
                kr.spiked_bulk_correlation = sample_correlation(spiked_s, bulk_s);
        }
        rep.kernels.push_back(std::move(kr));
    }

    for (std::size_t k = 0; k < K; ++k) {
        GroupReport gr;
        gr.phi = theory.phis[k];
        gr.sigma_sq_predicted = theory.prediction.spiked.groups[k].sigma_sq;
        for (const auto& o : outcomes)
            if (o.valid) gr.gamma_sums.push_back(o.gamma_sums[k]);
        gr.gamma_sum_mean = sample_mean(gr.gamma_sums);
        gr.gamma_sum_variance = sample_variance(gr.gamma_sums);
        rep.groups.push_back(std::move(gr));
    }

    rep.elapsed_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return rep;
}

struct HistogramRow {
    double bin_left = 0.0;
    double bin_right = 0.0;
    int count = 0;
    double density = 0.0;
};

// Normalized-scale histogram of (Y - pred_mean)/pred_sd, 50 bins over [-4, 4].
inline std::vector<HistogramRow> histogram_normalized(const KernelReport& kr, int bins = 50,
                                                      double range = 4.0) {
    std::vector<HistogramRow> rows(bins);
    const double width = 2.0 * range / bins;
    for (int b = 0; b < bins; ++b) {
        rows[b].bin_left = -range + b * width;
        rows[b].bin_right = rows[b].bin_left + width;
    }
    const double sd = std::sqrt(kr.predicted_variance);
    int inside = 0;
    for (double y : kr.samples) {
        const double z = (y - kr.predicted_mean) / sd;
        const int b = static_cast<int>(std::floor((z + range) / width));
        if (b >= 0 && b < bins) {
            ++rows[b].count;
            ++inside;
        }
    }
    const double total = std::max(1, static_cast<int>(kr.samples.size()));
    for (auto& r : rows) r.density = r.count / (total * width);
    (void)inside;
    return rows;
}

}  // namespace lssclt
