#include "prodspec/mc.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <mutex>
#include <numbers>
#include <thread>

#include <lapacke.h>

#include "prodspec/solver.hpp"

namespace prodspec {

namespace {

// The sampler parallelizes across samples; BLAS must not also fan out. Set
// before the first BLAS call (static init), respecting an explicit override.
const bool kBlasPinned = [] {
    setenv("OPENBLAS_NUM_THREADS", "1", 0);
    return true;
}();

using LpkCx = lapack_complex_double;

LpkCx* lpk(Cx* p) { return reinterpret_cast<LpkCx*>(p); }

} // namespace

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

Rng::Rng(RngStream stream) {
    std::uint64_t s = splitmix64(stream.seed) ^ splitmix64(splitmix64(stream.stream_id) + 0x632be59bd9b4e019ull);
    for (auto& w : state_) {
        s = splitmix64(s);
        w = s;
    }
}

std::uint64_t Rng::next_u64() {
    auto rotl = [](std::uint64_t v, int k) { return (v << k) | (v >> (64 - k)); };
    // xoshiro256++
    std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
    std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
}

double Rng::uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::gaussian() {
    if (has_cached_) {
        has_cached_ = false;
        return cached_;
    }
    double u1 = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53; // (0, 1]
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double th = 2.0 * std::numbers::pi * u2;
    cached_ = r * std::sin(th);
    has_cached_ = true;
    return r * std::cos(th);
}

Cx Rng::complex_gaussian() {
    double u1 = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
    double u2 = uniform();
    double r = std::sqrt(-std::log(u1)); // variance 1/2 per component
    double th = 2.0 * std::numbers::pi * u2;
    return {r * std::cos(th), r * std::sin(th)};
}

EntryDist parse_entry_dist(const std::string& s) {
    if (s == "gaussian") return EntryDist::Gaussian;
    if (s == "uniform") return EntryDist::Uniform;
    if (s == "phase") return EntryDist::Phase;
    fail(Errc::usage_error, "unknown entry distribution: " + s);
}

const char* entry_dist_name(EntryDist d) {
    switch (d) {
        case EntryDist::Gaussian: return "gaussian";
        case EntryDist::Uniform: return "uniform";
        case EntryDist::Phase: return "phase";
    }
    return "?";
}

namespace {

Matrix qr_unitary(int n, Rng& rng, bool phase_correct) {
    Matrix a(n, n);
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i) a(i, j) = rng.complex_gaussian();
    std::vector<Cx> tau(n);
    int info = LAPACKE_zgeqrf(LAPACK_COL_MAJOR, n, n, lpk(a.data()), n, lpk(tau.data()));
    if (info != 0) fail(Errc::eigen_solver_failure, "zgeqrf failed");
    std::vector<Cx> diag(n);
    for (int i = 0; i < n; ++i) diag[i] = a(i, i);
    info = LAPACKE_zungqr(LAPACK_COL_MAJOR, n, n, n, lpk(a.data()), n, lpk(tau.data()));
    if (info != 0) fail(Errc::eigen_solver_failure, "zungqr failed");
    if (phase_correct) {
        for (int j = 0; j < n; ++j) {
            double mag = std::abs(diag[j]);
            Cx ph = (mag > 0.0) ? diag[j] / mag : Cx(1.0, 0.0);
            a.col(j) *= ph;
        }
    }
    return a;
}

} // namespace

Matrix sample_cue(int n, Rng& rng) { return qr_unitary(n, rng, true); }
Matrix sample_cue_uncorrected(int n, Rng& rng) { return qr_unitary(n, rng, false); }

Matrix sample_ginibre(int rows, int cols, double sigma, Rng& rng, EntryDist dist) {
    if (rows < 1 || cols < 1) fail(Errc::non_positive_scale, "ginibre needs positive dims");
    // |entry|^2 expectation sigma^2 / sqrt(rows*cols); components i.i.d.
    double target = sigma / std::pow(static_cast<double>(rows) * cols, 0.25);
    Matrix a(rows, cols);
    switch (dist) {
        case EntryDist::Gaussian:
            for (int j = 0; j < cols; ++j)
                for (int i = 0; i < rows; ++i) a(i, j) = target * rng.complex_gaussian();
            break;
        case EntryDist::Uniform: {
            double half = target * std::sqrt(1.5); // component variance matched
            for (int j = 0; j < cols; ++j)
                for (int i = 0; i < rows; ++i)
                    a(i, j) = Cx(half * (2.0 * rng.uniform() - 1.0),
                                 half * (2.0 * rng.uniform() - 1.0));
            break;
        }
        case EntryDist::Phase:
            for (int j = 0; j < cols; ++j)
                for (int i = 0; i < rows; ++i)
                    a(i, j) = std::polar(target, 2.0 * std::numbers::pi * rng.uniform());
            break;
    }
    return a;
}

std::vector<int> scaled_dimensions(const ValidatedModel& model, int n_outer) {
    std::vector<int> dims;
    dims.reserve(model.spec().dimension_chain.size());
    for (const auto& r : model.spec().dimension_chain) {
        long long num = r.numerator() * n_outer;
        if (num % r.denominator() != 0)
            fail(Errc::non_integer_dimension,
                 "chain ratio " + std::to_string(r.numerator()) + "/" +
                     std::to_string(r.denominator()) + " does not divide N = " +
                     std::to_string(n_outer));
        dims.push_back(static_cast<int>(num / r.denominator()));
    }
    return dims;
}

Matrix realize_model(const ValidatedModel& model, int n_outer, Rng& rng, EntryDist dist) {
    auto dims = scaled_dimensions(model, n_outer);
    Matrix x;
    for (std::size_t i = 0; i < model.n_factors(); ++i) {
        Matrix f;
        if (const auto* c = std::get_if<CueSumFactor>(&model.factors()[i])) {
            int n = dims[i];
            f = Matrix::Zero(n, n);
            for (Cx w : c->weights) f += w * sample_cue(n, rng);
        } else {
            const auto& g = std::get<GinibreFactor>(model.factors()[i]);
            f = sample_ginibre(dims[i], dims[i + 1], g.sigma, rng, dist);
        }
        x = (i == 0) ? std::move(f) : Matrix(x * f);
    }
    return x;
}

int structural_zero_count(const ValidatedModel& model, int n_outer, SpectrumKind kind) {
    auto dims = scaled_dimensions(model, n_outer);
    int narrowest = *std::min_element(dims.begin(), dims.end());
    int outer = (kind == SpectrumKind::Eigenvalue) ? dims.front() : dims.back();
    return std::max(0, outer - narrowest);
}

SpectrumSample eigenvalues(const Matrix& x, int structural_zeros) {
    if (x.rows() != x.cols())
        fail(Errc::dimension_mismatch, "eigenvalues need a square matrix");
    int n = static_cast<int>(x.rows());
    Matrix work = x;
    SpectrumSample s;
    s.kind = SpectrumKind::Eigenvalue;
    s.n_outer = n;
    s.zero_count = structural_zeros;
    s.eigen.resize(n);
    int info = LAPACKE_zgeev(LAPACK_COL_MAJOR, 'N', 'N', n, lpk(work.data()), n,
                             lpk(s.eigen.data()), nullptr, 1, nullptr, 1);
    if (info != 0) {
        std::uint64_t h = 1469598103934665603ull;
        const auto* bytes = reinterpret_cast<const unsigned char*>(x.data());
        for (std::size_t i = 0; i < sizeof(Cx) * n * n; ++i) {
            h ^= bytes[i];
            h *= 1099511628211ull;
        }
        fail(Errc::eigen_solver_failure,
             "zgeev did not converge (matrix hash " + std::to_string(h) + ")");
    }
    return s;
}

SpectrumSample singular_spectrum(const Matrix& x, int structural_zeros) {
    int n = static_cast<int>(x.cols());
    Matrix h = x.adjoint() * x;
    std::vector<double> ev(n);
    int info = LAPACKE_zheevd(LAPACK_COL_MAJOR, 'N', 'L', n, lpk(h.data()), n, ev.data());
    if (info != 0) fail(Errc::eigen_solver_failure, "zheevd did not converge");
    SpectrumSample s;
    s.kind = SpectrumKind::Singular;
    s.n_outer = n;
    s.zero_count = structural_zeros;
    s.mu.resize(n);
    for (int i = 0; i < n; ++i) s.mu[i] = std::max(ev[i], 0.0);
    std::sort(s.mu.begin(), s.mu.end());
    return s;
}

namespace {

EmpiricalCurve histogram_impl(std::span<const SpectrumSample> samples, int bins,
                              double lo, double hi, bool radial) {
    if (samples.empty()) fail(Errc::usage_error, "histogram needs at least one sample");
    if (bins < 1) fail(Errc::usage_error, "histogram needs at least one bin");

    // Structural zeros are excluded from the bins by dropping the zero_count
    // smallest magnitudes of each sample (they are exact zeros up to + noise);
    // genuinely small nonzero values stay.
    std::vector<double> vals;
    std::size_t total = 0, zeros = 0;
    for (const auto& s : samples) {
        std::vector<double> v;
        if (radial) {
            v.reserve(s.eigen.size());
            for (Cx z : s.eigen) v.push_back(std::abs(z));
        } else {
            v = s.mu;
        }
        std::sort(v.begin(), v.end());
        total += v.size();
        zeros += static_cast<std::size_t>(s.zero_count);
        vals.insert(vals.end(), v.begin() + s.zero_count, v.end());
    }
    double vmax = vals.empty() ? 0.0 : *std::max_element(vals.begin(), vals.end());
    if (hi <= lo) {
        lo = 0.0;
        hi = (vmax > 0.0) ? vmax * 1.0000001 : 1.0;
    } else if (vmax > hi) {
        // widen by whole bins so every value lands in a bin and the
        // mass bookkeeping identity stays exact
        double width = (hi - lo) / bins;
        int extra = static_cast<int>(std::ceil((vmax - hi) / width + 1e-9));
        bins += extra;
        hi += extra * width;
    }

    EmpiricalCurve curve;
    curve.total_values = total;
    curve.alpha_hat = static_cast<double>(zeros) / static_cast<double>(total);
    curve.bin_edges.resize(bins + 1);
    for (int b = 0; b <= bins; ++b)
        curve.bin_edges[b] = lo + (hi - lo) * b / bins;

    std::vector<std::size_t> counts(bins, 0);
    for (double v : vals) {
        if (v < lo || v > hi) continue;
        int b = std::min(bins - 1, static_cast<int>((v - lo) / (hi - lo) * bins));
        ++counts[b];
    }
    curve.density.resize(bins);
    curve.stderr_.resize(bins);
    double width = (hi - lo) / bins;
    double n = static_cast<double>(total);
    for (int b = 0; b < bins; ++b) {
        double p = static_cast<double>(counts[b]) / n;
        curve.density[b] = p / width;
        curve.stderr_[b] = std::sqrt(std::max(p * (1.0 - p), 0.0) / n) / width;
    }
    return curve;
}

} // namespace

EmpiricalCurve radial_histogram(std::span<const SpectrumSample> samples, int bins,
                                double lo, double hi) {
    return histogram_impl(samples, bins, lo, hi, true);
}

EmpiricalCurve value_histogram(std::span<const SpectrumSample> samples, int bins,
                               double lo, double hi) {
    return histogram_impl(samples, bins, lo, hi, false);
}

double von_neumann_entropy(const SpectrumSample& sample) {
    if (sample.kind != SpectrumKind::Singular)
        fail(Errc::usage_error, "entropy needs a singular spectrum");
    double total = 0.0;
    for (double mu : sample.mu) total += mu;
    if (!(total > 0.0))
        fail(Errc::degenerate_state, "all singular values vanish");
    double s = 0.0;
    for (double mu : sample.mu) {
        if (mu <= 0.0) continue;
        double p = mu / total;
        s -= p * std::log(p);
    }
    return s;
}

EnsembleResult run_ensemble(const ValidatedModel& model, int n_outer, int samples,
                            std::uint64_t seed, int workers, EntryDist dist,
                            bool want_eigen, bool want_singular) {
    if (samples < 1) fail(Errc::usage_error, "need at least one sample");
    (void)kBlasPinned;
    if (want_eigen && !model.eigenvalue_capable())
        fail(Errc::not_applicable, "eigenvalue sampling needs a square chain");
    scaled_dimensions(model, n_outer); // validate divisibility up front

    int zc_eigen = want_eigen ? structural_zero_count(model, n_outer, SpectrumKind::Eigenvalue) : 0;
    int zc_sing = structural_zero_count(model, n_outer, SpectrumKind::Singular);

    EnsembleResult result;
    if (want_eigen) result.eigen.resize(samples);
    if (want_singular) result.singular.resize(samples);

    if (workers <= 0) workers = static_cast<int>(std::thread::hardware_concurrency());
    workers = std::max(1, std::min(workers, samples));

    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    std::mutex err_mutex;
    std::exception_ptr first_error;

    auto body = [&]() {
        for (;;) {
            int k = next.fetch_add(1);
            if (k >= samples) return;
            try {
                Rng rng(RngStream{seed, static_cast<std::uint64_t>(k)});
                Matrix x = realize_model(model, n_outer, rng, dist);
                if (want_eigen) result.eigen[k] = eigenvalues(x, zc_eigen);
                if (want_singular) result.singular[k] = singular_spectrum(x, zc_sing);
            } catch (...) {
                std::scoped_lock lk(err_mutex);
                if (!first_error) first_error = std::current_exception();
                next.store(samples);
                return;
            }
        }
    };
    for (int w = 0; w < workers; ++w) pool.emplace_back(body);
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
    return result;
}

std::vector<MomentRow> moment_check(const ValidatedModel& model, int n_max, int samples,
                                    int n_outer, std::uint64_t seed, EntryDist dist) {
    auto theory = theory_moments(model, n_max);
    auto ens = run_ensemble(model, n_outer, samples, seed, 0, dist,
                            /*want_eigen=*/false, /*want_singular=*/true);

    std::vector<MomentRow> rows(n_max);
    for (int n = 1; n <= n_max; ++n) {
        // fixed-order reduction over sample indices keeps the result
        // independent of the worker count
        std::vector<double> per(samples, 0.0);
        for (int k = 0; k < samples; ++k) {
            const auto& mu = ens.singular[k].mu;
            double acc = 0.0;
            for (double m : mu) acc += std::pow(m, n);
            per[k] = acc / static_cast<double>(mu.size());
        }
        double mean = 0.0;
        for (double v : per) mean += v;
        mean /= samples;
        double var = 0.0;
        for (double v : per) var += (v - mean) * (v - mean);
        var = (samples > 1) ? var / (samples - 1) : 0.0;
        rows[n - 1] = {n, mean, std::sqrt(var / samples), theory[n - 1]};
    }
    return rows;
}

} // namespace prodspec
