#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "prodspec/model.hpp"

namespace prodspec {

using Matrix = Eigen::MatrixXcd;

// Deterministic stream: (seed, stream_id, draw sequence) pins every matrix
// bit-for-bit. Substreams are derived by SplitMix64 mixing, the core is
// xoshiro256++, and Gaussians come from an explicit Box-Muller, so no library
// distribution can change the draw sequence underneath us.
struct RngStream {
    std::uint64_t seed = 0;
    std::uint64_t stream_id = 0;
};

std::uint64_t splitmix64(std::uint64_t x);

class Rng {
public:
    explicit Rng(RngStream stream);

    std::uint64_t next_u64();
    double uniform();  // [0, 1)
    double gaussian(); // standard normal
    Cx complex_gaussian(); // total variance 1 (1/2 per component)

private:
    std::uint64_t state_[4];
    double cached_ = 0.0;
    bool has_cached_ = false;
};

enum class EntryDist { Gaussian, Uniform, Phase };
EntryDist parse_entry_dist(const std::string& s);
const char* entry_dist_name(EntryDist d);

// Haar-distributed unitary: QR of a complex Ginibre matrix with the triangular
// factor's diagonal phases divided out. Without the phase correction the
// result is *not* Haar (kept available as a negative control).
Matrix sample_cue(int n, Rng& rng);
Matrix sample_cue_uncorrected(int n, Rng& rng);

Matrix sample_ginibre(int rows, int cols, double sigma, Rng& rng,
                      EntryDist dist = EntryDist::Gaussian);

// Draw all factors independently and multiply them in order. The dimension
// chain scaled by n_outer must be integral (Errc::non_integer_dimension).
Matrix realize_model(const ValidatedModel& model, int n_outer, Rng& rng,
                     EntryDist dist = EntryDist::Gaussian);

std::vector<int> scaled_dimensions(const ValidatedModel& model, int n_outer);

// Rank bound from the narrowest chain bottleneck: count of exact structural
// zeros in the requested spectrum at size n_outer.
int structural_zero_count(const ValidatedModel& model, int n_outer, SpectrumKind kind);

struct SpectrumSample {
    SpectrumKind kind = SpectrumKind::Eigenvalue;
    std::vector<Cx> eigen;     // eigenvalue kind
    std::vector<double> mu;    // singular kind: eigenvalues of X^dagger X
    int n_outer = 0;
    int zero_count = 0;
};

SpectrumSample eigenvalues(const Matrix& x, int structural_zeros = 0);
SpectrumSample singular_spectrum(const Matrix& x, int structural_zeros = 0);

struct EmpiricalCurve {
    std::vector<double> bin_edges; // bins+1 ascending
    std::vector<double> density;   // normalized to total mass 1 - alpha_hat
    std::vector<double> stderr_;   // binomial per-bin standard error
    double alpha_hat = 0.0;
    std::size_t total_values = 0;  // including zero modes
};

// Histogram of |eigenvalue| with the structural zeros excluded from the bins
// and reported as alpha_hat. hi <= lo requests auto-ranging over the data.
EmpiricalCurve radial_histogram(std::span<const SpectrumSample> samples, int bins,
                                double lo = 0.0, double hi = 0.0);
EmpiricalCurve value_histogram(std::span<const SpectrumSample> samples, int bins,
                               double lo = 0.0, double hi = 0.0);

// Entropy of the normalized singular spectrum, in nats; zero modes contribute
// zero by the p log p convention.
double von_neumann_entropy(const SpectrumSample& sample);

struct MomentRow {
    int n = 0;
    double empirical = 0.0;
    double stderr_ = 0.0;
    double theory = 0.0;
};
std::vector<MomentRow> moment_check(const ValidatedModel& model, int n_max, int samples,
                                    int n_outer, std::uint64_t seed,
                                    EntryDist dist = EntryDist::Gaussian);

// Ensemble runner: per-sample substreams, pool of `workers` threads (0 = all
// cores). Results depend only on (seed, samples), never on the pool size.
struct EnsembleResult {
    std::vector<SpectrumSample> eigen;
    std::vector<SpectrumSample> singular;
};
EnsembleResult run_ensemble(const ValidatedModel& model, int n_outer, int samples,
                            std::uint64_t seed, int workers, EntryDist dist,
                            bool want_eigen, bool want_singular);

} // namespace prodspec
