#pragma once

#include <complex>
#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <boost/rational.hpp>

#include "prodspec/errors.hpp"

namespace prodspec {

using Cx = std::complex<double>;
using Rational = boost::rational<long long>;

inline double to_double(const Rational& r) {
    return static_cast<double>(r.numerator()) / static_cast<double>(r.denominator());
}

// One weighted sum of independent Haar unitaries, w_1 U_1 + ... + w_L U_L.
// Always square; its side inherits the dimension of the chain position it
// occupies.
struct CueSumFactor {
    std::vector<Cx> weights;
};

// One rectangular Gaussian block. rows/cols are exact ratios relative to the
// outer (final column) dimension of the whole chain. Entry real and imaginary
// parts are centered Gaussians of variance sigma^2 / (2 sqrt(rows_abs * cols_abs)).
struct GinibreFactor {
    double sigma = 1.0;
    Rational rows{1};
    Rational cols{1};
};

using EnsembleFactor = std::variant<CueSumFactor, GinibreFactor>;

// Declarative description of a product chain, factors in product order.
// dimension_chain has factors.size()+1 entries: entry i is the row dimension
// of factor i (equivalently the column dimension of factor i-1) divided by the
// final column dimension. dimension_chain.back() == 1 by construction.
struct ModelSpec {
    std::vector<EnsembleFactor> factors;
    std::vector<Rational> dimension_chain;
};

enum class ModelTag { S, P, T, W, V, GeneralChain };
enum class CueForm { EqualWeights, TwoWeights, GeneralWeights };

const char* tag_name(ModelTag t);
const char* form_name(CueForm f);

struct ModelClass {
    ModelTag tag = ModelTag::GeneralChain;
    std::vector<CueForm> cue_forms; // one per CUE-sum factor in order
};

enum class SpectrumKind { Eigenvalue, Singular };

// A ModelSpec that passed validation, with the structural quantities every
// downstream module needs precomputed.
class ValidatedModel {
public:
    const ModelSpec& spec() const { return spec_; }
    const std::vector<EnsembleFactor>& factors() const { return spec_.factors; }

    // s_i of the factor chain: row ratio of factor i relative to the final
    // column dimension (exact). chain(n_factors()) == 1.
    const Rational& chain(std::size_t i) const { return spec_.dimension_chain[i]; }
    std::size_t n_factors() const { return spec_.factors.size(); }

    double row_ratio(std::size_t i) const { return to_double(chain(i)); }
    double col_ratio(std::size_t i) const { return to_double(chain(i + 1)); }

    bool eigenvalue_capable() const { return chain(0) == Rational(1); }

    // Fraction of exact zero eigenvalues forced by the narrowest chain
    // bottleneck; 0 when the chain never dips below the outer dimension.
    double zero_mode_fraction() const;
    Rational zero_mode_fraction_exact() const;

    // Narrowest ratio in the chain, min_i s_i (<= 1 for square chains).
    Rational min_chain_ratio() const;

    const ModelClass& classification() const { return classification_; }

    // FNV-1a over the canonical serialization; stable across runs.
    std::uint64_t hash() const;
    std::string canonical_text() const;

    friend ValidatedModel validate(const ModelSpec& spec);

private:
    ModelSpec spec_;
    ModelClass classification_;
};

// Checks invariants (chain closure, positive scales, usable weights) and
// classifies the model. Throws Error with the appropriate code on violation.
ValidatedModel validate(const ModelSpec& spec);

// Convenience builder: derives the dimension chain from per-factor declared
// dimensions given in units of a reference outer size. CUE factors inherit the
// dimension of their position; adjacent factors must agree
// (Errc::dimension_mismatch otherwise).
struct FactorDims {
    EnsembleFactor factor;
    // declared integer dimensions for Ginibre factors, 0 = inherit (CUE)
    long long rows = 0;
    long long cols = 0;
};
ModelSpec make_chain(const std::vector<FactorDims>& factors);

ModelClass classify(const ModelSpec& spec);

// Number d governing the power-law divergence of the level densities at zero:
// rho_rad ~ R^-(d-2)/d and rho_sing ~ x^-d/(d+1). Counts the factors of the
// composed N-transform vanishing at the inner endpoint of the master relation.
// Returns nullopt when a general-weight CUE sum sits at the inner endpoint
// (uncovered case, the module abstains). Throws Errc::not_applicable when the
// spectral domain does not touch zero (annulus).
std::optional<int> divergence_exponent(const ValidatedModel& model, SpectrumKind kind);

// Weight-multiset predicates used by classification and the divergence count.
bool all_weights_equal_abs(const CueSumFactor& f);

} // namespace prodspec
