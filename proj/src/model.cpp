#include "prodspec/model.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace prodspec {

namespace {

constexpr double kWeightEqualTol = 1e-12; // relative tolerance on |w|^2

bool finite_cx(Cx z) { return std::isfinite(z.real()) && std::isfinite(z.imag()); }

double max_abs2(const std::vector<Cx>& w) {
    double m = 0.0;
    for (Cx v : w) m = std::max(m, std::norm(v));
    return m;
}

} // namespace

const char* errc_name(Errc c) {
    switch (c) {
        case Errc::dimension_mismatch: return "DimensionMismatch";
        case Errc::empty_model: return "EmptyModel";
        case Errc::non_positive_scale: return "NonPositiveScale";
        case Errc::non_integer_dimension: return "NonIntegerDimension";
        case Errc::pole_hit: return "PoleHit";
        case Errc::branch_loss: return "BranchLoss";
        case Errc::branch_collision: return "BranchCollision";
        case Errc::continuation_stall: return "ContinuationStall";
        case Errc::no_real_root: return "NoRealRoot";
        case Errc::no_upper_branch: return "NoUpperBranch";
        case Errc::support_edge_ambiguity: return "SupportEdgeAmbiguity";
        case Errc::eigen_solver_failure: return "EigenSolverFailure";
        case Errc::degenerate_state: return "DegenerateState";
        case Errc::fit_diverged: return "FitDiverged";
        case Errc::insufficient_window: return "InsufficientWindow";
        case Errc::not_applicable: return "NotApplicable";
        case Errc::parse_error: return "ParseError";
        case Errc::usage_error: return "UsageError";
        case Errc::io_error: return "IoError";
    }
    return "Unknown";
}

const char* tag_name(ModelTag t) {
    switch (t) {
        case ModelTag::S: return "S";
        case ModelTag::P: return "P";
        case ModelTag::T: return "T";
        case ModelTag::W: return "W";
        case ModelTag::V: return "V";
        case ModelTag::GeneralChain: return "GeneralChain";
    }
    return "?";
}

const char* form_name(CueForm f) {
    switch (f) {
        case CueForm::EqualWeights: return "EqualWeights";
        case CueForm::TwoWeights: return "TwoWeights";
        case CueForm::GeneralWeights: return "GeneralWeights";
    }
    return "?";
}

bool all_weights_equal_abs(const CueSumFactor& f) {
    if (f.weights.empty()) return false;
    double ref = std::norm(f.weights.front());
    double scale = max_abs2(f.weights);
    for (Cx w : f.weights)
        if (std::abs(std::norm(w) - ref) > kWeightEqualTol * std::max(scale, 1.0))
            return false;
    return true;
}

ModelClass classify(const ModelSpec& spec) {
    ModelClass cls;
    bool any_cue = false, any_gin = false;
    for (const auto& f : spec.factors) {
        if (std::holds_alternative<CueSumFactor>(f)) {
            any_cue = true;
            const auto& c = std::get<CueSumFactor>(f);
            if (all_weights_equal_abs(c))
                cls.cue_forms.push_back(CueForm::EqualWeights);
            else if (c.weights.size() == 2)
                cls.cue_forms.push_back(CueForm::TwoWeights);
            else
                cls.cue_forms.push_back(CueForm::GeneralWeights);
        } else {
            any_gin = true;
        }
    }

    if (!any_gin) {
        cls.tag = (spec.factors.size() == 1) ? ModelTag::S : ModelTag::T;
        return cls;
    }
    if (!any_cue) {
        cls.tag = ModelTag::P;
        return cls;
    }

    // Count maximal [CUE block][Ginibre block] groups. A chain that is exactly
    // one such group is W, a concatenation of several is V, anything else
    // (Ginibre before the first CUE, trailing CUE block, ...) is general.
    std::size_t i = 0, blocks = 0;
    bool shaped = true;
    const std::size_t n = spec.factors.size();
    while (i < n) {
        std::size_t cue = 0, gin = 0;
        while (i < n && std::holds_alternative<CueSumFactor>(spec.factors[i])) { ++i; ++cue; }
        while (i < n && std::holds_alternative<GinibreFactor>(spec.factors[i])) { ++i; ++gin; }
        if (cue == 0 || gin == 0) { shaped = false; break; }
        ++blocks;
    }
    if (!shaped)
        cls.tag = ModelTag::GeneralChain;
    else
        cls.tag = (blocks == 1) ? ModelTag::W : ModelTag::V;
    return cls;
}

ModelSpec make_chain(const std::vector<FactorDims>& factors) {
    if (factors.empty()) fail(Errc::empty_model, "model has no factors");

    // Walk the chain once to pin every position's declared dimension.
    // 0 means "not yet known" (CUE factors inherit).
    std::vector<long long> dims(factors.size() + 1, 0);
    for (std::size_t i = 0; i < factors.size(); ++i) {
        const auto& fd = factors[i];
        if (std::holds_alternative<GinibreFactor>(fd.factor)) {
            if (fd.rows <= 0 || fd.cols <= 0)
                fail(Errc::non_positive_scale, "ginibre factor needs positive rows/cols");
            if (dims[i] != 0 && dims[i] != fd.rows)
                fail(Errc::dimension_mismatch,
                     "factor " + std::to_string(i) + ": rows " + std::to_string(fd.rows) +
                         " != preceding cols " + std::to_string(dims[i]));
            dims[i] = fd.rows;
            dims[i + 1] = fd.cols;
        }
    }
    // Propagate through CUE positions (square factors) in both directions.
    for (int pass = 0; pass < 2; ++pass) {
        for (std::size_t i = 0; i < factors.size(); ++i) {
            if (!std::holds_alternative<CueSumFactor>(factors[i].factor)) continue;
            long long d = std::max(dims[i], dims[i + 1]);
            if (dims[i] != 0 && dims[i + 1] != 0 && dims[i] != dims[i + 1])
                fail(Errc::dimension_mismatch,
                     "square factor " + std::to_string(i) + " spans " +
                         std::to_string(dims[i]) + "x" + std::to_string(dims[i + 1]));
            dims[i] = dims[i + 1] = d;
        }
    }
    for (auto& d : dims)
        if (d == 0) d = 1; // all-CUE model: any reference size works

    ModelSpec spec;
    const long long outer = dims.back();
    for (std::size_t i = 0; i < factors.size(); ++i) {
        EnsembleFactor f = factors[i].factor;
        if (auto* g = std::get_if<GinibreFactor>(&f)) {
            g->rows = Rational(dims[i], outer);
            g->cols = Rational(dims[i + 1], outer);
        }
        spec.factors.push_back(std::move(f));
    }
    spec.dimension_chain.reserve(dims.size());
    for (long long d : dims) spec.dimension_chain.emplace_back(d, outer);
    return spec;
}

ValidatedModel validate(const ModelSpec& spec) {
    if (spec.factors.empty()) fail(Errc::empty_model, "model has no factors");
    if (spec.dimension_chain.size() != spec.factors.size() + 1)
        fail(Errc::dimension_mismatch, "dimension chain length must be factors+1");
    if (spec.dimension_chain.back() != Rational(1))
        fail(Errc::dimension_mismatch, "chain must be normalized to the final column dimension");

    for (std::size_t i = 0; i < spec.factors.size(); ++i) {
        const Rational& a = spec.dimension_chain[i];
        const Rational& b = spec.dimension_chain[i + 1];
        if (a <= Rational(0) || b <= Rational(0))
            fail(Errc::non_positive_scale, "chain ratios must be positive");

        if (const auto* c = std::get_if<CueSumFactor>(&spec.factors[i])) {
            if (c->weights.empty())
                fail(Errc::empty_model, "cue_sum factor with no weights");
            bool any_nonzero = false;
            for (Cx w : c->weights) {
                if (!finite_cx(w)) fail(Errc::non_positive_scale, "non-finite weight");
                if (std::norm(w) > 0) any_nonzero = true;
            }
            if (!any_nonzero)
                fail(Errc::non_positive_scale, "cue_sum factor needs a nonzero weight");
            if (a != b)
                fail(Errc::dimension_mismatch,
                     "cue_sum factor " + std::to_string(i) + " must be square");
        } else {
            const auto& g = std::get<GinibreFactor>(spec.factors[i]);
            if (!(g.sigma > 0) || !std::isfinite(g.sigma))
                fail(Errc::non_positive_scale, "ginibre sigma must be positive");
            if (g.rows != a || g.cols != b)
                fail(Errc::dimension_mismatch,
                     "ginibre factor " + std::to_string(i) + " disagrees with the chain");
        }
    }

    ValidatedModel m;
    m.spec_ = spec;
    m.classification_ = classify(spec);
    return m;
}

Rational ValidatedModel::min_chain_ratio() const {
    Rational mn = spec_.dimension_chain.front();
    for (const auto& r : spec_.dimension_chain) mn = std::min(mn, r);
    return mn;
}

Rational ValidatedModel::zero_mode_fraction_exact() const {
    if (!eigenvalue_capable())
        fail(Errc::not_applicable, "zero-mode fraction needs a square chain (s_1 = 1)");
    return Rational(1) - min_chain_ratio();
}

double ValidatedModel::zero_mode_fraction() const {
    return to_double(zero_mode_fraction_exact());
}

std::string ValidatedModel::canonical_text() const {
    std::ostringstream os;
    os.precision(17);
    for (std::size_t i = 0; i < spec_.factors.size(); ++i) {
        os << spec_.dimension_chain[i] << "|";
        if (const auto* c = std::get_if<CueSumFactor>(&spec_.factors[i])) {
            os << "cue";
            for (Cx w : c->weights) os << "," << w.real() << "," << w.imag();
        } else {
            const auto& g = std::get<GinibreFactor>(spec_.factors[i]);
            os << "gin," << g.sigma << "," << g.rows << "," << g.cols;
        }
        os << ";";
    }
    os << spec_.dimension_chain.back();
    return os.str();
}

std::uint64_t ValidatedModel::hash() const {
    // FNV-1a, 64-bit
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : canonical_text()) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

std::optional<int> divergence_exponent(const ValidatedModel& model, SpectrumKind kind) {
    // Inner endpoint of the master relation in chain-ratio units:
    // q = 1 - alpha for eigenvalues; for singular spectra the bottleneck is
    // measured against the final column dimension.
    if (kind == SpectrumKind::Eigenvalue && !model.eigenvalue_capable())
        fail(Errc::not_applicable, "eigenvalue exponent needs a square chain");

    Rational mn = model.min_chain_ratio();
    Rational q = std::min(mn, Rational(1));
    if (kind == SpectrumKind::Singular && q < Rational(1)) {
        // Zero modes on the singular side put the inner endpoint short of -1
        // where the conjecture prefactor no longer vanishes; the covered
        // formulas do not apply.
        return std::nullopt;
    }

    int d = 0;
    bool uncovered = false;
    for (std::size_t i = 0; i < model.n_factors(); ++i) {
        const auto& f = model.factors()[i];
        if (const auto* c = std::get_if<CueSumFactor>(&f)) {
            if (model.chain(i) != q) continue;
            if (c->weights.size() == 1) continue; // single unitary, constant transform
            if (all_weights_equal_abs(*c)) {
                ++d;
            } else if (c->weights.size() == 2) {
                // unequal two-weight transform tends to ||w1|^2-|w2|^2| != 0
            } else {
                uncovered = true; // general weights sitting at the inner endpoint
            }
        } else {
            if (model.chain(i + 1) == q) ++d; // column-side factor of the chain law
        }
    }
    if (uncovered) return std::nullopt;
    // The column-side count equals the zero multiplicity of the eigenvalue
    // master relation at the inner endpoint. On the singular side the total
    // multiplicity is that count plus one when the chain opens at ratio q
    // (the (M+1)/M prefactor), and the density exponent is multiplicity-1.
    if (kind == SpectrumKind::Singular && model.chain(0) != q) d -= 1;
    if (d <= 0)
        fail(Errc::not_applicable, "spectral domain does not touch zero");
    return d;
}

} // namespace prodspec
