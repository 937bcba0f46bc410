#pragma once

#include <complex>
#include <span>
#include <vector>

#include "prodspec/model.hpp"

namespace prodspec {

// Auxiliary unknowns of the weighted-CUE-sum master system at one argument:
// each M_l solves M_l (M_l + 1) = -C |w_l|^2 and the M_l sum to the outer
// argument. On the eigenvalue-side real segment C >= 0 and M_l in [-1, 0].
struct SFactorState {
    Cx c{0.0, 0.0};
    std::vector<Cx> m_l;
};

struct TransformValue {
    Cx value{};
    Cx argument{};
    std::vector<SFactorState> factor_states;
};

// Distance below which an evaluation counts as sitting on a pole. Poles are
// reported, never folded into infinities, so downstream solvers can tell them
// from overflow.
inline constexpr double kPoleGuard = 1e-9;

// ---- single-factor transforms ----------------------------------------------

// Weighted CUE sum with L equal weights w/sqrt(L): N_S(m) = |w|^2 (m+1)/(m/L+1).
// L = 1 is the constant |w|^2 (the (m+1) factors cancel).
Cx n_cue_equal_weights(Cx m, int big_l, Cx w);

// Weighted CUE sum of two arbitrary weights. The value solves a quadratic;
// the branch is the one continuously connected to |w1|^2+|w2|^2 at m = 0.
// `prev` (when given) supplies the branch state of an ongoing continuation.
Cx n_cue_two_weights(Cx m, Cx w1, Cx w2, const Cx* prev = nullptr);

// Weighted CUE sum of arbitrary length: solves the full auxiliary system by
// continuation from the trivial point (m = 0, C = 0, all M_l = 0).
TransformValue n_cue_general(Cx m, std::span<const Cx> weights);

// Same, but resuming from a caller-held state (used while marching a curve).
TransformValue n_cue_general_from(Cx m, std::span<const Cx> weights, const SFactorState& start);

// Rectangular Ginibre chain, singular-value side:
// N(m) = sigma^2 sqrt(r_1) (m+1)/m prod_k (m/r_k + 1).
struct GinibreLink {
    double sigma;
    double r; // rows over final columns of the chain
};
Cx n_ginibre_chain(Cx m, std::span<const GinibreLink> chain);

// ---- composed model transforms ----------------------------------------------

// Branch bookkeeping for one marching curve. States are advanced on every
// successful evaluation; distinct curves must use distinct sessions.
class EvalSession {
public:
    explicit EvalSession(const ValidatedModel& model);

    struct FactorState {
        bool init = false;
        Cx prev_arg{};
        Cx prev_value{};      // two-weight branch anchor
        SFactorState s_state; // general-CUE continuation state
    };

    FactorState& state(std::size_t i) { return states_[i]; }
    const ValidatedModel& model() const { return *model_; }

private:
    const ValidatedModel* model_;
    std::vector<FactorState> states_;
};

// Rotationally-symmetric N-transform of the whole (square) chain at a real
// argument on the eigenvalue segment [alpha-1, 0]. Real arithmetic throughout;
// each factor contributes its scaled-argument transform.
double compose_eigen(const ValidatedModel& model, double m);
double compose_eigen_dm(const ValidatedModel& model, double m);

// Complex-argument variant (used by the conjecture self-check).
Cx compose_eigen_cx(const ValidatedModel& model, Cx m, EvalSession& session);

// Holomorphic N-transform of X^dagger X at complex M, including the (M+1)/M
// prefactor carried by the last factor and the s_i-rescaled arguments of the
// cyclic-shift multiplication law.
Cx compose_singular(const ValidatedModel& model, Cx m_arg, EvalSession& session);

struct ValueAndDerivative {
    Cx value;
    Cx derivative;
};
ValueAndDerivative compose_singular_jet(const ValidatedModel& model, Cx m_arg,
                                        EvalSession& session);

// Taylor coefficients psi_0..psi_{n} of Psi(M) = M * N_{X^dagger X}(M) about
// M = 0, extracted by a Cauchy circle. Feeds the moment series inversion.
std::vector<double> singular_psi_coefficients(const ValidatedModel& model, int n_coeffs);

} // namespace prodspec
