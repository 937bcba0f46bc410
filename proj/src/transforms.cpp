#include "prodspec/transforms.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace prodspec {

namespace {

// ---- small complex jet for value+derivative accumulation --------------------

struct Jet {
    Cx v{};
    Cx d{};
};

Jet operator*(const Jet& a, const Jet& b) { return {a.v * b.v, a.v * b.d + a.d * b.v}; }
Jet operator/(const Jet& a, const Jet& b) {
    Cx inv = 1.0 / b.v;
    return {a.v * inv, (a.d - a.v * b.d * inv) * inv};
}
Jet operator+(const Jet& a, const Jet& b) { return {a.v + b.v, a.d + b.d}; }
Jet operator+(const Jet& a, double s) { return {a.v + s, a.d}; }
Jet jconst(Cx v) { return {v, 0.0}; }
Jet jvar(Cx v) { return {v, 1.0}; }

// ---- per-factor weight summaries --------------------------------------------

struct CueParams {
    int big_l = 0;
    double sum_w2 = 0.0;      // sum |w_l|^2
    double sum_w4 = 0.0;      // sum |w_l|^4
    bool equal = false;
    double qa = 0.0, qb = 0.0; // two-weight quadratic constants (|w1|+|w2|)^2, (|w1|-|w2|)^2
    std::vector<double> w2;    // |w_l|^2, general case
};

CueParams cue_params(const CueSumFactor& f) {
    CueParams p;
    p.big_l = static_cast<int>(f.weights.size());
    for (Cx w : f.weights) {
        double n = std::norm(w);
        p.sum_w2 += n;
        p.sum_w4 += n * n;
        p.w2.push_back(n);
    }
    p.equal = all_weights_equal_abs(f);
    if (p.big_l == 2) {
        double a1 = std::abs(f.weights[0]), a2 = std::abs(f.weights[1]);
        p.qa = (a1 + a2) * (a1 + a2);
        p.qb = (a1 - a2) * (a1 - a2);
    }
    return p;
}

// ---- equal-weight CUE sum ----------------------------------------------------

// N_S(y) = W2 (y+1)/(y/L+1) with W2 the summed squared weights. L = 1 reduces
// to the constant W2.
Cx eq_value(double w2sum, int big_l, Cx y) {
    if (big_l == 1) return w2sum;
    Cx den = y / static_cast<double>(big_l) + 1.0;
    if (std::abs(den) < kPoleGuard)
        fail(Errc::pole_hit, "equal-weight transform pole at m = -L");
    return w2sum * (y + 1.0) / den;
}

Cx eq_derivative(double w2sum, int big_l, Cx y) {
    if (big_l == 1) return 0.0;
    double el = static_cast<double>(big_l);
    Cx den = y / el + 1.0;
    return w2sum * (1.0 - 1.0 / el) / (den * den);
}

// ---- two-weight CUE sum ------------------------------------------------------

// The transform solves (y+2) n^2 - (y+1)(A+B) n + y A B = 0. The discriminant
// in the cancellation-free grouping:
Cx tw_disc(double A, double B, Cx y) {
    double dAB = A - B;
    double sAB = A + B;
    return dAB * dAB * y * (y + 2.0) + sAB * sAB;
}

void tw_roots(double A, double B, Cx y, Cx& r1, Cx& r2) {
    Cx ysh = y + 2.0;
    if (std::abs(ysh) < kPoleGuard) {
        // quadratic degenerates to linear
        r1 = r2 = y * A * B / ((y + 1.0) * (A + B));
        return;
    }
    Cx s = std::sqrt(tw_disc(A, B, y));
    Cx lin = (y + 1.0) * (A + B);
    // pick the addition that avoids cancellation, recover the mate by the
    // root product y A B / (y+2)
    Cx qbig = (std::abs(lin + s) >= std::abs(lin - s)) ? (lin + s) : (lin - s);
    if (std::abs(qbig) == 0.0) {
        r1 = r2 = 0.0;
        return;
    }
    r1 = qbig / (2.0 * ysh);
    r2 = (y * A * B / ysh) / r1; // product of roots = yAB/(y+2)
}

Cx tw_pick(double A, double B, Cx y, Cx prev) {
    Cx r1, r2;
    tw_roots(A, B, y, r1, r2);
    double d1 = std::abs(r1 - prev), d2 = std::abs(r2 - prev);
    if (std::abs(r1 - r2) > 1e-12 * (1.0 + std::abs(prev)) &&
        std::abs(d1 - d2) < 1e-15 * (1.0 + d1 + d2))
        fail(Errc::branch_loss, "two-weight branch continuation is ambiguous");
    return d1 <= d2 ? r1 : r2;
}

// Continuation from the trivial anchor n(0) = A1 = |w1|^2+|w2|^2 along the
// straight segment to y. The ramp is exponential so the near-zero region,
// where the roots rearrange, is resolved even for very large |y|.
Cx tw_continue_from_zero(double A, double B, Cx y) {
    Cx prev = (A + B) / 2.0;
    const int steps = 48;
    double k = std::max(1.0, std::log(std::max(std::abs(y), 1.0)) + 2.0);
    double denom = std::expm1(k);
    for (int i = 1; i <= steps; ++i) {
        double tau = static_cast<double>(i) / steps;
        Cx yk = y * (std::expm1(k * tau) / denom);
        prev = tw_pick(A, B, yk, prev);
    }
    return prev;
}

// dn/dy from the quadratic by implicit differentiation.
Cx tw_derivative(double A, double B, Cx y, Cx n) {
    Cx dFdn = 2.0 * (y + 2.0) * n - (y + 1.0) * (A + B);
    Cx dFdy = n * n - (A + B) * n + A * B;
    return -dFdy / dFdn;
}

// On the real eigenvalue segment both roots are real and of opposite sign;
// the physical branch is the positive one.
double tw_real(double A, double B, double y) {
    double disc = (A - B) * (A - B) * y * (y + 2.0) + (A + B) * (A + B);
    double s = std::sqrt(std::max(disc, 0.0));
    return ((y + 1.0) * (A + B) + s) / (2.0 * (y + 2.0));
}

// ---- general CUE sum (full auxiliary system) ----------------------------------

// Root of M^2 + M + cw = 0 continued from `prev`. The mate is recovered from
// the product to avoid cancellation.
Cx s_root_near(Cx prev, Cx cw) {
    Cx s = std::sqrt(1.0 - 4.0 * cw);
    Cx rs = (-1.0 - s) / 2.0; // |.| >= 1/2, stable
    Cx ro = (std::abs(rs) > 0) ? cw / rs : (-1.0 + s) / 2.0;
    return (std::abs(rs - prev) <= std::abs(ro - prev)) ? rs : ro;
}

struct SState {
    Cx c{0.0};
    std::vector<Cx> m;
    Cx arg{0.0};
};

SState s_trivial(std::size_t L) {
    SState st;
    st.m.assign(L, Cx(0.0));
    return st;
}

// Advance the system state along the straight segment from st.arg to target.
void s_continue(const std::vector<double>& w2, SState& st, Cx target) {
    Cx from = st.arg;
    double pos = 0.0, step = 1.0;
    while (pos < 1.0) {
        double trial = std::min(1.0, pos + step);
        Cx y = from + (target - from) * trial;
        SState cand = st;
        bool ok = true;
        for (int it = 0;; ++it) {
            Cx f = -y;
            Cx fp = 0.0;
            for (std::size_t l = 0; l < w2.size(); ++l) {
                cand.m[l] = s_root_near(cand.m[l], cand.c * w2[l]);
                f += cand.m[l];
                Cx den = 2.0 * cand.m[l] + 1.0;
                if (std::abs(den) < 1e-14) { ok = false; break; }
                fp += -w2[l] / den;
            }
            if (!ok) break;
            if (std::abs(f) < 1e-13 * (1.0 + std::abs(y))) break;
            if (it >= 40 || std::abs(fp) < 1e-300) { ok = false; break; }
            cand.c -= f / fp;
        }
        if (ok) {
            cand.arg = y;
            st = cand;
            pos = trial;
            step = std::min(1.0, step * 2.0);
        } else {
            step *= 0.5;
            if (step < 1e-10)
                fail(Errc::continuation_stall, "CUE-sum system continuation stalled");
        }
    }
}

Cx s_value_from_state(const SState& st, Cx y, double sum_w2, double sum_w4) {
    // N = -y(y+1)/C, with the trivial-anchor Pade form near y = 0 where the
    // ratio degenerates to 0/0.
    if (std::abs(st.c) < 1e-9)
        return sum_w2 * (y + 1.0) / (1.0 + (sum_w4 / (sum_w2 * sum_w2)) * y);
    return -y * (y + 1.0) / st.c;
}

// Real-segment evaluation, m in [-1, 0]. All auxiliary unknowns are real here;
// the branch structure is resolved exactly by parameterizing the path with the
// largest-weight unknown t (the only one that can cross its fold).
struct SRealResult {
    double value;
    double t;
    double c;
    std::vector<double> m_l;
};

SRealResult s_real_eval(const std::vector<double>& w2, double m) {
    SRealResult res;
    const std::size_t L = w2.size();
    double wmax = *std::max_element(w2.begin(), w2.end());
    std::vector<bool> in_group(L);
    double sum_w2 = 0.0, sum_w4 = 0.0, others = 0.0;
    for (std::size_t l = 0; l < L; ++l) {
        in_group[l] = (w2[l] >= wmax * (1.0 - 1e-12));
        sum_w2 += w2[l];
        sum_w4 += w2[l] * w2[l];
        if (!in_group[l]) others += w2[l];
    }

    auto aux = [&](double t, std::vector<double>* ml) -> double {
        double tt = t * (t + 1.0);
        double sum = 0.0;
        for (std::size_t l = 0; l < L; ++l) {
            double v;
            if (in_group[l]) {
                v = t;
            } else {
                double disc = 1.0 + 4.0 * tt * (w2[l] / wmax);
                v = (-1.0 + std::sqrt(std::max(disc, 0.0))) / 2.0;
            }
            if (ml) (*ml)[l] = v;
            sum += v;
        }
        return sum;
    };

    if (std::abs(m) < 1e-6) {
        // Pade form of the trivial-anchor expansion; exact for equal weights
        res.value = sum_w2 * (m + 1.0) / (1.0 + (sum_w4 / (sum_w2 * sum_w2)) * m);
        res.t = m / static_cast<double>(L);
        res.c = -res.t * (res.t + 1.0) / wmax;
        res.m_l.assign(L, res.t);
        aux(res.t, &res.m_l);
        return res;
    }

    // March t downward from 0 and take the first crossing of the target: that
    // is the branch continued from the trivial anchor.
    const int grid = 2048;
    double t_hi = 0.0, g_hi = -m;
    double t_lo = 0.0;
    bool bracketed = false;
    for (int k = 1; k <= grid; ++k) {
        double t = -static_cast<double>(k) / grid;
        double g = aux(t, nullptr) - m;
        if (g <= 0.0) {
            t_lo = t;
            bracketed = true;
            break;
        }
        t_hi = t;
        g_hi = g;
    }
    (void)g_hi;
    if (!bracketed) {
        if (m <= -1.0 + 1e-12) {
            // annulus endpoint: the dominant weight reaches -1 with C -> 0
            res.value = wmax - others;
            res.t = -1.0;
            res.c = 0.0;
            res.m_l.assign(L, 0.0);
            for (std::size_t l = 0; l < L; ++l) res.m_l[l] = in_group[l] ? -1.0 : 0.0;
            return res;
        }
        fail(Errc::no_real_root, "CUE-sum system: target argument not reachable");
    }
    for (int it = 0; it < 200; ++it) {
        double t = 0.5 * (t_lo + t_hi);
        double g = aux(t, nullptr) - m;
        if (g <= 0.0) t_lo = t; else t_hi = t;
        if (t_hi - t_lo < 1e-16) break;
    }
    double t = 0.5 * (t_lo + t_hi);
    res.t = t;
    res.c = -t * (t + 1.0) / wmax;
    res.m_l.assign(L, 0.0);
    aux(t, &res.m_l);
    if (std::abs(t * (t + 1.0)) < 1e-13) {
        // crossing sits on the annulus endpoint itself
        res.value = std::max(wmax - others, 0.0);
        return res;
    }
    res.value = m * (m + 1.0) * wmax / (t * (t + 1.0));
    return res;
}

// Derivative of the general transform on the real segment. Implicit formula
// away from the endpoints, central differences next to them.
double s_real_derivative(const std::vector<double>& w2, double m, const SRealResult& at) {
    if (std::abs(m) > 1e-4 && std::abs(m + 1.0) > 1e-4 && std::abs(at.c) > 1e-12) {
        double dm_dc = 0.0;
        for (std::size_t l = 0; l < w2.size(); ++l)
            dm_dc += -w2[l] / (2.0 * at.m_l[l] + 1.0);
        double dc_dm = 1.0 / dm_dc;
        double c = at.c;
        return (-(2.0 * m + 1.0) * c + m * (m + 1.0) * dc_dm) / (c * c);
    }
    double h = 1e-6;
    double lo = std::max(-1.0, m - h), hi = std::min(0.0, m + h);
    return (s_real_eval(w2, hi).value - s_real_eval(w2, lo).value) / (hi - lo);
}

} // namespace

// ---- public single-factor operations ----------------------------------------

Cx n_cue_equal_weights(Cx m, int big_l, Cx w) {
    if (big_l < 1) fail(Errc::empty_model, "need at least one weight");
    return eq_value(std::norm(w), big_l, m);
}

Cx n_cue_two_weights(Cx m, Cx w1, Cx w2, const Cx* prev) {
    double a1 = std::abs(w1), a2 = std::abs(w2);
    double A = (a1 + a2) * (a1 + a2), B = (a1 - a2) * (a1 - a2);
    if (prev) return tw_pick(A, B, m, *prev);
    if (m.imag() == 0.0 && m.real() >= -1.0 && m.real() <= 0.0)
        return tw_real(A, B, m.real());
    return tw_continue_from_zero(A, B, m);
}

TransformValue n_cue_general(Cx m, std::span<const Cx> weights) {
    if (weights.empty()) fail(Errc::empty_model, "need at least one weight");
    std::vector<double> w2(weights.size());
    double sw2 = 0.0, sw4 = 0.0;
    for (std::size_t l = 0; l < weights.size(); ++l) {
        w2[l] = std::norm(weights[l]);
        sw2 += w2[l];
        sw4 += w2[l] * w2[l];
    }

    TransformValue out;
    out.argument = m;
    out.factor_states.emplace_back();
    SFactorState& fs = out.factor_states.back();

    if (m.imag() == 0.0 && m.real() >= -1.0 && m.real() <= 0.0) {
        SRealResult r = s_real_eval(w2, m.real());
        out.value = r.value;
        fs.c = r.c;
        fs.m_l.assign(r.m_l.begin(), r.m_l.end());
        return out;
    }

    SState st = s_trivial(weights.size());
    s_continue(w2, st, m);
    out.value = s_value_from_state(st, m, sw2, sw4);
    fs.c = st.c;
    fs.m_l = st.m;
    return out;
}

TransformValue n_cue_general_from(Cx m, std::span<const Cx> weights, const SFactorState& start) {
    std::vector<double> w2(weights.size());
    double sw2 = 0.0, sw4 = 0.0;
    for (std::size_t l = 0; l < weights.size(); ++l) {
        w2[l] = std::norm(weights[l]);
        sw2 += w2[l];
        sw4 += w2[l] * w2[l];
    }
    SState st;
    st.c = start.c;
    st.m = start.m_l;
    st.arg = 0.0;
    for (Cx v : start.m_l) st.arg += v;
    s_continue(w2, st, m);

    TransformValue out;
    out.argument = m;
    out.value = s_value_from_state(st, m, sw2, sw4);
    out.factor_states.emplace_back();
    out.factor_states.back().c = st.c;
    out.factor_states.back().m_l = st.m;
    return out;
}

Cx n_ginibre_chain(Cx m, std::span<const GinibreLink> chain) {
    if (chain.empty()) fail(Errc::empty_model, "need at least one link");
    if (std::abs(m) < kPoleGuard) fail(Errc::pole_hit, "ginibre chain pole at m = 0");
    double sigma2 = 1.0;
    for (const auto& l : chain) sigma2 *= l.sigma * l.sigma;
    Cx val = sigma2 * std::sqrt(chain.front().r) * (m + 1.0) / m;
    for (const auto& l : chain) val *= m / l.r + 1.0; // zeros of the relation, not poles
    return val;
}

// ---- composed transforms -------------------------------------------------------

EvalSession::EvalSession(const ValidatedModel& model)
    : model_(&model), states_(model.n_factors()) {}

double compose_eigen(const ValidatedModel& model, double m) {
    double acc = 1.0;
    for (std::size_t i = 0; i < model.n_factors(); ++i) {
        const auto& f = model.factors()[i];
        if (const auto* c = std::get_if<CueSumFactor>(&f)) {
            CueParams p = cue_params(*c);
            double y = m / model.row_ratio(i);
            if (p.equal || p.big_l == 1)
                acc *= eq_value(p.sum_w2, p.big_l, y).real();
            else if (p.big_l == 2)
                acc *= tw_real(p.qa, p.qb, y);
            else
                acc *= s_real_eval(p.w2, y).value;
        } else {
            const auto& g = std::get<GinibreFactor>(f);
            double a = model.row_ratio(i), b = model.col_ratio(i);
            acc *= g.sigma * g.sigma * std::sqrt(b / a) * (m / b + 1.0);
        }
    }
    return acc;
}

double compose_eigen_dm(const ValidatedModel& model, double m) {
    // product rule with prefix/suffix products; robust where a factor vanishes
    const std::size_t n = model.n_factors();
    std::vector<double> val(n), der(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& f = model.factors()[i];
        double a = model.row_ratio(i);
        if (const auto* c = std::get_if<CueSumFactor>(&f)) {
            CueParams p = cue_params(*c);
            double y = m / a;
            if (p.equal || p.big_l == 1) {
                val[i] = eq_value(p.sum_w2, p.big_l, y).real();
                der[i] = eq_derivative(p.sum_w2, p.big_l, y).real() / a;
            } else if (p.big_l == 2) {
                val[i] = tw_real(p.qa, p.qb, y);
                der[i] = tw_derivative(p.qa, p.qb, y, val[i]).real() / a;
            } else {
                SRealResult r = s_real_eval(p.w2, y);
                val[i] = r.value;
                der[i] = s_real_derivative(p.w2, y, r) / a;
            }
        } else {
            const auto& g = std::get<GinibreFactor>(f);
            double b = model.col_ratio(i);
            double pre = g.sigma * g.sigma * std::sqrt(b / a);
            val[i] = pre * (m / b + 1.0);
            der[i] = pre / b;
        }
    }
    std::vector<double> pre(n + 1, 1.0), suf(n + 1, 1.0);
    for (std::size_t i = 0; i < n; ++i) pre[i + 1] = pre[i] * val[i];
    for (std::size_t i = n; i-- > 0;) suf[i] = suf[i + 1] * val[i];
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) total += pre[i] * der[i] * suf[i + 1];
    return total;
}

namespace {

// Complex evaluation of one factor's rotationally-symmetric transform at the
// scaled argument, with branch state from the session.
Jet cue_factor_jet(const CueSumFactor& c, Cx y, EvalSession::FactorState& st) {
    CueParams p = cue_params(c);
    if (p.equal || p.big_l == 1)
        return {eq_value(p.sum_w2, p.big_l, y), eq_derivative(p.sum_w2, p.big_l, y)};
    if (p.big_l == 2) {
        Cx n;
        if (!st.init) {
            n = tw_continue_from_zero(p.qa, p.qb, y);
        } else {
            n = tw_pick(p.qa, p.qb, y, st.prev_value);
        }
        st.init = true;
        st.prev_arg = y;
        st.prev_value = n;
        return {n, tw_derivative(p.qa, p.qb, y, n)};
    }
    TransformValue tv = st.init ? n_cue_general_from(y, c.weights, st.s_state)
                                : n_cue_general(y, c.weights);
    st.init = true;
    st.prev_arg = y;
    st.prev_value = tv.value;
    st.s_state = tv.factor_states.front();
    // implicit derivative through the auxiliary system
    Cx dm_dc = 0.0;
    for (std::size_t l = 0; l < p.w2.size(); ++l)
        dm_dc += -p.w2[l] / (2.0 * st.s_state.m_l[l] + 1.0);
    Cx cc = st.s_state.c;
    Cx der;
    if (std::abs(cc) > 1e-9 && std::abs(dm_dc) > 1e-300) {
        der = (-(2.0 * y + 1.0) * cc + y * (y + 1.0) / dm_dc) / (cc * cc);
    } else {
        // trivial-anchor region: differentiate the Pade form
        double ba = p.sum_w4 / (p.sum_w2 * p.sum_w2);
        Cx den = 1.0 + ba * y;
        der = p.sum_w2 * (den - (y + 1.0) * ba) / (den * den);
    }
    return {tv.value, der};
}

} // namespace

Cx compose_eigen_cx(const ValidatedModel& model, Cx m, EvalSession& session) {
    Cx acc = 1.0;
    for (std::size_t i = 0; i < model.n_factors(); ++i) {
        const auto& f = model.factors()[i];
        double a = model.row_ratio(i);
        if (const auto* c = std::get_if<CueSumFactor>(&f)) {
            Jet j = cue_factor_jet(*c, m / a, session.state(i));
            acc *= j.v;
        } else {
            const auto& g = std::get<GinibreFactor>(f);
            double b = model.col_ratio(i);
            acc *= g.sigma * g.sigma * std::sqrt(b / a) * (m / b + 1.0);
        }
    }
    return acc;
}

namespace {

Jet compose_singular_impl(const ValidatedModel& model, Cx M, EvalSession& session) {
    if (std::abs(M) < kPoleGuard)
        fail(Errc::pole_hit, "singular transform pole at M = 0");
    const std::size_t n = model.n_factors();
    Jet Mj = jvar(M);
    Jet acc = jconst(1.0);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& f = model.factors()[i];
        double a = model.row_ratio(i);
        double b = model.col_ratio(i);
        Cx y = M / b;
        if (std::abs(y) < kPoleGuard)
            fail(Errc::pole_hit, "singular transform pole at M = 0");
        Jet yj{y, 1.0 / b};
        if (const auto* c = std::get_if<CueSumFactor>(&f)) {
            Jet nv = cue_factor_jet(*c, y, session.state(i));
            nv.d /= b; // chain rule through the argument rescaling
            acc = acc * ((yj + 1.0) / yj) * nv;
        } else {
            const auto& g = std::get<GinibreFactor>(f);
            Jet lin{y * (b / a) + 1.0, (1.0 / a)};
            acc = acc * jconst(g.sigma * g.sigma * std::sqrt(a / b)) * ((yj + 1.0) / yj) * lin;
        }
        if (i >= 1) {
            double si = model.row_ratio(i);
            if (std::abs(M + si) < kPoleGuard)
                fail(Errc::pole_hit, "singular transform pole at M = -s_i");
            acc = acc * (Mj / (Mj + jconst(si)));
        }
    }
    return acc;
}

} // namespace

Cx compose_singular(const ValidatedModel& model, Cx m_arg, EvalSession& session) {
    return compose_singular_impl(model, m_arg, session).v;
}

ValueAndDerivative compose_singular_jet(const ValidatedModel& model, Cx m_arg,
                                        EvalSession& session) {
    Jet j = compose_singular_impl(model, m_arg, session);
    return {j.v, j.d};
}

std::vector<double> singular_psi_coefficients(const ValidatedModel& model, int n_coeffs) {
    // Psi(M) = M N(M) is analytic at M = 0; extract Taylor coefficients on a
    // small Cauchy circle well inside the nearest pole/branch point.
    double min_s = to_double(model.min_chain_ratio());
    double radius = 0.005 * std::min(1.0, min_s);
    const int P = 64;
    std::vector<Cx> psi(P);
    for (int j = 0; j < P; ++j) {
        double th = 2.0 * std::numbers::pi * j / P;
        Cx M = std::polar(radius, th);
        EvalSession session(model);
        psi[j] = M * compose_singular(model, M, session);
    }
    std::vector<double> coeffs(n_coeffs, 0.0);
    for (int k = 0; k < n_coeffs; ++k) {
        Cx sum = 0.0;
        for (int j = 0; j < P; ++j) {
            double th = 2.0 * std::numbers::pi * j / P;
            sum += psi[j] * std::polar(1.0, -th * k);
        }
        coeffs[k] = (sum / static_cast<double>(P)).real() / std::pow(radius, k);
    }
    return coeffs;
}

} // namespace prodspec
