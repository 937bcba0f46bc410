#include "prodspec/fit.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "prodspec/stats.hpp"

namespace prodspec {

namespace {

constexpr double kInvSqrtPi = 0.564189583547756287; // 1/sqrt(pi)

double erf_series(double x) {
    // erf(x) = 2/sqrt(pi) sum (-1)^n x^(2n+1) / (n! (2n+1))
    double term = x, sum = x;
    double x2 = x * x;
    for (int n = 1; n < 200; ++n) {
        term *= -x2 / n;
        double add = term / (2 * n + 1);
        sum += add;
        if (std::abs(add) < 1e-18 * std::abs(sum)) break;
    }
    return 2.0 * kInvSqrtPi * sum;
}

} // namespace

double erfc_custom(double x) {
    if (x < 0.0) return 2.0 - erfc_custom(-x);
    if (x < 2.0) return 1.0 - erf_series(x);
    if (x > 27.0) return 0.0; // below double underflow of exp(-x^2)
    // erfc(x) = Q(1/2, x^2), the regularized upper incomplete gamma
    // (continued-fraction branch)
    return stats::gamma_q(0.5, x * x);
}

double erfc_form_factor(double r, int n_outer, double q_b, double r_b, int side) {
    double u = q_b * side * (r - r_b) * std::sqrt(static_cast<double>(n_outer));
    return 0.5 * erfc_custom(u);
}

EdgeProfile extract_edge_profile(const EmpiricalCurve& hist, const DensityCurve& theory,
                                 double r_b_estimate, int side, int n_outer,
                                 double half_width_sigmas) {
    EdgeProfile p;
    p.side = side;
    p.n_outer = n_outer;
    p.r_b_seed = r_b_estimate;

    double half = half_width_sigmas / std::sqrt(static_cast<double>(n_outer));
    double width = hist.bin_edges[1] - hist.bin_edges[0];
    double se_floor = std::sqrt(1.0 / static_cast<double>(hist.total_values)) / width;

    // clamp the theory lookup inside the support so the borderline value
    // continues across the edge
    double support_lo = theory.geometry.r_int * (1.0 + 1e-9) + 1e-12;
    double support_hi = theory.geometry.r_ext * (1.0 - 1e-9);

    for (std::size_t b = 0; b + 1 < hist.bin_edges.size(); ++b) {
        double mid = 0.5 * (hist.bin_edges[b] + hist.bin_edges[b + 1]);
        if (std::abs(mid - r_b_estimate) > half) continue;
        p.r.push_back(mid);
        p.density.push_back(hist.density[b]);
        p.stderr_.push_back(std::max(hist.stderr_[b], se_floor));
        double rq = std::clamp(mid, support_lo, support_hi);
        p.theory.push_back(curve_value_at(theory, rq));
    }
    return p;
}

ErfcFitResult fit_erfc(const EdgeProfile& profile) {
    const std::size_t n = profile.r.size();
    std::size_t usable = 0;
    for (double s : profile.stderr_)
        if (s > 0.0) ++usable;
    if (usable < 12)
        fail(Errc::insufficient_window,
             "edge profile has " + std::to_string(usable) + " usable bins, need 12");

    double q = 1.0, rb = profile.r_b_seed;
    double sqn = std::sqrt(static_cast<double>(profile.n_outer));
    double s = static_cast<double>(profile.side);

    auto chi2_of = [&](double qv, double rv) {
        double acc = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double f = 0.5 * erfc_custom(qv * s * (profile.r[i] - rv) * sqn);
            double res = (profile.density[i] - profile.theory[i] * f) / profile.stderr_[i];
            acc += res * res;
        }
        return acc;
    };

    double lambda = 1e-3;
    double chi2 = chi2_of(q, rb);
    int it = 0;
    for (; it < 200; ++it) {
        // weighted Jacobian and gradient
        double jqq = 0, jqr = 0, jrr = 0, gq = 0, gr = 0;
        for (std::size_t i = 0; i < n; ++i) {
            double u = q * s * (profile.r[i] - rb) * sqn;
            double f = 0.5 * erfc_custom(u);
            double gauss = std::exp(-u * u) * kInvSqrtPi; // -d erfc/du / 2
            double dfdq = -gauss * s * (profile.r[i] - rb) * sqn;
            double dfdr = gauss * q * s * sqn;
            double w = profile.theory[i] / profile.stderr_[i];
            double jq = w * dfdq, jr = w * dfdr;
            double res = (profile.density[i] - profile.theory[i] * f) / profile.stderr_[i];
            jqq += jq * jq;
            jqr += jq * jr;
            jrr += jr * jr;
            gq += jq * res;
            gr += jr * res;
        }
        bool stepped = false;
        for (int damp = 0; damp < 60; ++damp) {
            double aqq = jqq * (1.0 + lambda), arr = jrr * (1.0 + lambda);
            double det = aqq * arr - jqr * jqr;
            if (std::abs(det) < 1e-300) { lambda *= 5.0; continue; }
            double dq = (gq * arr - gr * jqr) / det;
            double dr = (aqq * gr - jqr * gq) / det;
            double qn = q + dq, rn = rb + dr;
            if (!(qn > 0.0) || !std::isfinite(qn) || !std::isfinite(rn)) {
                lambda *= 5.0;
                continue;
            }
            double c2 = chi2_of(qn, rn);
            if (c2 <= chi2) {
                bool converged = (chi2 - c2) < 1e-12 * (1.0 + chi2) &&
                                 std::abs(dq) < 1e-9 * (1.0 + q) &&
                                 std::abs(dr) < 1e-9 * (1.0 + std::abs(rb));
                q = qn;
                rb = rn;
                chi2 = c2;
                lambda = std::max(lambda / 3.0, 1e-12);
                stepped = true;
                if (converged) it = 1000;
                break;
            }
            lambda *= 5.0;
            if (lambda > 1e12)
                fail(Errc::fit_diverged, "erfc fit: damping exhausted");
        }
        if (!stepped) break;
        if (it >= 1000) break;
    }

    // covariance from the final Gauss-Newton normal matrix
    double jqq = 0, jqr = 0, jrr = 0;
    for (std::size_t i = 0; i < n; ++i) {
        double u = q * s * (profile.r[i] - rb) * sqn;
        double gauss = std::exp(-u * u) * kInvSqrtPi;
        double w = profile.theory[i] / profile.stderr_[i];
        double jq = -w * gauss * s * (profile.r[i] - rb) * sqn;
        double jr = w * gauss * q * s * sqn;
        jqq += jq * jq;
        jqr += jq * jr;
        jrr += jr * jr;
    }
    double det = jqq * jrr - jqr * jqr;
    ErfcFitResult out;
    out.q_b = q;
    out.r_b = rb;
    out.residual = std::sqrt(chi2 / static_cast<double>(n));
    out.iterations = std::min(it, 200);
    if (std::abs(det) > 1e-300 && n > 2) {
        double scale = chi2 / static_cast<double>(n - 2);
        out.cov_qq = jrr / det * scale;
        out.cov_rr = jqq / det * scale;
        out.cov_qr = -jqr / det * scale;
    }
    if (!std::isfinite(out.q_b) || !std::isfinite(out.r_b) || !std::isfinite(out.residual))
        fail(Errc::fit_diverged, "erfc fit produced non-finite parameters");
    return out;
}

} // namespace prodspec
