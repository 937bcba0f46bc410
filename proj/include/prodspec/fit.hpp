#pragma once

#include <vector>

#include "prodspec/mc.hpp"
#include "prodspec/solver.hpp"

namespace prodspec {

// Self-contained complementary error function: alternating series below the
// crossover, Lentz continued fraction above, |error| < 1e-12 everywhere.
// Keeps report numerics independent of the platform libm.
double erfc_custom(double x);

// Universal borderline form-factor (1/2) erfc(q_b s_b (R - R_b) sqrt(N)).
// side = +1 for the external borderline, -1 for the internal one.
double erfc_form_factor(double r, int n_outer, double q_b, double r_b, int side);

// Empirical density in a window around one borderline, with the bulk theory
// density at the same abscissas (continued by its borderline value across the
// edge, where the bulk formula cuts off).
struct EdgeProfile {
    std::vector<double> r;
    std::vector<double> density;
    std::vector<double> stderr_;
    std::vector<double> theory;
    int side = +1;
    int n_outer = 0;
    double r_b_seed = 1.0;
};

EdgeProfile extract_edge_profile(const EmpiricalCurve& hist, const DensityCurve& theory,
                                 double r_b_estimate, int side, int n_outer,
                                 double half_width_sigmas = 8.0);

struct ErfcFitResult {
    double q_b = 0.0;
    double r_b = 0.0;
    double residual = 0.0; // weighted RMS of the converged fit
    double cov_qq = 0.0, cov_qr = 0.0, cov_rr = 0.0;
    int iterations = 0;
};

// Weighted least squares of the empirical profile against
// theory(R) * f_{N,q_b,R_b,s_b}(R), free parameters (q_b, R_b),
// Levenberg-Marquardt damping. Initial R_b from the profile seed, q_b = 1.
ErfcFitResult fit_erfc(const EdgeProfile& profile);

} // namespace prodspec
