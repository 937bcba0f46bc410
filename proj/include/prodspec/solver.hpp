#pragma once

#include <optional>
#include <span>
#include <vector>

#include "prodspec/transforms.hpp"

namespace prodspec {

struct DomainGeometry {
    double r_ext = 0.0;
    double r_int = 0.0;
    double alpha = 0.0;
    std::optional<int> d_eigen;    // divergence exponent, when defined
    std::optional<int> d_singular;
};

struct RadialSolution {
    double r = 0.0;
    double m_value = 0.0; // M-transform of the radial master relation, in [alpha-1, 0]
};

enum CurvePointFlag : unsigned char {
    kFlagNone = 0,
    kFlagDerivativeBlowup = 1,
    kFlagOutsideSupport = 2,
};

struct DensityCurve {
    SpectrumKind kind = SpectrumKind::Eigenvalue;
    std::vector<double> grid;   // R (radial) or x (singular)
    std::vector<double> values; // rho_rad or rho_sing
    std::vector<unsigned char> flags;
    DomainGeometry geometry;

    // radial curves: solved m_value per point
    std::vector<double> m_values;
    // singular curves: complex M per point and detected support edges
    std::vector<Cx> m_complex;
    double upper_edge = 0.0;
    double lower_edge = 0.0;
};

DomainGeometry domain_geometry(const ValidatedModel& model);

// Closed-form external/internal squared radii for the product families that
// admit them (unit-ratio chains and annulus-type pure CUE products). Used as
// an independent cross-check of domain_geometry.
std::optional<std::pair<double, double>> closed_form_radii_squared(const ValidatedModel& model);

// Radial master solve: for each R the root m in [alpha-1, 0] of the composed
// transform equal to R^2, marched inward from the external borderline where
// the root is exactly zero. Points outside the annulus get the constant
// endpoint values.
std::vector<RadialSolution> solve_radial(const ValidatedModel& model,
                                         std::span<const double> r_grid);

DensityCurve radial_density(const ValidatedModel& model, std::span<const double> r_grid);

// Finite-difference check value for the radial density (tests).
double radial_density_fd(const ValidatedModel& model, double r, double h);

// Upper edge of the singular-value support: the fold of the holomorphic
// master relation on the positive real axis. Throws
// Errc::support_edge_ambiguity when no fold exists (pure point spectrum).
double upper_support_edge(const ValidatedModel& model);

DensityCurve singular_density(const ValidatedModel& model, std::span<const double> x_grid);

// Closed-form oracles.
double bures_closed_form(double x);
double t_example1_closed_form(double r, int j_factors, int weights_per_factor, double w_abs);

// |M_T(R^2) - M_S(R^(2/J))| via two independent solves; the T model must have
// identical CUE factors.
double scaling_relation_check(const ValidatedModel& model, double r);

// Moments of X^dagger X from the large-argument series inversion of the
// composed holomorphic transform; n_max <= 4.
std::vector<double> theory_moments(const ValidatedModel& model, int n_max);

// Adaptive Simpson quadrature of the analytic radial density over [a, b].
double radial_mass(const ValidatedModel& model, double a, double b, double tol = 1e-8);

// Default grid policies: logarithmic coverage toward zero plus a linear bulk.
std::vector<double> default_radial_grid(const ValidatedModel& model);
std::vector<double> default_singular_grid(const ValidatedModel& model);

// Interpolate a curve at one abscissa (linear; 0 outside the grid).
double curve_value_at(const DensityCurve& curve, double x);

} // namespace prodspec
