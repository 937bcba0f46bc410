#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>

#include "prodspec/solver.hpp"
#include "prodspec/stats.hpp"

using namespace prodspec;

namespace {

const double kInvSqrt2 = 0.7071067811865476;

FactorDims cue(std::vector<Cx> w) {
    FactorDims fd;
    fd.factor = CueSumFactor{std::move(w)};
    return fd;
}

FactorDims gin(double sigma, long long rows, long long cols) {
    FactorDims fd;
    fd.factor = GinibreFactor{sigma, Rational(1), Rational(1)};
    fd.rows = rows;
    fd.cols = cols;
    return fd;
}

ValidatedModel bures_model() {
    return validate(make_chain({cue({{kInvSqrt2, 0.0}, {kInvSqrt2, 0.0}}), gin(1.0, 1, 1)}));
}

// equal-weight CUE product with j factors of length l and total net weight
// w_total (the product of the per-factor net weights)
ValidatedModel t_equal_model(int j, int l, double w_total) {
    std::vector<FactorDims> f;
    double w_factor = std::pow(w_total, 1.0 / j);
    double wl = w_factor / std::sqrt(static_cast<double>(l));
    for (int i = 0; i < j; ++i) f.push_back(cue(std::vector<Cx>(l, Cx(wl, 0.0))));
    return validate(make_chain(f));
}

std::vector<double> linrange(double a, double b, int n) {
    std::vector<double> v(n);
    for (int i = 0; i < n; ++i) v[i] = a + (b - a) * i / (n - 1);
    return v;
}

std::vector<double> logrange(double a, double b, int n) {
    std::vector<double> v(n);
    for (int i = 0; i < n; ++i)
        v[i] = std::exp(std::log(a) + (std::log(b) - std::log(a)) * i / (n - 1));
    return v;
}

double loglog_slope(const DensityCurve& curve) {
    std::vector<double> lx, ly;
    for (std::size_t i = 0; i < curve.grid.size(); ++i) {
        lx.push_back(std::log(curve.grid[i]));
        ly.push_back(std::log(curve.values[i]));
    }
    return stats::linear_fit(lx, ly).first;
}

} // namespace

TEST_CASE("radial solve: boundary root and the hand-solved interior point") {
    auto m = t_equal_model(1, 2, 1.0);
    double grid[2] = {1.0, kInvSqrt2};
    auto sols = solve_radial(m, grid);
    CHECK(sols[0].m_value == doctest::Approx(0.0).epsilon(1e-12));
    // R^2 = (m+1)/(m/2+1) at R^2 = 1/2 solves to m = -2/3
    CHECK(sols[1].m_value == doctest::Approx(-2.0 / 3.0).epsilon(1e-11));
}

TEST_CASE("radial solve: solved curve is monotone in R") {
    for (const auto& m : {bures_model(), t_equal_model(3, 2, 1.0)}) {
        auto grid = linrange(1e-3, 1.0, 200);
        auto sols = solve_radial(m, grid);
        for (std::size_t i = 1; i < sols.size(); ++i)
            CHECK(sols[i].m_value >= sols[i - 1].m_value - 1e-14);
    }
}

TEST_CASE("all-integer-ratio chain collapses to the explicit power law") {
    // CUE pair + widening-then-narrowing ginibre pair: M(R^2) = R - 1
    auto m = validate(make_chain({cue({{kInvSqrt2, 0.0}, {kInvSqrt2, 0.0}}),
                                  gin(1.0, 1, 2), gin(1.0, 2, 1)}));
    auto grid = linrange(0.05, 1.0, 40);
    auto sols = solve_radial(m, grid);
    for (std::size_t i = 0; i < grid.size(); ++i)
        CHECK(sols[i].m_value == doctest::Approx(grid[i] - 1.0).epsilon(1e-10));
}

TEST_CASE("radial density: explicit values of the single equal-weight sum") {
    auto m = t_equal_model(1, 2, 1.0);
    double grid[3] = {1.0, 0.5, 1.2};
    auto curve = radial_density(m, grid);
    CHECK(curve.values[0] == doctest::Approx(4.0).epsilon(1e-10));
    CHECK(curve.values[1] == doctest::Approx(0.5 / (0.875 * 0.875)).epsilon(1e-10));
    CHECK(curve.values[2] == 0.0); // outside the disk
    CHECK((curve.flags[2] & kFlagOutsideSupport) != 0);
}

TEST_CASE("radial density matches the closed form across the family") {
    struct Case { int j, l; double w; };
    for (auto c : {Case{1, 2, 1.0}, Case{2, 3, 1.0}, Case{3, 2, 0.5}}) {
        auto m = t_equal_model(c.j, c.l, c.w);
        auto grid = linrange(0.05 * c.w, 0.95 * c.w, 160);
        auto curve = radial_density(m, grid);
        double sup = 0.0;
        for (std::size_t i = 0; i < grid.size(); ++i) {
            double oracle = t_example1_closed_form(grid[i], c.j, c.l, c.w);
            sup = std::max(sup, std::abs(curve.values[i] - oracle));
        }
        CHECK(sup < 1e-8);
    }
}

TEST_CASE("analytic and finite-difference densities agree away from endpoints") {
    for (const auto& m : {bures_model(), t_equal_model(2, 2, 1.0)}) {
        for (double r : {0.3, 0.6, 0.9}) {
            double grid[1] = {r};
            auto curve = radial_density(m, grid);
            double slope_fd = radial_density_fd(m, r, 1e-6);
            CHECK(std::abs(curve.values[0] - slope_fd) < 1e-6 * (1.0 + slope_fd));
        }
    }
}

TEST_CASE("domain geometry: closed-form radii") {
    SUBCASE("annulus of the unequal two-weight sum") {
        auto m = validate(make_chain({cue({{1.0, 0.0}, {0.5, 0.0}})}));
        auto g = domain_geometry(m);
        CHECK(g.r_ext * g.r_ext == doctest::Approx(1.25).epsilon(1e-12));
        CHECK(g.r_int * g.r_int == doctest::Approx(0.75).epsilon(1e-12));
    }
    SUBCASE("bures disk") {
        auto g = domain_geometry(bures_model());
        CHECK(g.r_ext == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(g.r_int == 0.0);
        CHECK(g.alpha == 0.0);
        CHECK(g.d_eigen == 2);
    }
    SUBCASE("two-weight products with a ginibre block: disk radius") {
        auto m = validate(make_chain({cue({{1.0, 0.0}, {1.0, 0.0}}),
                                      cue({{1.0, 0.0}, {0.5, 0.0}}), gin(1.0, 1, 1),
                                      gin(2.0, 1, 1)}));
        auto g = domain_geometry(m);
        CHECK(g.r_ext * g.r_ext == doctest::Approx(4.0 * 2.0 * 1.25).epsilon(1e-10));
        CHECK(g.r_int == 0.0);
        auto cf = closed_form_radii_squared(m);
        REQUIRE(cf.has_value());
        CHECK(cf->first == doctest::Approx(g.r_ext * g.r_ext).epsilon(1e-12));
        CHECK(cf->second == 0.0);
    }
    SUBCASE("block product disk radius |w| sigma") {
        auto m = validate(make_chain({cue({{std::sqrt(2.0), 0.0}, {std::sqrt(2.0), 0.0}}),
                                      gin(1.5, 1, 1), cue({{0.25, 0.0}, {0.25, 0.0}, {0.25, 0.0}}),
                                      gin(2.0, 1, 1)}));
        double expect = 4.0 * (3 * 0.0625) * (1.5 * 1.5) * 4.0;
        auto g = domain_geometry(m);
        CHECK(g.r_ext * g.r_ext == doctest::Approx(expect).epsilon(1e-10));
    }
}

TEST_CASE("borderline matching: endpoint roots sit on the radii") {
    for (const auto& m :
         {bures_model(), t_equal_model(2, 3, 1.0),
          validate(make_chain({cue({{1.0, 0.0}, {0.5, 0.0}})})),
          validate(make_chain({cue({{kInvSqrt2, 0.0}, {kInvSqrt2, 0.0}}), gin(1.0, 2, 1),
                               gin(1.0, 1, 2)}))}) {
        auto g = domain_geometry(m);
        double grid[2] = {g.r_ext, std::max(g.r_int, 1e-9)};
        auto sols = solve_radial(m, grid);
        CHECK(std::abs(sols[0].m_value) < 1e-10);
        if (g.r_int > 0) CHECK(std::abs(sols[1].m_value - (g.alpha - 1.0)) < 1e-10);
    }
}

TEST_CASE("scaling relation between the product and its single factor") {
    CHECK(scaling_relation_check(t_equal_model(1, 2, 1.0), 0.7) == 0.0);
    for (int j : {2, 3}) {
        auto m = t_equal_model(j, 2, 1.0);
        for (double r : {0.2, 0.5, 0.9})
            CHECK(scaling_relation_check(m, r) < 1e-8);
    }
}

TEST_CASE("bures closed form: support edge, interior value, small-x exponent") {
    double beta = 3.0 * std::sqrt(3.0);
    CHECK(bures_closed_form(beta) == 0.0);
    CHECK(bures_closed_form(beta + 0.1) == 0.0);
    CHECK(bures_closed_form(1.0) == doctest::Approx(0.20772).epsilon(2e-5));
    double ratio = bures_closed_form(1e-8) / bures_closed_form(1e-6);
    CHECK(std::log(ratio) / std::log(100.0) == doctest::Approx(2.0 / 3.0).epsilon(1e-3));
}

TEST_CASE("upper support edge: fold positions") {
    CHECK(upper_support_edge(bures_model()) ==
          doctest::Approx(3.0 * std::sqrt(3.0)).epsilon(1e-10));
    CHECK(upper_support_edge(validate(make_chain({gin(1.0, 1, 1)}))) ==
          doctest::Approx(4.0).epsilon(1e-10));
}

TEST_CASE("pure unitary spectrum has no continuous band") {
    auto m = validate(make_chain({cue({{1.0, 0.0}})}));
    try {
        (void)upper_support_edge(m);
        FAIL("expected SupportEdgeAmbiguity");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::support_edge_ambiguity);
    }
    auto grid = linrange(0.5, 1.5, 16);
    CHECK_THROWS_AS((void)singular_density(m, grid), Error);
}

TEST_CASE("singular density: bures curve against the closed form") {
    auto m = bures_model();
    auto grid = linrange(0.05, 5.19, 240);
    auto curve = singular_density(m, grid);
    double sup = 0.0;
    for (std::size_t i = 0; i < grid.size(); ++i)
        sup = std::max(sup, std::abs(curve.values[i] - bures_closed_form(grid[i])));
    CHECK(sup < 1e-6);
    CHECK(curve.upper_edge == doctest::Approx(3.0 * std::sqrt(3.0)).epsilon(1e-7));
}

TEST_CASE("singular density: Marchenko-Pastur law of a square ginibre") {
    auto m = validate(make_chain({gin(1.0, 1, 1)}));
    auto grid = linrange(0.05, 3.95, 160);
    auto curve = singular_density(m, grid);
    double sup = 0.0;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        double x = grid[i];
        double mp = std::sqrt((4.0 - x) / x) / (2.0 * std::numbers::pi);
        sup = std::max(sup, std::abs(curve.values[i] - mp));
    }
    CHECK(sup < 1e-6);
}

TEST_CASE("singular density: annulus-type support stays off zero") {
    // a single unequal two-weight sum: support [(w1-w2)^2, (w1+w2)^2] with
    // hard (inverse square root) edges reached as asymptotes of the relation
    auto m = validate(make_chain({cue({{1.0, 0.0}, {0.5, 0.0}})}));
    CHECK(upper_support_edge(m) == doctest::Approx(2.25).epsilon(1e-6));
    auto grid = linrange(0.05, 2.19, 160);
    auto curve = singular_density(m, grid);
    double mass = 0.0;
    for (std::size_t i = 1; i < grid.size(); ++i)
        mass += 0.5 * (curve.values[i] + curve.values[i - 1]) * (grid[i] - grid[i - 1]);
    CHECK(mass > 0.75); // hard edges hold the remaining mass outside the window
    CHECK(mass < 1.0);
    CHECK(curve.values[0] == 0.0); // below the inner edge at 0.25
    CHECK(curve.lower_edge == doctest::Approx(0.25).epsilon(0.05));
}

TEST_CASE("theory moments: catalan tail and the bures sequence") {
    auto mp = theory_moments(validate(make_chain({gin(1.0, 1, 1)})), 4);
    CHECK(mp[0] == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(mp[1] == doctest::Approx(2.0).epsilon(1e-10));
    CHECK(mp[2] == doctest::Approx(5.0).epsilon(1e-8));
    CHECK(mp[3] == doctest::Approx(14.0).epsilon(1e-7));

    auto bures = theory_moments(bures_model(), 4);
    CHECK(bures[0] == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(bures[1] == doctest::Approx(2.5).epsilon(1e-10));
    CHECK(bures[2] == doctest::Approx(8.0).epsilon(1e-8));
    CHECK(bures[3] == doctest::Approx(28.875).epsilon(1e-7));

    auto u = theory_moments(validate(make_chain({cue({{1.0, 0.0}})})), 4);
    for (double v : u) CHECK(v == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("normalization: radial mass equals the non-atomic fraction") {
    SUBCASE("bures disk") {
        CHECK(radial_mass(bures_model(), 0.0, 1.0) == doctest::Approx(1.0).epsilon(1e-6));
    }
    SUBCASE("divergent-at-zero triple product") {
        CHECK(radial_mass(t_equal_model(3, 2, 1.0), 0.0, 1.0) ==
              doctest::Approx(1.0).epsilon(1e-6));
    }
    SUBCASE("annulus") {
        auto m = validate(make_chain({cue({{1.0, 0.0}, {0.5, 0.0}})}));
        auto g = domain_geometry(m);
        CHECK(radial_mass(m, g.r_int, g.r_ext) == doctest::Approx(1.0).epsilon(1e-6));
    }
    SUBCASE("bottleneck chain leaves alpha in the atom") {
        auto m = validate(make_chain({cue({{kInvSqrt2, 0.0}, {kInvSqrt2, 0.0}}),
                                      gin(1.0, 2, 1), gin(1.0, 1, 2)}));
        CHECK(radial_mass(m, 0.0, domain_geometry(m).r_ext) ==
              doctest::Approx(0.5).epsilon(1e-6));
    }
}

TEST_CASE("divergence exponents show up as log-log slopes of the curves") {
    SUBCASE("radial, d = 2: flat radial density near zero") {
        CHECK(std::abs(loglog_slope(radial_density(bures_model(), logrange(1e-4, 1e-2, 24))))
              < 0.02);
    }
    SUBCASE("radial, d = 3") {
        double slope = loglog_slope(radial_density(t_equal_model(3, 2, 1.0),
                                                   logrange(1e-4, 1e-2, 24)));
        CHECK(std::abs(slope - (-1.0 / 3.0)) < 0.02);
    }
    SUBCASE("singular, d = 2: x^{-2/3}") {
        double slope = loglog_slope(singular_density(bures_model(), logrange(1e-4, 1e-2, 24)));
        CHECK(std::abs(slope - (-2.0 / 3.0)) < 0.02);
    }
}

TEST_CASE("transform-bridge self-consistency on the real segment") {
    // the eigenvalue-side relation equals the singular-side relation times
    // m/(m+1), for square models
    for (const auto& m : {bures_model(), t_equal_model(2, 2, 1.0),
                          validate(make_chain({cue({{1.0, 0.0}, {0.5, 0.0}}),
                                               gin(1.0, 1, 1)}))}) {
        EvalSession session(m);
        for (int i = 1; i <= 18; ++i) {
            double x = -0.05 - 0.9 * i / 19.0;
            Cx lhs = compose_singular(m, Cx(x, 0.0), session) * Cx(x, 0.0) / Cx(x + 1.0, 0.0);
            double rhs = compose_eigen(m, x);
            CHECK(std::abs(lhs - rhs) < 1e-8 * (1.0 + std::abs(rhs)));
        }
    }
}

TEST_CASE("singular curve mass on the default grid") {
    auto curve = singular_density(bures_model(), default_singular_grid(bures_model()));
    double mass = 0.0;
    for (std::size_t i = 1; i < curve.grid.size(); ++i)
        mass += 0.5 * (curve.values[i] + curve.values[i - 1]) *
                (curve.grid[i] - curve.grid[i - 1]);
    // trapezoid on the default grid; the integrable x^(-2/3) head below the
    // first grid point holds the missing sliver
    CHECK(mass == doctest::Approx(1.0).epsilon(1e-2));
    CHECK(mass < 1.0);
}

TEST_CASE("default grids cover the support with the documented policy") {
    auto rg = default_radial_grid(bures_model());
    CHECK(rg.size() == 1023);
    CHECK(rg.front() == doctest::Approx(1e-6).epsilon(1e-9));
    CHECK(rg.back() == doctest::Approx(1.0).epsilon(1e-12));
    auto sg = default_singular_grid(bures_model());
    CHECK(sg.front() < 1e-4);
    CHECK(sg.back() > 3.0 * std::sqrt(3.0));
}
