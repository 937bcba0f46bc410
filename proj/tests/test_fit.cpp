#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "prodspec/fit.hpp"

using namespace prodspec;

TEST_CASE("self-contained erfc tracks the libm reference everywhere") {
    double worst_abs = 0.0, worst_rel = 0.0;
    for (int i = -600; i <= 2700; ++i) {
        double x = i / 100.0;
        double mine = erfc_custom(x);
        double ref = std::erfc(x);
        worst_abs = std::max(worst_abs, std::abs(mine - ref));
        if (x <= 5.0 && ref > 0.0)
            worst_rel = std::max(worst_rel, std::abs(mine - ref) / ref);
    }
    CHECK(worst_abs < 1e-12);
    CHECK(worst_rel < 1e-12);
}

TEST_CASE("form factor anchors") {
    CHECK(erfc_form_factor(1.0, 512, 0.8, 1.0, +1) == doctest::Approx(0.5).epsilon(1e-15));
    // complementary sides sum to one
    for (double r : {0.9, 1.0, 1.05}) {
        double sum = erfc_form_factor(r, 256, 1.3, 1.0, +1) +
                     erfc_form_factor(r, 256, 1.3, 1.0, -1);
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-13));
    }
    // deep inside the bulk the factor saturates at one
    CHECK(erfc_form_factor(0.2, 512, 1.0, 1.0, +1) == doctest::Approx(1.0).epsilon(1e-12));
    // one borderline width outside
    double u1 = erfc_form_factor(1.0 + 1.0 / std::sqrt(512.0), 512, 1.0, 1.0, +1);
    CHECK(u1 == doctest::Approx(0.5 * std::erfc(1.0)).epsilon(1e-12));
    CHECK(u1 == doctest::Approx(0.078649603525143).epsilon(1e-9));
}

TEST_CASE("form factor is monotone in the radial coordinate") {
    double prev_ext = 2.0, prev_int = -1.0;
    for (int i = 0; i <= 100; ++i) {
        double r = 0.8 + 0.4 * i / 100.0;
        double f_ext = erfc_form_factor(r, 256, 0.7, 1.0, +1);
        double f_int = erfc_form_factor(r, 256, 0.7, 1.0, -1);
        CHECK(f_ext <= prev_ext + 1e-15);
        CHECK(f_int >= prev_int - 1e-15);
        prev_ext = f_ext;
        prev_int = f_int;
    }
}

namespace {

// deterministic synthetic profile drawn from the form factor itself
EdgeProfile synthetic_profile(double q_true, double rb_true, int n_outer, double noise) {
    EdgeProfile p;
    p.side = +1;
    p.n_outer = n_outer;
    p.r_b_seed = rb_true * 1.01; // slightly off seed
    std::uint64_t state = 12345;
    auto next_noise = [&]() {
        // xorshift-based uniform in [-1, 1]
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        return 2.0 * (static_cast<double>(state >> 11) * 0x1.0p-53) - 1.0;
    };
    double half = 8.0 / std::sqrt(static_cast<double>(n_outer));
    const int bins = 36;
    for (int i = 0; i < bins; ++i) {
        double r = rb_true - half + 2.0 * half * (i + 0.5) / bins;
        double bulk = 1.7 - 0.4 * r; // smooth local density
        double f = erfc_form_factor(r, n_outer, q_true, rb_true, +1);
        double dens = bulk * f * (1.0 + noise * next_noise());
        p.r.push_back(r);
        p.theory.push_back(bulk);
        p.density.push_back(dens);
        p.stderr_.push_back(std::max(noise * bulk, 1e-4));
    }
    return p;
}

} // namespace

TEST_CASE("synthetic recovery of the borderline parameters") {
    auto prof = synthetic_profile(0.7, 1.0, 256, 0.01);
    auto fit = fit_erfc(prof);
    CHECK(std::abs(fit.q_b - 0.7) / 0.7 < 0.05);
    CHECK(std::abs(fit.r_b - 1.0) < 0.01);
    CHECK(fit.residual < 3.0);
    CHECK(fit.cov_qq > 0.0);
    CHECK(fit.cov_rr > 0.0);
}

TEST_CASE("noiseless profile is recovered essentially exactly") {
    auto prof = synthetic_profile(1.2, 0.8, 512, 0.0);
    for (auto& s : prof.stderr_) s = 1e-3;
    auto fit = fit_erfc(prof);
    CHECK(fit.q_b == doctest::Approx(1.2).epsilon(1e-6));
    CHECK(fit.r_b == doctest::Approx(0.8).epsilon(1e-6));
}

TEST_CASE("narrow windows are refused") {
    auto prof = synthetic_profile(0.7, 1.0, 256, 0.01);
    prof.r.resize(8);
    prof.density.resize(8);
    prof.stderr_.resize(8);
    prof.theory.resize(8);
    try {
        (void)fit_erfc(prof);
        FAIL("expected InsufficientWindow");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::insufficient_window);
    }
}

TEST_CASE("non-finite data is reported as a diverged fit") {
    auto prof = synthetic_profile(0.7, 1.0, 256, 0.01);
    prof.density[3] = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS((void)fit_erfc(prof), Error);
}
