#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "prodspec/model.hpp"

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

} // namespace

TEST_CASE("single equal-weight CUE sum validates as a square model") {
    auto m = validate(make_chain({cue({{kInvSqrt2, 0.0}, {kInvSqrt2, 0.0}})}));
    CHECK(m.eigenvalue_capable());
    CHECK(m.chain(0) == Rational(1));
    CHECK(m.classification().tag == ModelTag::S);
    CHECK(m.classification().cue_forms[0] == CueForm::EqualWeights);
}

TEST_CASE("mismatched ginibre chain is rejected") {
    try {
        make_chain({gin(1.0, 1, 2), gin(1.0, 3, 1)});
        FAIL("expected error");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::dimension_mismatch);
    }
}

TEST_CASE("bures parameter set validates and classifies as W") {
    auto m = bures_model();
    CHECK(m.eigenvalue_capable());
    CHECK(m.classification().tag == ModelTag::W);
    CHECK(m.classification().cue_forms[0] == CueForm::EqualWeights);
    CHECK(m.zero_mode_fraction() == 0.0);
}

TEST_CASE("degenerate specs are rejected with structured codes") {
    CHECK_THROWS_AS(make_chain({}), Error);
    try {
        validate(make_chain({cue({{0.0, 0.0}})}));
        FAIL("expected error");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::non_positive_scale);
    }
    try {
        validate(make_chain({gin(-1.0, 1, 1)}));
        FAIL("expected error");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::non_positive_scale);
    }
}

TEST_CASE("zero mode fraction follows the narrowest bottleneck") {
    SUBCASE("square chain has none") {
        CHECK(bures_model().zero_mode_fraction() == 0.0);
    }
    SUBCASE("half-width bottleneck gives one half") {
        auto m = validate(make_chain({cue({{kInvSqrt2, 0.0}, {kInvSqrt2, 0.0}}),
                                      gin(1.0, 2, 1), gin(1.0, 1, 2)}));
        CHECK(m.zero_mode_fraction() == doctest::Approx(0.5));
    }
    SUBCASE("inserting a narrower bottleneck strictly increases alpha") {
        auto base = validate(make_chain({cue({{1.0, 0.0}, {1.0, 0.0}}),
                                         gin(1.0, 4, 3), gin(1.0, 3, 4)}));
        auto narrower = validate(make_chain({cue({{1.0, 0.0}, {1.0, 0.0}}),
                                             gin(1.0, 4, 3), gin(1.0, 3, 1), gin(1.0, 1, 4)}));
        CHECK(narrower.zero_mode_fraction() > base.zero_mode_fraction());
        CHECK(base.zero_mode_fraction() == doctest::Approx(0.25));
        CHECK(narrower.zero_mode_fraction() == doctest::Approx(0.75));
    }
}

TEST_CASE("classification covers the chain taxonomy") {
    CHECK(validate(make_chain({gin(1.0, 1, 2), gin(1.0, 2, 1)})).classification().tag ==
          ModelTag::P);
    CHECK(validate(make_chain({cue({{1, 0}, {1, 0}}), cue({{1, 0}, {0.5, 0}})}))
              .classification().tag == ModelTag::T);
    CHECK(bures_model().classification().tag == ModelTag::W);
    auto v = validate(make_chain({cue({{1, 0}, {1, 0}}), gin(1.0, 1, 1),
                                  cue({{1, 0}, {1, 0}}), gin(1.0, 1, 1)}));
    CHECK(v.classification().tag == ModelTag::V);
    auto g = validate(make_chain({gin(1.0, 1, 1), cue({{1, 0}, {1, 0}})}));
    CHECK(g.classification().tag == ModelTag::GeneralChain);
}

TEST_CASE("model hash is stable and sensitive") {
    auto a = bures_model();
    auto b = bures_model();
    CHECK(a.hash() == b.hash());
    auto c = validate(make_chain({cue({{0.8, 0.0}, {0.6, 0.0}}), gin(1.0, 1, 1)}));
    CHECK(a.hash() != c.hash());
}

TEST_CASE("divergence exponent: covered families") {
    SUBCASE("equal-weight CUE product of three factors") {
        auto m = validate(make_chain({cue({{1, 0}, {1, 0}}), cue({{1, 0}, {1, 0}, {1, 0}}),
                                      cue({{1, 0}, {1, 0}})}));
        CHECK(divergence_exponent(m, SpectrumKind::Eigenvalue) == 3);
        CHECK(divergence_exponent(m, SpectrumKind::Singular) == 3);
    }
    SUBCASE("bures parameter set") {
        CHECK(divergence_exponent(bures_model(), SpectrumKind::Eigenvalue) == 2);
        CHECK(divergence_exponent(bures_model(), SpectrumKind::Singular) == 2);
    }
    SUBCASE("annulus: unequal two-weight sum does not touch zero") {
        auto m = validate(make_chain({cue({{1.0, 0.0}, {0.5, 0.0}})}));
        try {
            (void)divergence_exponent(m, SpectrumKind::Eigenvalue);
            FAIL("expected NotApplicable");
        } catch (const Error& e) {
            CHECK(e.code() == Errc::not_applicable);
        }
    }
    SUBCASE("general weights at the inner endpoint: abstain") {
        auto m = validate(make_chain({cue({{1.0, 0.0}, {0.9, 0.0}, {0.5, 0.0}})}));
        CHECK_FALSE(divergence_exponent(m, SpectrumKind::Eigenvalue).has_value());
    }
    SUBCASE("single unitary contributes no zero") {
        auto m = validate(make_chain({cue({{1.0, 0.0}}), gin(1.0, 1, 1)}));
        CHECK(divergence_exponent(m, SpectrumKind::Eigenvalue) == 1);
    }
}

TEST_CASE("divergence exponent reduces to the per-family formulas") {
    // independent oracle: the published per-family counts over a small grid
    for (int j = 1; j <= 3; ++j) {
        for (int k = 0; k <= 2; ++k) {
            for (int r2 = 1; r2 <= 2; ++r2) {
                std::vector<FactorDims> f;
                for (int jj = 0; jj < j; ++jj) f.push_back(cue({{1, 0}, {1, 0}}));
                if (k == 1) f.push_back(gin(1.0, 1, 1));
                if (k == 2) {
                    f.push_back(gin(1.0, 1, r2));
                    f.push_back(gin(1.0, r2, 1));
                }
                auto m = validate(make_chain(f));
                int expected;
                if (k == 0) {
                    expected = j; // pure equal-weight CUE product
                } else {
                    int unit_ratios = (k == 2 && r2 == 1) ? 1 : 0;
                    expected = j + 1 + unit_ratios;
                }
                auto d = divergence_exponent(m, SpectrumKind::Eigenvalue);
                REQUIRE(d.has_value());
                CHECK(*d == expected);
            }
        }
    }
    // two-weight factors: only the equal-modulus ones count
    auto m = validate(make_chain({cue({{1, 0}, {1, 0}}), cue({{1, 0}, {0.5, 0}})}));
    CHECK(divergence_exponent(m, SpectrumKind::Eigenvalue) == 1);
    // block concatenation adds the per-block counts
    auto v = validate(make_chain({cue({{1, 0}, {1, 0}}), gin(1.0, 1, 1),
                                  cue({{1, 0}, {1, 0}}), gin(1.0, 1, 1)}));
    CHECK(divergence_exponent(v, SpectrumKind::Eigenvalue) == 4);
}

TEST_CASE("singular-kind exponent of a fat chain loses the prefactor zero") {
    auto m = validate(make_chain({gin(1.0, 2, 1)}));
    try {
        (void)divergence_exponent(m, SpectrumKind::Singular);
        FAIL("expected NotApplicable");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::not_applicable);
    }
    auto sq = validate(make_chain({gin(1.0, 1, 1)}));
    CHECK(divergence_exponent(sq, SpectrumKind::Singular) == 1);
}
