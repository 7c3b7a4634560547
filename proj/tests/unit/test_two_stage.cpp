#include "helpers.hpp"

#include "late/error.hpp"
#include "late/special_functions.hpp"
#include "late/two_stage.hpp"

#include <doctest.h>

#include <cmath>

using namespace late;

namespace {

RegimeInputs cre(double ty, double tw, QuadraticForm q) {
    RegimeInputs in;
    in.tau_y_hat = ty;
    in.tau_w_hat = tw;
    in.components.plain = q;
    return in;
}

bool same_geometry(const ConfidenceSet& a, const ConfidenceSet& b) {
    auto eq = [](double x, double y) { return x == y || (std::isnan(x) && std::isnan(y)); };
    return a.kind == b.kind && eq(a.lo, b.lo) && eq(a.hi, b.hi) && a.contains_wald == b.contains_wald &&
           a.degenerate == b.degenerate;
}

} // namespace

TEST_CASE("first-stage statistic at the null value is weak") {
    const auto in = cre(1.0, 0.01, QuadraticForm{1.0, 0.0, 0.04});
    const auto r = first_stage_test(in, 0.075, 0.01);
    CHECK(r.statistic == doctest::Approx(0.0));
    CHECK_FALSE(r.strong);
    CHECK(r.kind == StatisticKind::T);
    CHECK(r.critical == doctest::Approx(normal_quantile(0.925)));
}

TEST_CASE("ten standard errors above the null is strong") {
    const double v = 0.0025;
    const auto in = cre(1.0, 0.01 + 10 * std::sqrt(v), QuadraticForm{1.0, 0.0, v});
    const auto r = first_stage_test(in, 0.075, 0.01);
    CHECK(r.statistic == doctest::Approx(10.0));
    CHECK(r.strong);
}

TEST_CASE("ties go to the weak branch") {
    const double crit = normal_quantile(1.0 - 0.075);
    auto in = cre(1.0, 0.0, QuadraticForm{1.0, 0.0, 1.0});
    in.tau_w_hat = 0.01 + crit;
    const auto r = first_stage_test(in, 0.075, 0.01);
    CHECK(r.statistic == r.critical);
    CHECK_FALSE(r.strong);

}

TEST_CASE("F screen boundary and zero first stage") {
    const auto exact = f_screen(cre(1.0, 5.0, QuadraticForm{1.0, 0.0, 2.5}));
    CHECK(exact.kind == StatisticKind::F);
    CHECK(exact.statistic == 10.0);
    CHECK_FALSE(exact.strong);
    CHECK(f_screen(cre(1.0, 5.0, QuadraticForm{1.0, 0.0, 2.4})).strong);
    const auto zero = f_screen(cre(1.0, 0.0, QuadraticForm{1.0, 0.0, 1.0}));
    CHECK(zero.statistic == 0.0);
    CHECK_FALSE(zero.strong);
}

TEST_CASE("nonpositive first-stage variance is weak") {
    const auto r = first_stage_test(cre(1.0, 0.5, QuadraticForm{1.0, 0.0, 0.0}), 0.075, 0.01);
    CHECK_FALSE(r.strong);
    CHECK(r.nonpositive_variance);
    CHECK(f_screen(cre(1.0, 0.5, QuadraticForm{1.0, 0.0, 0.0})).nonpositive_variance);
    CHECK_THROWS_AS(first_stage_test(cre(1.0, 0.5, QuadraticForm{1.0, 0.0, 1.0}), 0.6, 0.01), InputError);
}

TEST_CASE("strength is monotone in gamma") {
    Rng rng(1);
    std::uniform_real_distribution<double> u(0.0, 0.6);
    for (int rep = 0; rep < 500; ++rep) {
        const auto in = cre(1.0, u(rng), QuadraticForm{1.0, 0.0, 0.01 + 0.05 * u(rng)});
        const bool at_small = first_stage_test(in, 0.025, 0.01).strong;
        const bool at_large = first_stage_test(in, 0.075, 0.01).strong;
        if (at_small) CHECK(at_large);
    }
}

TEST_CASE("two-stage output equals the chosen standalone set") {
    for (std::uint64_t seed = 500; seed < 530; ++seed) {
        const Dataset d = testutil::random_dataset(80, 40, 2, seed, 0.05 + 0.02 * static_cast<double>(seed % 10));
        for (auto design : {DesignKind::CRE, DesignKind::ReM}) {
            for (auto adj : {Adjustment::None, Adjustment::EHW}) {
                AnalysisConfig c;
                c.adjustment = adj;
                c.design = design == DesignKind::ReM ? DesignSpec::rem_from_pa(40, 0.05, 2) : DesignSpec::cre(40);
                const auto in = prepare_regime(d, c);
                const auto ts = two_stage_set(in, 0.05, 0.075, 0.01);
                CHECK((ts.branch == Branch::Wald) == ts.first_stage.strong);
                const auto standalone = ts.first_stage.strong ? wald_ci(in, 0.05) : far_set(in, 0.05);
                CHECK(same_geometry(ts.set, standalone));
                if (adj != Adjustment::None) CHECK(ts.first_stage.kind == StatisticKind::T_dagger);
                else if (design == DesignKind::ReM) CHECK(ts.first_stage.kind == StatisticKind::T_ReM);

                const auto f10 = two_stage_f10(in, 0.05);
                CHECK(same_geometry(f10.set, f10.first_stage.strong ? wald_ci(in, 0.05) : far_set(in, 0.05)));
            }
        }
    }
}

TEST_CASE("method labels round trip") {
    for (const auto& m : standard_methods()) {
        const auto back = MethodSpec::parse(m.label(), 0.3);
        CHECK(back.kind == m.kind);
        CHECK(back.label() == m.label());
    }
    CHECK(MethodSpec::parse("ts_0.025", 0.075).gamma == 0.025);
    CHECK(MethodSpec::parse("ts", 0.05).gamma == 0.05);
    CHECK(MethodSpec::parse("ts_0.075", 0.05).label() == "ts_0.075");
    CHECK(MethodSpec::parse("wald_f10", 0.05).kind == MethodSpec::Kind::WaldF10);
    CHECK_THROWS_AS(MethodSpec::parse("ts_0.7", 0.05), InputError);
    CHECK_THROWS_AS(MethodSpec::parse("bogus", 0.05), InputError);
    const auto std6 = standard_methods();
    REQUIRE(std6.size() == 6);
    CHECK(std6[2].label() == "ts_0.075");
    CHECK(std6[3].label() == "ts_0.025");
}

TEST_CASE("method evaluation shares sets and skips weak F draws") {
    AnalysisConfig c;
    const auto weak = cre(0.5, 0.05, QuadraticForm{0.04, 0.0, 0.01});
    const auto out = evaluate_methods(weak, standard_methods(), c);
    REQUIRE(out.size() == 6);
    CHECK(out[0].set->method == "wald");
    CHECK(out[1].set->method == "far");
    CHECK(out[2].branch == Branch::FAR);
    CHECK(same_geometry(*out[2].set, *out[1].set));
    CHECK(out[2].set->method == "ts_0.075");
    CHECK_FALSE(out[5].set.has_value());
    CHECK(out[5].skip_reason.find("F") != std::string::npos);

    const auto strong = cre(0.5, 0.5, QuadraticForm{0.04, 0.0, 0.001});
    const auto out2 = evaluate_methods(strong, standard_methods(), c);
    CHECK(out2[2].branch == Branch::Wald);
    CHECK(same_geometry(*out2[2].set, *out2[0].set));
    REQUIRE(out2[5].set.has_value());
    CHECK(same_geometry(*out2[5].set, *out2[0].set));
}
