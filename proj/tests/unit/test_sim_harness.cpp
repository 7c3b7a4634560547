#include "late/error.hpp"
#include "late/sim_harness.hpp"

#include <Eigen/LU>
#include <doctest.h>

#include <cmath>
#include <algorithm>
#include <mutex>
#include <sstream>

using namespace late;

namespace {

// Finite-population variance with divisor n - 1 by double loop over pairs:
// S^2 = sum_{i<j} (q_i - q_j)^2 / (n (n - 1)).
double pair_variance(const VectorXd& q) {
    const Index n = q.size();
    double s = 0.0;
    for (Index i = 0; i < n; ++i)
        for (Index j = i + 1; j < n; ++j) s += (q[i] - q[j]) * (q[i] - q[j]);
    return s / (static_cast<double>(n) * static_cast<double>(n - 1));
}

double r_squared(const VectorXd& y, const MatrixXd& x) {
    MatrixXd design(x.rows(), x.cols() + 1);
    design << VectorXd::Ones(x.rows()), x;
    const VectorXd beta = (design.transpose() * design).inverse() * design.transpose() * y;
    const VectorXd res = y - design * beta;
    const double tss = (y.array() - y.mean()).square().sum();
    return 1.0 - res.squaredNorm() / tss;
}

StudyConfig small_config() {
    StudyConfig c;
    c.n = {60};
    c.tau_w = {0.3};
    c.reps = 20;
    c.threads = 1;
    c.k = 2;
    return c;
}

} // namespace

TEST_CASE("population has exactly the requested compliers") {
    for (double tau_w : {0.005, 0.05, 0.2, 0.5}) {
        Rng rng(static_cast<std::uint64_t>(tau_w * 1000) + 1);
        DgpConfig cfg{200, 5, tau_w};
        PotentialDataset p;
        try {
            p = generate_population(cfg, rng);
        } catch (const InputError&) {
            continue;  // rare infeasible draw at tau_w = 0.5
        }
        CHECK(p.complier_count() == std::llround(200 * tau_w));
        CHECK_NOTHROW(p.check());
        CHECK(p.x.colwise().sum().cwiseAbs().maxCoeff() < 1e-10);
        for (Index i = 0; i < p.n(); ++i) CHECK(p.w1[i] >= p.w0[i]);
    }
}

TEST_CASE("infeasible complier target is reported") {
    Rng rng(3);
    DgpConfig cfg{20, 2, 0.5};
    bool saw_error = false;
    for (int rep = 0; rep < 200 && !saw_error; ++rep) {
        try {
            generate_population(cfg, rng);
        } catch (const InputError& e) {
            saw_error = std::string(e.what()).find("infeasible tau_w_target") != std::string::npos;
        }
    }
    CHECK(saw_error);
    CHECK_THROWS_AS(DgpConfig({201, 5, 0.2}).check(), InputError);
    CHECK_THROWS_AS(DgpConfig({200, 5, 0.6}).check(), InputError);
}

TEST_CASE("noise variances give R^2 near one half at large n") {
    Rng rng(42);
    const StructuralDraw s = draw_structural({10000, 5, 0.3}, rng);
    CHECK(std::abs(r_squared(s.yw0, s.x) - 0.5) < 0.03);
    CHECK(std::abs(r_squared(s.yw1, s.x) - 0.5) < 0.03);
    CHECK(std::abs(r_squared(s.l0, s.x) - 0.5) < 0.03);
}

TEST_CASE("oracle quantities agree with pairwise definitions") {
    Rng rng(8);
    const PotentialDataset p = generate_population({40, 2, 0.3}, rng);
    const auto o = population_oracle(p, 20);
    CHECK(o.tau_w == doctest::Approx(0.3));
    const VectorXd a1 = p.y1 - o.tau * p.w1, a0 = p.y0 - o.tau * p.w0;
    const double v = pair_variance(a1) / 20 + pair_variance(a0) / 20 - pair_variance(a1 - a0) / 40;
    CHECK(o.v_a == doctest::Approx(v).epsilon(1e-10));
    CHECK(o.r2_a >= 0.0);
    CHECK(o.r2_a <= 1.0);
}

TEST_CASE("oracle edge cases") {
    SUBCASE("constant effect, no covariates") {
        PotentialDataset p;
        p.w0 = VectorXd::Zero(6);
        p.w1 = VectorXd::Ones(6);
        p.y0 = (VectorXd(6) << 1, 4, 2, 8, 5, 7).finished();
        p.y1 = p.y0.array() + 3.0;
        p.x = MatrixXd(6, 0);
        const auto o = population_oracle(p, 3);
        CHECK(o.tau == doctest::Approx(3.0));
        CHECK(pair_variance((p.y1 - o.tau * p.w1) - (p.y0 - o.tau * p.w0)) == doctest::Approx(0.0));
        CHECK(o.r2_a == 0.0);
    }
    SUBCASE("A linear in x gives R^2 = 1") {
        Rng rng(2);
        std::normal_distribution<double> nd;
        PotentialDataset p;
        const Index n = 30;
        p.x.resize(n, 2);
        for (Index i = 0; i < n; ++i) p.x.row(i) << nd(rng), nd(rng);
        p.w0 = VectorXd::Zero(n);
        p.w1 = VectorXd::Ones(n);
        p.y0 = 2.0 * p.x.col(0) - p.x.col(1);
        p.y1 = p.y0 + 0.5 * p.x.col(1) + VectorXd::Constant(n, 1.5);
        const auto o = population_oracle(p, 15);
        CHECK(o.r2_a == doctest::Approx(1.0).epsilon(1e-10));
    }
}

TEST_CASE("extended median") {
    const double inf = std::numeric_limits<double>::infinity();
    CHECK(extended_median({3, 1, 2}) == 2.0);
    CHECK(extended_median({1, 2, 3, 4}) == 2.5);
    CHECK(extended_median({1, 2, inf, inf}) == 2.0);
    CHECK(std::isinf(extended_median({1, inf, inf})));
    CHECK(std::isinf(extended_median({1, inf, inf, inf})));
    CHECK(std::isnan(extended_median({})));
}

TEST_CASE("config parsing") {
    const auto c = StudyConfig::parse(
        "# grid\n n = 100, 200\n tau_w = 0.1,0.3\n design = cre, rem\n p_a = 0.05\n"
        "adjustment = none,hc2\nreps = 50\nseed = 9\ngamma = 0.075\np_plus = 0.02\nalpha = 0.1\nk=3\n");
    CHECK(c.n == std::vector<Index>{100, 200});
    CHECK(c.tau_w.size() == 2);
    CHECK(c.designs.size() == 2);
    CHECK(c.adjustments[1] == Adjustment::HC2);
    CHECK(c.reps == 50);
    CHECK(c.seed == 9);
    CHECK(c.k == 3);
    CHECK(c.cells().size() == 16);
    CHECK(c.methods().size() == 5);

    try {
        StudyConfig::parse("n = 100\nbogus = 1\nalso_bad = 2\n");
        FAIL("expected unknown keys");
    } catch (const InputError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("bogus") != std::string::npos);
        CHECK(msg.find("also_bad") != std::string::npos);
    }
    CHECK_THROWS_AS(StudyConfig::parse("reps = ten\n"), InputError);
    CHECK_THROWS_AS(StudyConfig::parse("design = foo\n"), InputError);
    CHECK_THROWS_AS(StudyConfig::parse("n = 101\n"), InputError);
    CHECK_THROWS_AS(StudyConfig::parse("just a line\n"), InputError);
}

TEST_CASE("one-replication smoke run emits a well-formed table") {
    StudyConfig c = small_config();
    c.reps = 1;
    const auto t = run_study(c);
    REQUIRE(t.cells.size() == 1);
    CHECK(t.cells[0].methods.size() == 6);
    std::ostringstream csv;
    write_table_csv(t, csv);
    const std::string s = csv.str();
    CHECK(s.rfind("n,tau_w,design,p_a,adjustment,method,", 0) == 0);
    CHECK(std::count(s.begin(), s.end(), '\n') == 7);
    CHECK(table_json(t).find("\"cells\"") != std::string::npos);
}

TEST_CASE("study is deterministic across thread counts") {
    StudyConfig c = small_config();
    c.designs = {DesignKind::CRE, DesignKind::ReM};
    c.p_a = 0.1;
    std::ostringstream a, b;
    write_table_csv(run_study(c), a);
    c.threads = 3;
    write_table_csv(run_study(c), b);
    CHECK(a.str() == b.str());
}

TEST_CASE("fixed population and per-draw structure") {
    StudyConfig c = small_config();
    c.reps = 40;
    std::mutex mu;
    long draws = 0, wald_in_far = 0, with_first_stage = 0;
    const auto pop = study_population(c, 60, 0.3);
    const auto table = run_study(c, [&](const StudyCell&, long, const RegimeInputs& in,
                                        const std::vector<MethodOutcome>& out) {
        std::lock_guard<std::mutex> lock(mu);
        ++draws;
        if (in.tau_w_hat != 0.0) {
            ++with_first_stage;
            wald_in_far += out[1].set->contains_wald;
        }
    });
    CHECK(draws + table.cells[0].failures == 40);
    CHECK(wald_in_far == with_first_stage);
    CHECK(table.cells[0].oracle.tau_w == doctest::Approx(static_cast<double>(pop.complier_count()) / 60));
    for (const auto& m : table.cells[0].methods) {
        if (m.method == "wald_f10") CHECK(m.evaluated <= draws);
        else CHECK(m.evaluated == draws);
        if (m.evaluated) {
            CHECK(m.coverage >= 0.0);
            CHECK(m.coverage <= 1.0);
        }
    }
}
