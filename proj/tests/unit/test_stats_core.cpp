#include "helpers.hpp"

#include "late/error.hpp"
#include "late/stats_core.hpp"

#include <Eigen/LU>
#include <doctest.h>

#include <cmath>

using namespace late;
using testutil::arm_mat;
using testutil::arm_vec;
using testutil::cov;

namespace {

// Brute-force double loops over the arm, no Eigen reductions.
double loop_cov(const VectorXd& a, const VectorXd& b) {
    double ma = 0, mb = 0;
    for (Index i = 0; i < a.size(); ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= a.size();
    mb /= b.size();
    double s = 0;
    for (Index i = 0; i < a.size(); ++i) s += (a[i] - ma) * (b[i] - mb);
    return s / (a.size() - 1);
}

MatrixXd omega_of(const Dataset& d) {
    const Index k = d.k();
    MatrixXd om(d.n(), 2 * (k + 1));
    for (Index i = 0; i < d.n(); ++i) {
        om(i, 0) = 1.0;
        om(i, 1) = d.z()[i];
        for (Index j = 0; j < k; ++j) {
            om(i, 2 + j) = d.x()(i, j);
            om(i, 2 + k + j) = d.z()[i] * d.x()(i, j);
        }
    }
    return om;
}

double sandwich_oracle(const MatrixXd& om, const VectorXd& u1, const VectorXd& u2, int power) {
    const MatrixXd g_inv = (om.transpose() * om).inverse();
    const MatrixXd hat = om * g_inv * om.transpose();
    VectorXd wts(om.rows());
    for (Index i = 0; i < om.rows(); ++i)
        wts[i] = std::pow(1.0 - hat(i, i), -power) * u1[i] * u2[i];
    const MatrixXd meat = om.transpose() * wts.asDiagonal() * om;
    return (g_inv * meat * g_inv)(1, 1);
}

} // namespace

TEST_CASE("arm moments agree with brute-force loops") {
    const Dataset d = testutil::random_dataset(60, 25, 3, 17);
    const MomentSummary s = summarize(d);
    CHECK(s.has_projections);
    for (int arm : {0, 1}) {
        const auto& m = s.arm(arm);
        const VectorXd y = arm_vec(d.y(), d.z(), arm), w = arm_vec(d.w(), d.z(), arm);
        const MatrixXd x = arm_mat(d.x(), d.z(), arm);
        CHECK(m.n == y.size());
        CHECK(m.mean_y == doctest::Approx(y.mean()).epsilon(1e-12));
        CHECK(m.var_y == doctest::Approx(loop_cov(y, y)).epsilon(1e-10));
        CHECK(m.var_w == doctest::Approx(loop_cov(w, w)).epsilon(1e-10));
        CHECK(m.cov_yw == doctest::Approx(loop_cov(y, w)).epsilon(1e-10));
        MatrixXd sxx(3, 3);
        VectorXd syx(3), swx(3);
        for (Index j = 0; j < 3; ++j) {
            syx[j] = loop_cov(x.col(j), y);
            swx[j] = loop_cov(x.col(j), w);
            for (Index l = 0; l < 3; ++l) sxx(j, l) = loop_cov(x.col(j), x.col(l));
        }
        CHECK((m.cov_yx - syx).cwiseAbs().maxCoeff() < 1e-10);
        CHECK((m.cov_wx - swx).cwiseAbs().maxCoeff() < 1e-10);
        CHECK((m.sxx - sxx).cwiseAbs().maxCoeff() < 1e-10);
        const MatrixXd inv = sxx.inverse();
        CHECK(m.proj_var_y == doctest::Approx(syx.dot(inv * syx)).epsilon(1e-8));
        CHECK(m.proj_var_w == doctest::Approx(swx.dot(inv * swx)).epsilon(1e-8));
        CHECK(m.proj_cov_yw == doctest::Approx(syx.dot(inv * swx)).epsilon(1e-8));
    }
}

TEST_CASE("covariance with x is the same with arm or overall outcome means") {
    // S_{Q(z),x} centers x at the arm mean, so the outcome's centering
    // constant drops out.
    const Dataset d = testutil::random_dataset(40, 20, 2, 23);
    const MomentSummary s = summarize(d);
    const VectorXd y1 = arm_vec(d.y(), d.z(), 1);
    const MatrixXd x1 = arm_mat(d.x(), d.z(), 1);
    const double ybar = d.y().mean();
    for (Index j = 0; j < 2; ++j) {
        const VectorXd xc = x1.col(j).array() - x1.col(j).mean();
        const double with_overall = (xc.array() * (y1.array() - ybar)).sum() / (y1.size() - 1);
        CHECK(s.treated.cov_yx[j] == doctest::Approx(with_overall).epsilon(1e-12));
    }
}

TEST_CASE("moments reject tiny arms and singular within-arm covariates") {
    VectorXd z(5), w = VectorXd::Zero(5), y = VectorXd::LinSpaced(5, 0, 4);
    z << 1, 0, 0, 0, 0;
    CHECK_THROWS_AS(summarize(Dataset(z, w, y, MatrixXd(5, 0))), InputError);

    Rng rng(1);
    MatrixXd x = testutil::gaussian_matrix(8, 3, rng);
    VectorXd z2(8);
    z2 << 1, 1, 1, 0, 0, 0, 0, 0;  // 3 treated units cannot span 3 centered dimensions
    CHECK_THROWS_AS(summarize(Dataset(z2, VectorXd::Zero(8), VectorXd::Ones(8), x)), DegenerateError);
    CHECK_NOTHROW(summarize(Dataset(z2, VectorXd::Zero(8), VectorXd::Ones(8), x), false));
}

TEST_CASE("interacted OLS matches the normal equations") {
    const Dataset d = testutil::random_dataset(80, 35, 4, 31);
    const auto design = std::make_shared<const InteractedDesign>(d);
    const MatrixXd om = omega_of(d);
    const MatrixXd g_inv = (om.transpose() * om).inverse();
    CHECK((design->omega() - om).cwiseAbs().maxCoeff() == 0.0);
    CHECK((design->gram_inverse() - g_inv).cwiseAbs().maxCoeff() < 1e-8);

    const auto fy = fit_interacted(design, d.y());
    const VectorXd beta = g_inv * om.transpose() * d.y();
    CHECK((fy.coefficients - beta).cwiseAbs().maxCoeff() < 1e-8);
    CHECK((fy.residuals - (d.y() - om * beta)).cwiseAbs().maxCoeff() < 1e-8);
    CHECK((om.transpose() * fy.residuals).cwiseAbs().maxCoeff() < 1e-8);

    const MatrixXd hat = om * g_inv * om.transpose();
    CHECK((design->hat_diagonal() - hat.diagonal()).cwiseAbs().maxCoeff() < 1e-8);
    CHECK(design->hat_diagonal().sum() == doctest::Approx(2.0 * (4 + 1)).epsilon(1e-10));
    CHECK((design->z_weights() - om * g_inv.col(1)).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("Lin estimate decomposes into arm-wise regression intercepts") {
    const Dataset d = testutil::random_dataset(90, 45, 3, 37);
    const auto fy = fit_interacted(d, d.y());
    double arm_intercept[2];
    for (int arm : {0, 1}) {
        const VectorXd y = arm_vec(d.y(), d.z(), arm);
        const MatrixXd x = arm_mat(d.x(), d.z(), arm);
        const MatrixXd xc = x.rowwise() - x.colwise().mean();
        const VectorXd beta = (xc.transpose() * xc).inverse() * xc.transpose() * (y.array() - y.mean()).matrix();
        arm_intercept[arm] = y.mean() - x.colwise().mean().dot(beta);
    }
    CHECK(fy.tau() == doctest::Approx(arm_intercept[1] - arm_intercept[0]).epsilon(1e-8));
}

TEST_CASE("sandwich entries match the dense oracle for every flavor") {
    const Dataset d = testutil::random_dataset(70, 30, 3, 41);
    const auto design = std::make_shared<const InteractedDesign>(d);
    const auto fy = fit_interacted(design, d.y());
    const auto fw = fit_interacted(design, d.w());
    const MatrixXd om = omega_of(d);
    const std::pair<Adjustment, int> flavors[] = {
        {Adjustment::EHW, 0}, {Adjustment::HC2, 1}, {Adjustment::HC3, 2}};
    for (auto [flavor, power] : flavors) {
        const SandwichCov s = sandwich_cov(fy, fw, flavor);
        CHECK(s.v_y == doctest::Approx(sandwich_oracle(om, fy.residuals, fy.residuals, power)).epsilon(1e-8));
        CHECK(s.v_w == doctest::Approx(sandwich_oracle(om, fw.residuals, fw.residuals, power)).epsilon(1e-8));
        CHECK(s.c_yw == doctest::Approx(sandwich_oracle(om, fy.residuals, fw.residuals, power)).epsilon(1e-8));
    }
    CHECK(sandwich_cov(fy, fw, Adjustment::HC3).v_y > sandwich_cov(fy, fw, Adjustment::HC2).v_y);
    CHECK(sandwich_cov(fy, fw, Adjustment::HC2).v_y > sandwich_cov(fy, fw, Adjustment::EHW).v_y);
}

TEST_CASE("sandwich quadratic is linear in the residual combination") {
    const Dataset d = testutil::random_dataset(70, 35, 2, 43);
    const auto design = std::make_shared<const InteractedDesign>(d);
    const auto fy = fit_interacted(design, d.y());
    const auto fw = fit_interacted(design, d.w());
    for (auto flavor : {Adjustment::EHW, Adjustment::HC2, Adjustment::HC3}) {
        const SandwichCov s = sandwich_cov(fy, fw, flavor);
        for (double tau : {-3.0, -0.4, 0.0, 1.7, 12.0}) {
            const VectorXd a = d.y() - tau * d.w();
            const auto fa = fit_interacted(design, a);
            CHECK((fa.residuals - (fy.residuals - tau * fw.residuals)).cwiseAbs().maxCoeff() < 1e-10);
            CHECK(fa.tau() == doctest::Approx(fy.tau() - tau * fw.tau()).epsilon(1e-10));
            const double direct = sandwich_entry(*design, fa.residuals, fa.residuals, flavor);
            CHECK(s.quadratic(tau) == doctest::Approx(direct).epsilon(1e-10));
        }
    }
}

TEST_CASE("interacted design failures are explicit") {
    const Dataset small = testutil::random_dataset(8, 4, 3, 47);
    CHECK_THROWS_AS(InteractedDesign{small}, InputError);

    Rng rng(3);
    MatrixXd x = testutil::gaussian_matrix(30, 2, rng);
    x.col(1) = 3.0 * x.col(0);
    const Dataset d = testutil::random_dataset(30, 15, 2, 5);
    const Dataset collinear(d.z(), d.w(), d.y(), x);
    try {
        InteractedDesign design(collinear);
        FAIL("expected rank deficiency");
    } catch (const DegenerateError& e) {
        CHECK(std::string(e.what()).find("collinear") != std::string::npos);
    }

    const auto a = std::make_shared<const InteractedDesign>(d);
    const auto b = std::make_shared<const InteractedDesign>(d);
    CHECK_THROWS_AS(sandwich_cov(fit_interacted(a, d.y()), fit_interacted(b, d.w()), Adjustment::EHW),
                    InputError);
}

TEST_CASE("leverage-one points stop HC2 and HC3 but not EHW") {
    // K = 1 gives the treated arm two free parameters; with two treated units
    // both fit exactly and carry leverage one.
    VectorXd z(12), w(12), y(12);
    MatrixXd x(12, 1);
    for (Index i = 0; i < 12; ++i) {
        z[i] = i < 2 ? 1.0 : 0.0;
        w[i] = i % 2;
        y[i] = 0.3 * i;
        x(i, 0) = std::sin(1.0 + i);
    }
    const Dataset d(z, w, y, x);
    const auto design = std::make_shared<const InteractedDesign>(d);
    CHECK(design->hat_diagonal()[0] == doctest::Approx(1.0));
    const auto fy = fit_interacted(design, d.y());
    const auto fw = fit_interacted(design, d.w());
    CHECK_NOTHROW(sandwich_cov(fy, fw, Adjustment::EHW));
    CHECK_THROWS_WITH_AS(sandwich_cov(fy, fw, Adjustment::HC2), doctest::Contains("leverage-one"),
                         DegenerateError);
    CHECK_THROWS_AS(sandwich_cov(fy, fw, Adjustment::HC3), DegenerateError);
}
