#include "late/estimation.hpp"

#include "late/error.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace late {

double QuadraticForm::scale() const {
    return std::max({std::abs(v_y), std::abs(c_yw), std::abs(v_w)});
}

QuadraticForm as_quadratic(const SandwichCov& s) { return {s.v_y, s.c_yw, s.v_w}; }

VarianceComponents variance_components(const MomentSummary& s) {
    const double n1 = static_cast<double>(s.treated.n);
    const double n0 = static_cast<double>(s.control.n);
    const double n = static_cast<double>(s.n);
    const auto& t = s.treated;
    const auto& c = s.control;

    VarianceComponents out;
    out.plain = {t.var_y / n1 + c.var_y / n0, t.cov_yw / n1 + c.cov_yw / n0,
                 t.var_w / n1 + c.var_w / n0};
    if (!s.has_projections) return out;

    Eigen::LLT<MatrixXd> llt(s.sxx);
    if (llt.info() != Eigen::Success || !(llt.rcond() >= 1e-12))
        throw DegenerateError("degenerate covariates: covariance matrix is singular");
    const VectorXd dy = t.cov_yx - c.cov_yx;
    const VectorXd dw = t.cov_wx - c.cov_wx;
    const VectorXd sdw = llt.solve(dw);
    const double corr_yy = dy.dot(llt.solve(dy)) / n;
    const double corr_yw = dy.dot(sdw) / n;
    const double corr_ww = dw.dot(sdw) / n;

    out.rem = QuadraticForm{out.plain.v_y - corr_yy, out.plain.c_yw - corr_yw,
                            out.plain.v_w - corr_ww};
    out.projection = QuadraticForm{t.proj_var_y / n1 + c.proj_var_y / n0 - corr_yy,
                                   t.proj_cov_yw / n1 + c.proj_cov_yw / n0 - corr_yw,
                                   t.proj_var_w / n1 + c.proj_var_w / n0 - corr_ww};
    return out;
}

WaldEstimate wald(double tau_y_hat, double tau_w_hat, bool adjusted) {
    WaldEstimate e;
    e.tau_w_hat = tau_w_hat;
    e.adjusted = adjusted;
    e.tau_hat = tau_w_hat != 0.0 ? tau_y_hat / tau_w_hat : std::numeric_limits<double>::infinity();
    return e;
}

namespace {

void require_rem(const VarianceComponents& c) {
    if (!c.rem || !c.projection)
        throw InputError("ReM and projection variance families require covariates");
}

double clip01(double v) { return std::clamp(v, 0.0, 1.0); }

} // namespace

R2Result r2_of_tau(const VarianceComponents& c, double tau) {
    require_rem(c);
    const double den = (*c.rem)(tau);
    if (!(den > 0.0)) return {0.0, true};
    return {clip01((*c.projection)(tau) / den), false};
}

R2Result r2_w(const VarianceComponents& c) {
    require_rem(c);
    if (!(c.rem->v_w > 0.0)) return {0.0, true};
    return {clip01(c.projection->v_w / c.rem->v_w), false};
}

R2Result r2_star(const VarianceComponents& c) {
    require_rem(c);
    const QuadraticForm& num = *c.projection;
    const QuadraticForm& den = *c.rem;
    if (!(den.v_w > 0.0)) return {0.0, true};
    // A denominator that touches zero drives the guarded ratio to 0.
    if (den.c_yw * den.c_yw >= den.v_y * den.v_w) return {0.0, true};

    // R(t) = N(t)/D(t) with N = a0 + a1 t + a2 t^2, D = b0 + b1 t + b2 t^2.
    // d/dt R has numerator N'D - ND', formed coefficient by coefficient.
    const double a0 = num.v_y, a1 = -2.0 * num.c_yw, a2 = num.v_w;
    const double b0 = den.v_y, b1 = -2.0 * den.c_yw, b2 = den.v_w;
    const double c3 = 2.0 * a2 * b2 - 2.0 * a2 * b2;
    const double c2 = (a1 * b2 + 2.0 * a2 * b1) - (2.0 * a1 * b2 + a2 * b1);
    const double c1 = (a1 * b1 + 2.0 * a2 * b0) - (2.0 * a0 * b2 + a1 * b1);
    const double c0 = a1 * b0 - a0 * b1;

    double best = clip01(num.v_w / den.v_w);
    const auto roots = real_roots_up_to_cubic(c3, c2, c1, c0);
    for (double t : roots) best = std::min(best, r2_of_tau(c, t).rho);
    if (roots.empty()) best = std::min(best, r2_of_tau(c, 0.0).rho);
    return {best, false};
}

QuadraticForm family_form(const VarianceComponents& c, VarianceFamily family) {
    switch (family) {
    case VarianceFamily::Plain: return c.plain;
    case VarianceFamily::ReM:
        if (!c.rem) throw InputError("ReM variance family requires covariates");
        return *c.rem;
    case VarianceFamily::Sandwich:
        if (!c.sandwich) throw InputError("sandwich variance family requires a regression fit");
        return as_quadratic(*c.sandwich);
    }
    throw InputError("unknown variance family");
}

VarianceEstimate estimate_vA_hat(const VarianceComponents& c, double tau_hat, VarianceFamily family) {
    const QuadraticForm q = family_form(c, family);
    const double v = q(tau_hat);
    if (family == VarianceFamily::ReM) {
        if (v < 0.0) return {0.0, true};
        return {v, false};
    }
    const double tol = 1e-10 * q.scale() * std::max(1.0, tau_hat * tau_hat);
    if (v < -tol) throw std::logic_error("variance quadratic is negative; input is not a variance form");
    return {std::max(v, 0.0), false};
}

namespace {

double horner(double c3, double c2, double c1, double c0, double t) {
    return ((c3 * t + c2) * t + c1) * t + c0;
}

double polish(double c3, double c2, double c1, double c0, double t) {
    for (int i = 0; i < 2; ++i) {
        const double d = (3.0 * c3 * t + 2.0 * c2) * t + c1;
        if (d == 0.0) break;
        const double step = horner(c3, c2, c1, c0, t) / d;
        if (!std::isfinite(step)) break;
        t -= step;
    }
    return t;
}

std::vector<double> quadratic_roots(double a, double b, double c) {
    const double disc = b * b - 4.0 * a * c;
    if (disc < 0.0) return {};
    // Numerically stable pairing.
    const double q = -0.5 * (b + std::copysign(std::sqrt(disc), b));
    std::vector<double> r;
    if (q != 0.0) {
        r.push_back(q / a);
        r.push_back(c / q);
    } else {
        r.push_back(0.0);
    }
    return r;
}

std::vector<double> cubic_roots(double a, double b, double c, double d) {
    // Depressed cubic t = s - b/(3a): s^3 + p s + q = 0.
    const double B = b / a, C = c / a, D = d / a;
    const double p = C - B * B / 3.0;
    const double q = 2.0 * B * B * B / 27.0 - B * C / 3.0 + D;
    const double shift = -B / 3.0;
    const double disc = q * q / 4.0 + p * p * p / 27.0;
    std::vector<double> r;
    if (disc > 0.0) {
        const double sq = std::sqrt(disc);
        r.push_back(std::cbrt(-q / 2.0 + sq) + std::cbrt(-q / 2.0 - sq) + shift);
    } else if (p == 0.0) {
        r.push_back(shift);
    } else {
        const double m = 2.0 * std::sqrt(-p / 3.0);
        const double arg = std::clamp(3.0 * q / (p * m), -1.0, 1.0);
        const double theta = std::acos(arg) / 3.0;
        for (int k = 0; k < 3; ++k)
            r.push_back(m * std::cos(theta - 2.0 * std::numbers::pi * k / 3.0) + shift);
    }
    return r;
}

} // namespace

std::vector<double> real_roots_up_to_cubic(double c3, double c2, double c1, double c0) {
    const double scale = std::max({std::abs(c3), std::abs(c2), std::abs(c1), std::abs(c0)});
    if (scale == 0.0) return {};
    const double tol = 1e-12 * scale;
    std::vector<double> roots;
    if (std::abs(c3) > tol) {
        roots = cubic_roots(c3, c2, c1, c0);
    } else if (std::abs(c2) > tol) {
        roots = quadratic_roots(c2, c1, c0);
        c3 = 0.0;
    } else if (std::abs(c1) > tol) {
        roots = {-c0 / c1};
        c3 = c2 = 0.0;
    } else {
        return {};
    }
    for (auto& t : roots) t = polish(c3, c2, c1, c0, t);
    return roots;
}

} // namespace late
