#include "late/confidence_sets.hpp"

#include "late/error.hpp"
#include "late/mixture_dist.hpp"
#include "late/special_functions.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

namespace late {

std::string to_string(SetKind k) {
    switch (k) {
    case SetKind::Point: return "point";
    case SetKind::Interval: return "interval";
    case SetKind::TwoRays: return "two_rays";
    case SetKind::LeftRay: return "left_ray";
    case SetKind::RightRay: return "right_ray";
    case SetKind::WholeLine: return "whole_line";
    }
    return "?";
}

std::string to_string(Regime r) {
    switch (r) {
    case Regime::CRE: return "cre";
    case Regime::ReM: return "rem";
    case Regime::Adjusted: return "adjusted";
    }
    return "?";
}

ConfidenceSet ConfidenceSet::point(double v) {
    ConfidenceSet s;
    s.kind = SetKind::Point;
    s.lo = s.hi = v;
    return s;
}

ConfidenceSet ConfidenceSet::interval(double lo, double hi) {
    ConfidenceSet s;
    s.kind = SetKind::Interval;
    s.lo = lo;
    s.hi = hi;
    return s;
}

ConfidenceSet ConfidenceSet::two_rays(double hi_left, double lo_right) {
    ConfidenceSet s;
    s.kind = SetKind::TwoRays;
    s.lo = hi_left;
    s.hi = lo_right;
    return s;
}

ConfidenceSet ConfidenceSet::left_ray(double hi) {
    ConfidenceSet s;
    s.kind = SetKind::LeftRay;
    s.hi = hi;
    return s;
}

ConfidenceSet ConfidenceSet::right_ray(double lo) {
    ConfidenceSet s;
    s.kind = SetKind::RightRay;
    s.lo = lo;
    return s;
}

ConfidenceSet ConfidenceSet::whole_line() { return ConfidenceSet{}; }

double ConfidenceSet::length() const {
    if (kind == SetKind::Point) return 0.0;
    if (kind == SetKind::Interval) return hi - lo;
    return kInf;
}

bool ConfidenceSet::contains(double tau, double slack) const {
    switch (kind) {
    case SetKind::Point:
    case SetKind::Interval: return tau >= lo - slack && tau <= hi + slack;
    case SetKind::TwoRays: return tau <= lo + slack || tau >= hi - slack;
    case SetKind::LeftRay: return tau <= hi + slack;
    case SetKind::RightRay: return tau >= lo - slack;
    case SetKind::WholeLine: return true;
    }
    return false;
}

VarianceFamily RegimeInputs::family() const {
    switch (regime) {
    case Regime::CRE: return VarianceFamily::Plain;
    case Regime::ReM: return VarianceFamily::ReM;
    case Regime::Adjusted: return VarianceFamily::Sandwich;
    }
    return VarianceFamily::Plain;
}

RegimeInputs prepare_regime(const Dataset& dataset, const AnalysisConfig& config) {
    config.check();
    RegimeInputs in;
    in.k = dataset.k();
    in.a = config.design.kind == DesignKind::ReM ? config.design.a : ConfidenceSet::kInf;
    if (config.adjustment != Adjustment::None) {
        in.regime = Regime::Adjusted;
    } else {
        in.regime = config.design.kind == DesignKind::ReM ? Regime::ReM : Regime::CRE;
    }
    if (in.regime != Regime::CRE && dataset.k() == 0)
        throw InputError("rerandomization and regression adjustment require covariates");

    const MomentSummary summary = summarize(dataset, in.regime == Regime::ReM);
    in.components = variance_components(summary);
    if (in.regime == Regime::Adjusted) {
        auto design = std::make_shared<const InteractedDesign>(dataset);
        const auto fy = fit_interacted(design, dataset.y());
        const auto fw = fit_interacted(design, dataset.w());
        in.tau_y_hat = fy.tau();
        in.tau_w_hat = fw.tau();
        in.components.sandwich = sandwich_cov(fy, fw, config.adjustment);
    } else {
        in.tau_y_hat = summary.treated.mean_y - summary.control.mean_y;
        in.tau_w_hat = summary.treated.mean_w - summary.control.mean_w;
    }
    return in;
}

namespace {

void tag_wald(ConfidenceSet& s, double b_y, double b_w) {
    if (b_w == 0.0) return;
    const double w = b_y / b_w;
    s.contains_wald = s.contains(w, 1e-9 * (1.0 + std::abs(w)));
}

} // namespace

ConfidenceSet solve_quadratic_set(double b_y, double b_w, double crit, double qY, double qC,
                                  double qW) {
    if (qY < 0.0 || qW < 0.0) throw InputError("quadratic set: variances must be nonnegative");
    const double c2 = crit * crit;
    const double A = b_w * b_w - c2 * qW;
    const double B = -2.0 * (b_y * b_w - c2 * qC);
    const double C = b_y * b_y - c2 * qY;
    const double tol = 1e-12 * std::max(b_w * b_w, c2 * qW);
    const double disc = B * B - 4.0 * A * C;

    auto roots = [&]() {
        const double q = -0.5 * (B + std::copysign(std::sqrt(disc), B));
        double r1 = q / A, r2 = q != 0.0 ? C / q : r1;
        if (r1 > r2) std::swap(r1, r2);
        return std::pair{r1, r2};
    };
    auto roundoff_point = [&]() {
        auto s = ConfidenceSet::point(b_y / b_w);
        s.degenerate = true;
        return s;
    };

    ConfidenceSet out;
    if (A > tol) {
        if (disc >= 0.0) {
            auto [r1, r2] = roots();
            out = ConfidenceSet::interval(r1, r2);
        } else {
            out = roundoff_point();
        }
    } else if (A < -tol) {
        if (disc > 0.0) {
            auto [r1, r2] = roots();
            out = ConfidenceSet::two_rays(r1, r2);
        } else {
            out = ConfidenceSet::whole_line();
        }
    } else if (B > 0.0) {
        out = ConfidenceSet::left_ray(-C / B);
    } else if (B < 0.0) {
        out = ConfidenceSet::right_ray(-C / B);
    } else if (C <= 0.0) {
        out = ConfidenceSet::whole_line();
    } else if (b_w == 0.0) {
        throw DegenerateError("no identification: confidence set is empty with zero first stage");
    } else {
        out = roundoff_point();
    }
    tag_wald(out, b_y, b_w);
    return out;
}

std::pair<double, double> fieller_endpoints(double b_y, double b_w, double crit, double qY,
                                            double qC, double qW) {
    if (b_w == 0.0) throw InputError("Fieller endpoints need a nonzero first stage");
    const double r = crit * crit / (b_w * b_w);
    const double g = r * qW;
    if (g >= 1.0) throw InputError("Fieller endpoints exist only for g < 1");
    const double w = b_y / b_w;
    const double center = w - r * qC;
    // q(w) - g (qY - qC^2/qW), written without dividing by qW.
    const double radicand = qY + w * w * qW - 2.0 * w * qC - r * (qY * qW - qC * qC);
    const double half = crit / std::abs(b_w) * std::sqrt(std::max(radicand, 0.0));
    return {(center - half) / (1.0 - g), (center + half) / (1.0 - g)};
}

ConfidenceSet wald_interval(double b_y, double b_w, double crit, double variance) {
    if (b_w == 0.0) {
        auto s = ConfidenceSet::whole_line();
        s.degenerate = true;
        return s;
    }
    const double center = b_y / b_w;
    const double half = crit * std::sqrt(std::max(variance, 0.0)) / std::abs(b_w);
    auto s = ConfidenceSet::interval(center - half, center + half);
    s.contains_wald = true;
    return s;
}

double wald_critical(const RegimeInputs& in, double alpha) {
    if (in.regime != Regime::ReM) return normal_quantile(1.0 - alpha / 2.0);
    const double rho = r2_of_tau(in.components, in.estimate().tau_hat).rho;
    return lambda_quantile(MixtureParams{in.k, in.a, alpha / 2.0}, rho);
}

double far_critical(const RegimeInputs& in, double alpha) {
    if (in.regime != Regime::ReM) return normal_quantile(1.0 - alpha / 2.0);
    const double rho = r2_star(in.components).rho;
    return lambda_quantile(MixtureParams{in.k, in.a, alpha / 2.0}, rho);
}

ConfidenceSet wald_ci(const RegimeInputs& in, double alpha) {
    const auto est = in.estimate();
    ConfidenceSet s;
    if (!est.defined()) {
        s = wald_interval(in.tau_y_hat, 0.0, 0.0, 0.0);
    } else {
        const double v = estimate_vA_hat(in.components, est.tau_hat, in.family()).value;
        s = wald_interval(in.tau_y_hat, in.tau_w_hat, wald_critical(in, alpha), v);
    }
    s.method = "wald";
    return s;
}

ConfidenceSet far_set(const RegimeInputs& in, double alpha) {
    auto s = solve_quadratic_set(in.tau_y_hat, in.tau_w_hat, far_critical(in, alpha),
                                 family_form(in.components, in.family()));
    s.method = "far";
    return s;
}

} // namespace late
