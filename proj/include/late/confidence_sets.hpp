#pragma once

#include "late/estimation.hpp"

#include <limits>
#include <string>
#include <utility>

namespace late {

enum class SetKind { Point, Interval, TwoRays, LeftRay, RightRay, WholeLine };

std::string to_string(SetKind k);

/**
 * A subset of the real line of one of the shapes an inverted quadratic
 * inequality can produce.  Endpoint meaning depends on the kind:
 *
 *   Point      {lo}             (lo == hi)
 *   Interval   [lo, hi]
 *   TwoRays    (-inf, lo] U [hi, inf), lo < hi
 *   LeftRay    (-inf, hi]       (lo == -inf)
 *   RightRay   [lo, inf)        (hi == +inf)
 *   WholeLine  R                (lo == -inf, hi == +inf)
 */
struct ConfidenceSet {
    static constexpr double kInf = std::numeric_limits<double>::infinity();

    SetKind kind = SetKind::WholeLine;
    double lo = -kInf;
    double hi = kInf;
    /// Diagnostic: the first-stage estimate was nonzero and its Wald point
    /// lies in the set.
    bool contains_wald = false;
    /// Diagnostic: a Point was returned to absorb rounding where the exact set
    /// must contain the Wald point, or a Wald interval was requested with a
    /// zero first-stage estimate.
    bool degenerate = false;
    std::string method;

    static ConfidenceSet point(double v);
    static ConfidenceSet interval(double lo, double hi);
    static ConfidenceSet two_rays(double hi_left, double lo_right);
    static ConfidenceSet left_ray(double hi);
    static ConfidenceSet right_ray(double lo);
    static ConfidenceSet whole_line();

    bool bounded() const { return kind == SetKind::Point || kind == SetKind::Interval; }
    /// hi - lo for bounded sets, +inf otherwise.
    double length() const;
    /// Membership; `slack` widens every finite boundary outward.
    bool contains(double tau, double slack = 0.0) const;

    bool operator==(const ConfidenceSet& other) const = default;
};

/// Everything the interval and set constructors need for one regime.
enum class Regime { CRE, ReM, Adjusted };

std::string to_string(Regime r);

struct RegimeInputs {
    Regime regime = Regime::CRE;
    /// (tau_Y, tau_W) estimates: plain differences in means, or the Z
    /// coefficients of the interacted regressions for the adjusted regime.
    double tau_y_hat = 0.0;
    double tau_w_hat = 0.0;
    VarianceComponents components;
    /// Covariate count and ReM threshold; used for lambda lookups.
    Index k = 0;
    double a = std::numeric_limits<double>::infinity();

    WaldEstimate estimate() const { return wald(tau_y_hat, tau_w_hat, regime == Regime::Adjusted); }
    VarianceFamily family() const;
};

/// Computes moments and, for the adjusted regime, the interacted fits.  The
/// regime is Adjusted when config.adjustment != None, otherwise the design kind.
RegimeInputs prepare_regime(const Dataset& dataset, const AnalysisConfig& config);

/// {tau : (b_y - tau b_w)^2 <= crit^2 (qY - 2 tau qC + tau^2 qW)}.
/// Throws DegenerateError ("no identification") if the set is empty, which can
/// only happen for b_w = 0.
ConfidenceSet solve_quadratic_set(double b_y, double b_w, double crit, double qY, double qC,
                                  double qW);

inline ConfidenceSet solve_quadratic_set(double b_y, double b_w, double crit, const QuadraticForm& q) {
    return solve_quadratic_set(b_y, b_w, crit, q.v_y, q.c_yw, q.v_w);
}

/// Closed-form boundaries of the set above when g = crit^2 qW / b_w^2 < 1.
/// Throws InputError when g >= 1 or b_w = 0.
std::pair<double, double> fieller_endpoints(double b_y, double b_w, double crit, double qY,
                                            double qC, double qW);

/// center +- crit * sqrt(variance) / |b_w|; WholeLine flagged degenerate when b_w = 0.
ConfidenceSet wald_interval(double b_y, double b_w, double crit, double variance);

/// Critical value of the Wald interval: z_{alpha/2}, or lambda_{alpha/2}(R^2_A
/// at the Wald estimate) under ReM.
double wald_critical(const RegimeInputs& in, double alpha);

/// Critical value of the FAR set: z_{alpha/2}, or lambda_{alpha/2}(R*^2_A) under ReM.
double far_critical(const RegimeInputs& in, double alpha);

ConfidenceSet wald_ci(const RegimeInputs& in, double alpha);
ConfidenceSet far_set(const RegimeInputs& in, double alpha);

} // namespace late
