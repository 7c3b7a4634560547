#pragma once

#include "late/stats_core.hpp"

#include <optional>
#include <vector>

namespace late {

/// q(tau) = v_y - 2 tau c_yw + tau^2 v_w.  Every variance in this library that
/// depends on the unknown effect has this shape.
struct QuadraticForm {
    double v_y = 0.0;
    double c_yw = 0.0;
    double v_w = 0.0;

    double operator()(double tau) const { return v_y - 2.0 * tau * c_yw + tau * tau * v_w; }
    /// Largest absolute coefficient, used to make tolerances relative.
    double scale() const;
};

QuadraticForm as_quadratic(const SandwichCov& s);

/**
 * Observable variance functionals.
 *
 *  - plain:      S^2_{Q(1)}/n1 + S^2_{Q(0)}/n0 and the matching covariance.
 *  - rem:        plain minus dS_Q' Sxx^{-1} dS_Q' / n, dS_Q = S_{Q(1),x} - S_{Q(0),x}.
 *  - projection: S^2_{Q(1)|x}/n1 + S^2_{Q(0)|x}/n0 minus the same correction.
 *  - sandwich:   robust covariance of the regression-adjusted estimates.
 */
struct VarianceComponents {
    QuadraticForm plain;
    std::optional<QuadraticForm> rem;
    std::optional<QuadraticForm> projection;
    std::optional<SandwichCov> sandwich;
};

enum class VarianceFamily { Plain, ReM, Sandwich };

/// Plain family always; ReM and projection families when the summary carries
/// covariate moments.  Throws DegenerateError if Sxx is singular.
VarianceComponents variance_components(const MomentSummary& summary);

struct WaldEstimate {
    double tau_hat = 0.0;
    double tau_w_hat = 0.0;
    bool adjusted = false;

    /// False when the first-stage estimate is exactly zero.
    bool defined() const { return tau_w_hat != 0.0; }
};

/// Ratio estimate; `tau_hat` is +inf (and `defined()` false) when tau_w_hat = 0.
WaldEstimate wald(double tau_y_hat, double tau_w_hat, bool adjusted = false);

/// R^2 value with a flag set when the denominator guard fired.
struct R2Result {
    double rho = 0.0;
    bool degenerate = false;
};

/// projection(tau) / rem(tau), clipped to [0, 1]; rho = 0 with the degenerate
/// flag when rem(tau) <= 0.  Requires the ReM and projection families.
R2Result r2_of_tau(const VarianceComponents& c, double tau);

/// Global minimum of r2_of_tau over the extended real line.
R2Result r2_star(const VarianceComponents& c);

/// R^2_W = V_{W|x} / V_W^{ReM}, clipped to [0, 1].
R2Result r2_w(const VarianceComponents& c);

struct VarianceEstimate {
    double value = 0.0;
    /// Set when a negative ReM-family value was replaced by 0.
    bool floored = false;
};

/// The chosen family's quadratic at tau_hat.  The ReM family is floored at 0;
/// the plain and sandwich families are nonnegative up to rounding.
VarianceEstimate estimate_vA_hat(const VarianceComponents& c, double tau_hat, VarianceFamily family);

QuadraticForm family_form(const VarianceComponents& c, VarianceFamily family);

/// Real roots of c3 t^3 + c2 t^2 + c1 t + c0, dropping to lower degree when
/// leading coefficients are negligible relative to the largest one.  Roots are
/// polished with two Newton steps.  An identically zero polynomial yields none.
std::vector<double> real_roots_up_to_cubic(double c3, double c2, double c1, double c0);

} // namespace late
