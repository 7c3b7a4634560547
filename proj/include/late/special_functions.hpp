#pragma once

namespace late {

double normal_pdf(double x);
double normal_cdf(double x);

/// Standard normal quantile; |error| < 1e-10 on (0, 1).  Throws InputError
/// outside the open unit interval.
double normal_quantile(double p);

/// Regularized lower incomplete gamma P(s, x).
double gamma_p(double s, double x);

/// Chi-square CDF with k (possibly fractional) degrees of freedom.
double chisq_cdf(double x, double k);

/// Chi-square quantile at probability p in (0, 1), found by safeguarded
/// Newton iteration inside a monotone bisection bracket to relative
/// tolerance 1e-10.  Throws InputError for p outside (0, 1).
double chisq_quantile(double p, double k);

/// Alias used by the design layer: threshold a with P(chi2_k <= a) = p_a.
double threshold_from_pa(double p_a, long k);

} // namespace late
