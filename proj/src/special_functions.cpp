#include "late/special_functions.hpp"

#include "late/error.hpp"

#include <cmath>
#include <limits>

namespace late {

namespace {

constexpr double kInvSqrt2Pi = 0.39894228040143267794;

// Acklam's rational approximation, relative error ~1e-9 before refinement.
double acklam(double p) {
    static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                               -2.759285104469687e+02, 1.383577518672690e+02,
                               -3.066479806614716e+01, 2.506628277459239e+00};
    static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                               -1.556989798598866e+02, 6.680131188771972e+01,
                               -1.328068155288572e+01};
    static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                               -2.400758277161838e+00, -2.549732539343734e+00,
                               4.374664141464968e+00, 2.938163982698783e+00};
    static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                               2.445134137142996e+00, 3.754408661907416e+00};
    constexpr double lo = 0.02425, hi = 1.0 - lo;
    if (p < lo) {
        const double q = std::sqrt(-2.0 * std::log(p));
        return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
               ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    if (p > hi) {
        const double q = std::sqrt(-2.0 * std::log1p(-p));
        return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
               ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    const double q = p - 0.5;
    const double r = q * q;
    return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
           (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
}

double gamma_p_series(double s, double x, double log_gamma_s) {
    double term = 1.0 / s;
    double sum = term;
    for (int n = 1; n < 1000; ++n) {
        term *= x / (s + n);
        sum += term;
        if (std::abs(term) < std::abs(sum) * 1e-16) break;
    }
    return sum * std::exp(-x + s * std::log(x) - log_gamma_s);
}

// Upper tail Q(s, x) by modified Lentz continued fraction.
double gamma_q_fraction(double s, double x, double log_gamma_s) {
    constexpr double tiny = 1e-300;
    double b = x + 1.0 - s;
    double c = 1.0 / tiny;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i < 1000; ++i) {
        const double an = -i * (i - s);
        b += 2.0;
        d = an * d + b;
        if (std::abs(d) < tiny) d = tiny;
        c = b + an / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double delta = d * c;
        h *= delta;
        if (std::abs(delta - 1.0) < 1e-16) break;
    }
    return std::exp(-x + s * std::log(x) - log_gamma_s) * h;
}

double gamma_p_with_lg(double s, double x, double lg) {
    if (x <= 0.0) return 0.0;
    if (std::isinf(x)) return 1.0;
    if (x < s + 1.0) return gamma_p_series(s, x, lg);
    return 1.0 - gamma_q_fraction(s, x, lg);
}

} // namespace

double normal_pdf(double x) { return kInvSqrt2Pi * std::exp(-0.5 * x * x); }

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) throw InputError("normal_quantile: p must lie in (0,1)");
    // Refine in the lower tail, where p carries full relative precision.
    if (p > 0.5) return -normal_quantile(1.0 - p);
    double x = acklam(p);
    // One Halley step on the erfc-based CDF brings the error to ~1e-15.
    const double e = normal_cdf(x) - p;
    const double u = e / normal_pdf(x);
    x -= u / (1.0 + 0.5 * x * u);
    return x;
}

double gamma_p(double s, double x) {
    if (!(s > 0.0)) throw InputError("gamma_p: shape must be positive");
    if (x < 0.0) throw InputError("gamma_p: x must be nonnegative");
    return gamma_p_with_lg(s, x, std::lgamma(s));
}

double chisq_cdf(double x, double k) {
    if (!(k > 0.0)) throw InputError("chisq_cdf: degrees of freedom must be positive");
    if (x < 0.0) throw InputError("chisq_cdf: x must be nonnegative");
    return gamma_p(0.5 * k, 0.5 * x);
}

double chisq_quantile(double p, double k) {
    if (!(p > 0.0 && p < 1.0)) throw InputError("chisq_quantile: p must lie in (0,1)");
    if (!(k > 0.0)) throw InputError("chisq_quantile: degrees of freedom must be positive");
    const double s = 0.5 * k;
    const double lg = std::lgamma(s);
    auto cdf = [&](double x) { return gamma_p_with_lg(s, 0.5 * x, lg); };

    double lo = 0.0;
    double hi = std::max(1.0, k);
    while (cdf(hi) < p) {
        lo = hi;
        hi *= 2.0;
    }
    // Wilson-Hilferty start, clamped into the bracket.
    const double zq = normal_quantile(p);
    const double t = 1.0 - 2.0 / (9.0 * k) + zq * std::sqrt(2.0 / (9.0 * k));
    double x = k * t * t * t;
    if (!(x > lo && x < hi)) x = 0.5 * (lo + hi);

    for (int iter = 0; iter < 200; ++iter) {
        const double f = cdf(x) - p;
        if (f < 0.0) lo = x; else hi = x;
        const double density =
            std::exp((s - 1.0) * std::log(0.5 * x) - 0.5 * x - lg) * 0.5;
        double next = x - f / density;
        if (!(next > lo && next < hi) || !std::isfinite(next)) next = 0.5 * (lo + hi);
        if (std::abs(next - x) <= 1e-12 * std::max(next, 1e-300) || hi - lo <= 1e-12 * hi)
            return next;
        x = next;
    }
    return x;
}

double threshold_from_pa(double p_a, long k) {
    if (!(p_a > 0.0 && p_a < 1.0)) throw InputError("p_a must lie in (0,1)");
    if (k < 1) throw InputError("threshold_from_pa needs at least one covariate");
    return chisq_quantile(p_a, static_cast<double>(k));
}

} // namespace late
