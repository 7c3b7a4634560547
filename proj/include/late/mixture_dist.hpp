#pragma once

#include "late/design.hpp"

#include <cstdint>
#include <limits>
#include <memory>
#include <vector>

namespace late {

/**
 * Parameters of the rerandomization limit law
 *
 *     sqrt(1 - rho) * e0 + sqrt(rho) * L,   L = chi_{K,a} * S * sqrt(beta_K),
 *
 * where chi_{K,a}^2 is chi-square(K) truncated to [0, a], S a fair sign and
 * beta_K ~ Beta(1/2, (K-1)/2) (a point mass at 1 when K = 1).
 *
 * `tail` is the upper-tail probability of the quantile being tabulated: alpha/2
 * for confidence sets, gamma for the first-stage test.
 */
struct MixtureParams {
    Index k = 1;
    double a = std::numeric_limits<double>::infinity();
    double tail = 0.025;

    /// Throws InputError unless K >= 1, a > 0 and 0 < tail < 0.5.
    void check() const;
};

/// Draws of L_{K,a}.  The truncated chi-square is sampled exactly by inverting
/// the CDF on [0, F(a)].
std::vector<double> sample_L(const MixtureParams& params, Rng& rng, long count);

/// Upper quantile lambda(rho) of the mixture tabulated on a rho grid.
class MixtureQuantileTable {
public:
    static constexpr std::uint64_t kDefaultSeed = 0x5eed1a7eULL;
    static constexpr long kDefaultDraws = 400000;
    static constexpr int kDefaultGrid = 101;

    /// Common random numbers over the whole grid: one set of (e0, L) pairs is
    /// reused for every rho.  Raw estimates are capped at z_tail, pinned to
    /// z_tail at rho = 0, and projected onto non-increasing sequences.
    static MixtureQuantileTable build(const MixtureParams& params,
                                      std::uint64_t seed = kDefaultSeed,
                                      long draws = kDefaultDraws,
                                      int grid_points = kDefaultGrid);

    /// Linear interpolation on the grid.  Throws InputError outside [0, 1].
    double operator()(double rho) const;

    const MixtureParams& params() const { return params_; }
    const std::vector<double>& rho_grid() const { return rho_; }
    const std::vector<double>& lambda_values() const { return lambda_; }
    /// Monte Carlo estimates before capping and projection.
    const std::vector<double>& raw_values() const { return raw_; }
    /// Largest increase between consecutive raw estimates.
    double max_raw_violation() const;
    long draw_count() const { return draws_; }
    std::uint64_t seed() const { return seed_; }

private:
    MixtureParams params_;
    std::vector<double> rho_, lambda_, raw_;
    long draws_ = 0;
    std::uint64_t seed_ = 0;
};

/// Process-wide cache of default-seed tables keyed by (K, a, tail).  Each key
/// is built at most once; completed tables are immutable.
std::shared_ptr<const MixtureQuantileTable> lambda_table(const MixtureParams& params);

/// lambda(rho) from the cached default table.
double lambda_quantile(const MixtureParams& params, double rho);

/// Projection of `values` onto non-increasing sequences (pool adjacent violators).
std::vector<double> isotonic_nonincreasing(const std::vector<double>& values);

} // namespace late
