#pragma once

#include "late/data_model.hpp"

#include <Eigen/Cholesky>

#include <cstdint>
#include <random>
#include <vector>

namespace late {

using Rng = std::mt19937_64;

/// Seeded generator for replication `rep` of scenario cell `cell`.  Streams for
/// distinct (base, cell, rep) triples are independent for practical purposes.
Rng make_stream(std::uint64_t base_seed, std::uint64_t cell, std::uint64_t rep);

struct AssignmentVector {
    VectorXd z;
    /// Number of candidate draws consumed, including the accepted one.
    long accepted_after = 1;
    /// Balance criterion of the accepted draw; NaN when no covariates.
    double mahalanobis = 0.0;
};

/**
 * Mahalanobis imbalance M(z) = (n1 n0 / n) d' Sxx^{-1} d, d = xbar_1 - xbar_0,
 * with Sxx the finite-population covariance (divisor n - 1).
 *
 * The Cholesky factor of Sxx is computed once so that repeated evaluation in
 * rejection sampling costs O(n1 K + K^2).
 */
class MahalanobisBalance {
public:
    /// Throws InputError for K = 0 and DegenerateError if the reciprocal
    /// condition number of Sxx falls below 1e-12.
    explicit MahalanobisBalance(const MatrixXd& x);

    double operator()(const VectorXd& z) const;

    /// Same criterion from the list of treated row indices.
    double from_treated(const std::vector<Index>& treated) const;

    const MatrixXd& sxx() const { return sxx_; }

private:
    double from_difference(const VectorXd& diff, Index n1) const;

    const MatrixXd* x_;
    MatrixXd sxx_;
    Eigen::LLT<MatrixXd> llt_;
    VectorXd total_;
};

double mahalanobis(const MatrixXd& x, const VectorXd& z);

/// Uniformly random n1-subset of {0..n-1}, by partial Fisher-Yates shuffle.
std::vector<Index> draw_treated_subset(Index n, Index n1, Rng& rng);

/// CRE: one uniform draw.  ReM: repeated CRE draws until M <= a, giving up with
/// InfeasibleError after max_attempts.
AssignmentVector draw_assignment(const DesignSpec& design, const MatrixXd& x, Rng& rng,
                                 long max_attempts = 1000000);

/// Variant that reuses a precomputed balance object (the simulation hot path).
AssignmentVector draw_assignment(const DesignSpec& design, const MahalanobisBalance* balance,
                                 Index n, Rng& rng, long max_attempts = 1000000);

} // namespace late
