#pragma once

#include "late/data_model.hpp"
#include "late/design.hpp"

#include <random>

namespace testutil {

using late::Index;
using late::MatrixXd;
using late::VectorXd;

inline MatrixXd gaussian_matrix(Index n, Index k, late::Rng& rng) {
    std::normal_distribution<double> nd;
    MatrixXd x(n, k);
    for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < k; ++j) x(i, j) = nd(rng);
    return x;
}

/// Observed data with n1 treated, K covariates, binary W loosely tied to Z and
/// an outcome with heteroskedastic noise.  Covariates are centered.
inline late::Dataset random_dataset(Index n, Index n1, Index k, std::uint64_t seed,
                                    double first_stage = 0.4) {
    late::Rng rng(seed);
    std::normal_distribution<double> nd;
    std::uniform_real_distribution<double> ud;
    const MatrixXd x = gaussian_matrix(n, k, rng);
    const auto treated = late::draw_treated_subset(n, n1, rng);
    VectorXd z = VectorXd::Zero(n), w(n), y(n);
    for (Index i : treated) z[i] = 1.0;
    for (Index i = 0; i < n; ++i) {
        const double s = k > 0 ? x.row(i).sum() : 0.0;
        const double p = 0.2 + first_stage * z[i] + (s > 0 ? 0.1 : 0.0);
        w[i] = ud(rng) < p ? 1.0 : 0.0;
        y[i] = 1.0 + 2.0 * w[i] + 0.5 * s + (1.0 + 0.5 * z[i]) * nd(rng);
    }
    return late::Dataset(z, w, y, x);
}

/// Finite-population covariance with divisor m - 1 of two equal-length vectors.
inline double cov(const VectorXd& a, const VectorXd& b) {
    const double ma = a.mean(), mb = b.mean();
    return ((a.array() - ma) * (b.array() - mb)).sum() / static_cast<double>(a.size() - 1);
}

/// Rows of `v` with z == arm.
inline VectorXd arm_vec(const VectorXd& v, const VectorXd& z, double arm) {
    std::vector<double> out;
    for (Index i = 0; i < v.size(); ++i)
        if (z[i] == arm) out.push_back(v[i]);
    return Eigen::Map<VectorXd>(out.data(), static_cast<Index>(out.size()));
}

inline MatrixXd arm_mat(const MatrixXd& x, const VectorXd& z, double arm) {
    Index m = 0;
    for (Index i = 0; i < z.size(); ++i) m += z[i] == arm;
    MatrixXd out(m, x.cols());
    for (Index i = 0, r = 0; i < z.size(); ++i)
        if (z[i] == arm) out.row(r++) = x.row(i);
    return out;
}

} // namespace testutil
