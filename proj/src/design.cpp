#include "late/design.hpp"

#include "late/error.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

namespace late {

Rng make_stream(std::uint64_t base_seed, std::uint64_t cell, std::uint64_t rep) {
    std::seed_seq seq{static_cast<std::uint32_t>(base_seed), static_cast<std::uint32_t>(base_seed >> 32),
                      static_cast<std::uint32_t>(cell), static_cast<std::uint32_t>(cell >> 32),
                      static_cast<std::uint32_t>(rep), static_cast<std::uint32_t>(rep >> 32)};
    return Rng(seq);
}

MahalanobisBalance::MahalanobisBalance(const MatrixXd& x) : x_(&x) {
    const Index n = x.rows();
    if (x.cols() < 1) throw InputError("Mahalanobis balance needs at least one covariate");
    if (n < 2) throw InputError("Mahalanobis balance needs at least two units");
    total_ = x.colwise().sum().transpose();
    const VectorXd mean = total_ / static_cast<double>(n);
    const MatrixXd centered = x.rowwise() - mean.transpose();
    sxx_ = centered.transpose() * centered / static_cast<double>(n - 1);
    llt_.compute(sxx_);
    if (llt_.info() != Eigen::Success || !(llt_.rcond() >= 1e-12))
        throw DegenerateError("degenerate covariates: covariance matrix is singular");
}

double MahalanobisBalance::from_difference(const VectorXd& diff, Index n1) const {
    const Index n = x_->rows();
    const Index n0 = n - n1;
    const VectorXd v = llt_.matrixL().solve(diff);
    return static_cast<double>(n1) * static_cast<double>(n0) / static_cast<double>(n) *
           v.squaredNorm();
}

double MahalanobisBalance::operator()(const VectorXd& z) const {
    const Index n = x_->rows();
    if (z.size() != n) throw InputError("assignment length does not match covariates");
    VectorXd sum1 = VectorXd::Zero(x_->cols());
    Index n1 = 0;
    for (Index i = 0; i < n; ++i)
        if (z[i] == 1.0) {
            sum1 += x_->row(i).transpose();
            ++n1;
        }
    if (n1 == 0 || n1 == n) throw InputError("both arms must be nonempty");
    const VectorXd diff = sum1 / static_cast<double>(n1) - (total_ - sum1) / static_cast<double>(n - n1);
    return from_difference(diff, n1);
}

double MahalanobisBalance::from_treated(const std::vector<Index>& treated) const {
    const Index n = x_->rows();
    const Index n1 = static_cast<Index>(treated.size());
    VectorXd sum1 = VectorXd::Zero(x_->cols());
    for (Index i : treated) sum1 += x_->row(i).transpose();
    const VectorXd diff = sum1 / static_cast<double>(n1) - (total_ - sum1) / static_cast<double>(n - n1);
    return from_difference(diff, n1);
}

double mahalanobis(const MatrixXd& x, const VectorXd& z) { return MahalanobisBalance(x)(z); }

std::vector<Index> draw_treated_subset(Index n, Index n1, Rng& rng) {
    std::vector<Index> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), Index{0});
    for (Index i = 0; i < n1; ++i) {
        std::uniform_int_distribution<Index> pick(i, n - 1);
        std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(pick(rng))]);
    }
    idx.resize(static_cast<std::size_t>(n1));
    return idx;
}

namespace {

VectorXd indicator(Index n, const std::vector<Index>& treated) {
    VectorXd z = VectorXd::Zero(n);
    for (Index i : treated) z[i] = 1.0;
    return z;
}

} // namespace

AssignmentVector draw_assignment(const DesignSpec& design, const MahalanobisBalance* balance,
                                 Index n, Rng& rng, long max_attempts) {
    if (design.n1 < 1 || design.n1 >= n) throw InputError("n1 must lie in [1, n-1]");
    AssignmentVector out;
    if (design.kind == DesignKind::CRE || std::isinf(design.a)) {
        auto treated = draw_treated_subset(n, design.n1, rng);
        out.z = indicator(n, treated);
        out.accepted_after = 1;
        out.mahalanobis = balance ? balance->from_treated(treated) : std::nan("");
        return out;
    }
    if (!balance) throw InputError("ReM requires covariates");
    for (long attempt = 1; attempt <= max_attempts; ++attempt) {
        auto treated = draw_treated_subset(n, design.n1, rng);
        const double m = balance->from_treated(treated);
        if (m <= design.a) {
            out.z = indicator(n, treated);
            out.accepted_after = attempt;
            out.mahalanobis = m;
            return out;
        }
    }
    std::ostringstream msg;
    msg << "acceptance region too small: no draw with M <= " << design.a << " in "
        << max_attempts << " attempts";
    throw InfeasibleError(msg.str(), 0.0);
}

AssignmentVector draw_assignment(const DesignSpec& design, const MatrixXd& x, Rng& rng,
                                 long max_attempts) {
    if (design.kind == DesignKind::ReM && !std::isinf(design.a)) {
        MahalanobisBalance balance(x);
        return draw_assignment(design, &balance, x.rows(), rng, max_attempts);
    }
    return draw_assignment(design, nullptr, x.rows(), rng, max_attempts);
}

} // namespace late
