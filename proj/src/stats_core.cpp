#include "late/stats_core.hpp"

#include "late/error.hpp"

#include <Eigen/Cholesky>
#include <Eigen/QR>

#include <cmath>
#include <sstream>

namespace late {

namespace {

ArmMoments arm_moments(const Dataset& d, int arm, bool projections) {
    ArmMoments m;
    const Index k = d.k();
    for (Index i = 0; i < d.n(); ++i)
        if (d.z()[i] == static_cast<double>(arm)) ++m.n;
    if (m.n < 2) {
        std::ostringstream msg;
        msg << "arm z=" << arm << " has " << m.n << " units; at least 2 are required";
        throw InputError(msg.str());
    }
    MatrixXd xa(m.n, k);
    VectorXd ya(m.n), wa(m.n);
    for (Index i = 0, r = 0; i < d.n(); ++i) {
        if (d.z()[i] != static_cast<double>(arm)) continue;
        ya[r] = d.y()[i];
        wa[r] = d.w()[i];
        if (k > 0) xa.row(r) = d.x().row(i);
        ++r;
    }
    const double denom = static_cast<double>(m.n - 1);
    m.mean_y = ya.mean();
    m.mean_w = wa.mean();
    const VectorXd dy = ya.array() - m.mean_y;
    const VectorXd dw = wa.array() - m.mean_w;
    m.var_y = dy.squaredNorm() / denom;
    m.var_w = dw.squaredNorm() / denom;
    m.cov_yw = dy.dot(dw) / denom;
    if (k == 0 || !projections) return m;

    m.mean_x = xa.colwise().mean().transpose();
    const MatrixXd dx = xa.rowwise() - m.mean_x.transpose();
    m.cov_yx = dx.transpose() * dy / denom;
    m.cov_wx = dx.transpose() * dw / denom;
    m.sxx = dx.transpose() * dx / denom;
    Eigen::LLT<MatrixXd> llt(m.sxx);
    if (llt.info() != Eigen::Success || !(llt.rcond() >= 1e-12))
        throw DegenerateError("within-arm covariate covariance is singular (arm z=" +
                              std::to_string(arm) + ")");
    const VectorXd sy = llt.solve(m.cov_yx);
    m.proj_var_y = m.cov_yx.dot(sy);
    m.proj_var_w = m.cov_wx.dot(llt.solve(m.cov_wx));
    m.proj_cov_yw = sy.dot(m.cov_wx);
    return m;
}

} // namespace

MomentSummary summarize(const Dataset& d, bool projections) {
    MomentSummary s;
    s.n = d.n();
    s.k = d.k();
    s.treated = arm_moments(d, 1, projections);
    s.control = arm_moments(d, 0, projections);
    s.has_projections = projections && d.k() > 0;
    if (d.k() > 0) {
        const VectorXd mean = d.x().colwise().mean().transpose();
        const MatrixXd c = d.x().rowwise() - mean.transpose();
        s.sxx = c.transpose() * c / static_cast<double>(d.n() - 1);
    }
    return s;
}

double diff_in_means(const Dataset& d, const VectorXd& q) {
    if (q.size() != d.n()) throw InputError("diff_in_means: length mismatch");
    double s1 = 0.0, s0 = 0.0;
    Index n1 = 0, n0 = 0;
    for (Index i = 0; i < d.n(); ++i) {
        if (d.z()[i] == 1.0) {
            s1 += q[i];
            ++n1;
        } else {
            s0 += q[i];
            ++n0;
        }
    }
    if (n1 == 0 || n0 == 0) throw InputError("diff_in_means: empty arm");
    return s1 / static_cast<double>(n1) - s0 / static_cast<double>(n0);
}

std::string InteractedDesign::column_name(Index j, Index k) {
    if (j == 0) return "intercept";
    if (j == 1) return "z";
    if (j < 2 + k) return "x" + std::to_string(j - 1);
    return "z*x" + std::to_string(j - 1 - k);
}

InteractedDesign::InteractedDesign(const Dataset& d) {
    const Index n = d.n();
    const Index k = d.k();
    const Index p = 2 * (k + 1);
    if (n <= p) {
        std::ostringstream msg;
        msg << "interacted regression needs n > " << p << " units, got " << n;
        throw InputError(msg.str());
    }
    omega_.resize(n, p);
    omega_.col(0).setOnes();
    omega_.col(1) = d.z();
    if (k > 0) {
        omega_.middleCols(2, k) = d.x();
        omega_.rightCols(k) = d.x().array().colwise() * d.z().array();
    }

    // Equilibrate column norms before factorizing.
    scale_ = omega_.colwise().norm().transpose();
    for (Index j = 0; j < p; ++j) {
        if (scale_[j] == 0.0) {
            throw DegenerateError("interacted design is rank deficient: column '" +
                                  column_name(j, k) + "' is identically zero");
        }
    }
    const MatrixXd scaled = omega_ * scale_.cwiseInverse().asDiagonal();
    Eigen::ColPivHouseholderQR<MatrixXd> qr(scaled);
    qr.setThreshold(1e-10);
    if (qr.rank() < p) {
        std::ostringstream msg;
        msg << "interacted design is rank deficient (rank " << qr.rank() << " of " << p
            << "); collinear columns:";
        const auto& idx = qr.colsPermutation().indices();
        for (Index j = qr.rank(); j < p; ++j) msg << " '" << column_name(idx[j], k) << "'";
        throw DegenerateError(msg.str());
    }
    perm_ = qr.colsPermutation();
    const MatrixXd r = qr.matrixR().topLeftCorner(p, p).template triangularView<Eigen::Upper>();
    r_inv_ = r.template triangularView<Eigen::Upper>().solve(MatrixXd::Identity(p, p));
    q_thin_ = qr.householderQ() * MatrixXd::Identity(n, p);

    // (D^{-1} Omega' Omega D^{-1})^{-1} = P R^{-1} R^{-T} P'.
    const MatrixXd scaled_inv = perm_ * (r_inv_ * r_inv_.transpose()) * perm_.transpose();
    gram_inverse_ = scale_.cwiseInverse().asDiagonal() * scaled_inv * scale_.cwiseInverse().asDiagonal();
    hat_ = q_thin_.rowwise().squaredNorm();
    z_weights_ = omega_ * gram_inverse_.col(1);
}

VectorXd InteractedDesign::solve(const VectorXd& q) const {
    if (q.size() != n()) throw InputError("response length does not match design");
    // beta_scaled = P R^{-1} Q' q; beta = D^{-1} beta_scaled.
    const VectorXd scaled = perm_ * (r_inv_ * (q_thin_.transpose() * q));
    return scaled.cwiseQuotient(scale_);
}

InteractedOlsFit fit_interacted(std::shared_ptr<const InteractedDesign> design, const VectorXd& q) {
    InteractedOlsFit fit;
    fit.coefficients = design->solve(q);
    fit.residuals = q - design->omega() * fit.coefficients;
    fit.design = std::move(design);
    return fit;
}

InteractedOlsFit fit_interacted(const Dataset& d, const VectorXd& q) {
    return fit_interacted(std::make_shared<const InteractedDesign>(d), q);
}

namespace {

int hc_power(Adjustment flavor) {
    switch (flavor) {
    case Adjustment::EHW: return 0;
    case Adjustment::HC2: return 1;
    case Adjustment::HC3: return 2;
    case Adjustment::None: break;
    }
    throw InputError("sandwich flavor must be EHW, HC2 or HC3");
}

} // namespace

double sandwich_entry(const InteractedDesign& design, const VectorXd& u1, const VectorXd& u2,
                      Adjustment flavor) {
    const int power = hc_power(flavor);
    const VectorXd& c = design.z_weights();
    const VectorXd& h = design.hat_diagonal();
    double acc = 0.0;
    for (Index i = 0; i < design.n(); ++i) {
        double weight = 1.0;
        if (power > 0) {
            if (h[i] >= 1.0 - 1e-12)
                throw DegenerateError("leverage-one point at unit " + std::to_string(i));
            weight = std::pow(1.0 - h[i], -power);
        }
        acc += weight * c[i] * c[i] * u1[i] * u2[i];
    }
    return acc;
}

SandwichCov sandwich_cov(const InteractedOlsFit& fit_y, const InteractedOlsFit& fit_w,
                         Adjustment flavor) {
    if (!fit_y.design || fit_y.design != fit_w.design)
        throw InputError("sandwich_cov: fits must share one design");
    const auto& design = *fit_y.design;
    SandwichCov s;
    s.flavor = flavor;
    s.v_y = sandwich_entry(design, fit_y.residuals, fit_y.residuals, flavor);
    s.v_w = sandwich_entry(design, fit_w.residuals, fit_w.residuals, flavor);
    s.c_yw = sandwich_entry(design, fit_y.residuals, fit_w.residuals, flavor);
    return s;
}

} // namespace late
