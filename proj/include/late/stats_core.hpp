#pragma once

#include "late/data_model.hpp"

#include <memory>
#include <optional>
#include <string>

namespace late {

/// Moments of Y, W and x within one treatment arm (divisor n_z - 1).
struct ArmMoments {
    Index n = 0;
    double mean_y = 0.0, mean_w = 0.0;
    double var_y = 0.0, var_w = 0.0, cov_yw = 0.0;
    VectorXd mean_x;
    /// S_{Q(z),x}: covariance of Q with the covariates inside the arm.
    VectorXd cov_yx, cov_wx;
    /// S_{xx,z}.
    MatrixXd sxx;
    /// S_{Y(z)|x}^2, S_{W(z)|x}^2 and the mixed S_{Y(z),x}' S_{xx,z}^{-1} S_{W(z),x}.
    double proj_var_y = 0.0, proj_var_w = 0.0, proj_cov_yw = 0.0;
};

/// Everything the variance formulas need from one realized assignment.
struct MomentSummary {
    ArmMoments treated;  // z = 1
    ArmMoments control;  // z = 0
    /// Finite-population covariate covariance (divisor n - 1); empty when K = 0.
    MatrixXd sxx;
    Index n = 0, k = 0;
    bool has_projections = false;

    const ArmMoments& arm(int z) const { return z == 1 ? treated : control; }
};

/// Arm-wise moments.  With K >= 1 and `projections` set, also the covariate
/// covariances and projection variances; throws DegenerateError when some
/// S_{xx,z} is singular.  Throws InputError when an arm has fewer than 2 units.
MomentSummary summarize(const Dataset& dataset, bool projections = true);

/// Difference in arm means of q under the dataset's assignment.
double diff_in_means(const Dataset& dataset, const VectorXd& q);

/**
 * Factorized design for the interacted regression of a response on
 * (1, Z, x, Z*x).  Built once per assignment and shared by the Y and W fits.
 */
class InteractedDesign {
public:
    /// Throws InputError if n <= 2(K+1) and DegenerateError on rank deficiency.
    explicit InteractedDesign(const Dataset& dataset);

    Index n() const { return omega_.rows(); }
    Index p() const { return omega_.cols(); }
    const MatrixXd& omega() const { return omega_; }
    const MatrixXd& gram_inverse() const { return gram_inverse_; }
    const VectorXd& hat_diagonal() const { return hat_; }

    /// Least-squares coefficients for response q.
    VectorXd solve(const VectorXd& q) const;

    /// Row of (Omega'Omega)^{-1} Omega' belonging to the Z coefficient.
    const VectorXd& z_weights() const { return z_weights_; }

    static std::string column_name(Index j, Index k);

private:
    MatrixXd omega_;
    VectorXd scale_;
    MatrixXd q_thin_;
    MatrixXd r_inv_;
    Eigen::PermutationMatrix<Eigen::Dynamic, Eigen::Dynamic> perm_;
    MatrixXd gram_inverse_;
    VectorXd hat_;
    VectorXd z_weights_;
};

struct InteractedOlsFit {
    std::shared_ptr<const InteractedDesign> design;
    /// Ordered as (intercept, Z, x_1..x_K, Z*x_1..Z*x_K).
    VectorXd coefficients;
    VectorXd residuals;

    /// Coefficient on Z, the regression-adjusted difference in means.
    double tau() const { return coefficients[1]; }
    const VectorXd& hat_diagonal() const { return design->hat_diagonal(); }
    const MatrixXd& gram_inverse() const { return design->gram_inverse(); }
};

InteractedOlsFit fit_interacted(std::shared_ptr<const InteractedDesign> design, const VectorXd& q);
InteractedOlsFit fit_interacted(const Dataset& dataset, const VectorXd& q);

/// Robust (co)variances of the Z coefficients of two fits on one design.
struct SandwichCov {
    double v_y = 0.0;
    double c_yw = 0.0;
    double v_w = 0.0;
    Adjustment flavor = Adjustment::EHW;

    /// Robust variance of the Z coefficient for residuals u_Y - tau u_W.
    double quadratic(double tau) const { return v_y - 2.0 * tau * c_yw + tau * tau * v_w; }
};

/// Sandwich with weights (1 - h_i)^{-(j-1)}: j = 1, 2, 3 for EHW, HC2, HC3.
/// Throws InputError if the fits do not share a design, and DegenerateError
/// for HC2/HC3 when some h_i >= 1 - 1e-12.
SandwichCov sandwich_cov(const InteractedOlsFit& fit_y, const InteractedOlsFit& fit_w,
                         Adjustment flavor);

/// Sandwich entry for an arbitrary pair of residual vectors on `design`.
double sandwich_entry(const InteractedDesign& design, const VectorXd& u1, const VectorXd& u2,
                      Adjustment flavor);

} // namespace late
