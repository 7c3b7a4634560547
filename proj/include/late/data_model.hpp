#pragma once

#include <Eigen/Core>

#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace late {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

/// One experimental unit as observed: assignment, receipt, outcome, covariates.
struct UnitData {
    int z = 0;
    int w = 0;
    double y = 0.0;
    VectorXd x;
};

/// Column-centered covariates together with the means that were removed.
struct CenteredCovariates {
    MatrixXd centered;
    VectorXd means;
};

/// Centers every column of `raw` at its mean.  Throws InputError naming the
/// first non-finite entry.
CenteredCovariates center_covariates(const MatrixXd& raw);

/**
 * The finite population of n units with one realized assignment.
 *
 * Storage is columnar.  Indicators are held as doubles (exactly 0.0 or 1.0)
 * because every consumer uses them arithmetically.  The covariate matrix is
 * centered at construction unless the caller asks for it to be kept as given;
 * the raw column means are retained for reporting.
 */
class Dataset {
public:
    enum class Covariates { Center, AsGiven };

    Dataset(VectorXd z, VectorXd w, VectorXd y, const MatrixXd& x,
            Covariates mode = Covariates::Center);

    /// Builds a dataset from unit records.  All units must share one K.
    static Dataset from_units(const std::vector<UnitData>& units,
                              Covariates mode = Covariates::Center);

    Index n() const { return z_.size(); }
    Index n1() const { return n1_; }
    Index n0() const { return n() - n1_; }
    Index k() const { return x_.cols(); }

    const VectorXd& z() const { return z_; }
    const VectorXd& w() const { return w_; }
    const VectorXd& y() const { return y_; }
    const MatrixXd& x() const { return x_; }
    const VectorXd& covariate_means() const { return covariate_means_; }

    UnitData unit(Index i) const;

    /// Same units, covariates and outcomes but a different assignment vector.
    /// Only meaningful when w and y do not depend on z (used by tests).
    Dataset with_assignment(const VectorXd& z) const;

private:
    VectorXd z_, w_, y_;
    MatrixXd x_;
    VectorXd covariate_means_;
    Index n1_ = 0;
};

/// Lists every violated dataset invariant; empty iff the dataset is analyzable.
std::vector<std::string> validate(const Dataset& dataset);

/// Potential treatment-received and outcome sequences for every unit.  Only the
/// simulation harness has these.
struct PotentialDataset {
    VectorXd w0, w1;
    VectorXd y0, y1;
    MatrixXd x;

    Index n() const { return w0.size(); }
    Index complier_count() const;

    /// Throws InputError if monotonicity fails or there is no complier.
    void check() const;

    /// Observed dataset for assignment z: W = W(z), Y = Y(z).  Covariates are
    /// kept as stored.
    Dataset observe(const VectorXd& z) const;
};

/// Average effect among compliers.  Throws InputError when there are none.
double true_sample_late(const PotentialDataset& p);

enum class DesignKind { CRE, ReM };

struct DesignSpec {
    DesignKind kind = DesignKind::CRE;
    Index n1 = 0;
    /// Acceptance threshold on the Mahalanobis distance; +inf for CRE.
    double a = std::numeric_limits<double>::infinity();
    std::optional<double> p_a;

    static DesignSpec cre(Index n1);
    static DesignSpec rem(Index n1, double a);
    /// ReM with a set to the p_a quantile of chi-square with k degrees of freedom.
    static DesignSpec rem_from_pa(Index n1, double p_a, Index k);
};

enum class Adjustment { None, EHW, HC2, HC3 };

std::string to_string(Adjustment a);
std::string to_string(DesignKind d);
/// Inverse of to_string; throws InputError on anything else.
Adjustment parse_adjustment(const std::string& text);
DesignKind parse_design_kind(const std::string& text);

struct AnalysisConfig {
    double alpha = 0.05;
    double gamma = 0.075;
    double p_plus = 0.01;
    Adjustment adjustment = Adjustment::None;
    DesignSpec design;

    /// Throws InputError when a level is outside (0, 1).
    void check() const;
};

} // namespace late
