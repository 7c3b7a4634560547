#include "late/data_model.hpp"

#include "late/error.hpp"
#include "late/special_functions.hpp"

#include <cmath>
#include <sstream>

namespace late {

CenteredCovariates center_covariates(const MatrixXd& raw) {
    for (Index j = 0; j < raw.cols(); ++j)
        for (Index i = 0; i < raw.rows(); ++i)
            if (!std::isfinite(raw(i, j))) {
                std::ostringstream msg;
                msg << "non-finite covariate at row " << i << ", column " << j;
                throw InputError(msg.str());
            }
    CenteredCovariates out;
    if (raw.rows() == 0) {
        out.centered = raw;
        out.means = VectorXd::Zero(raw.cols());
        return out;
    }
    out.means = raw.colwise().mean().transpose();
    out.centered = raw.rowwise() - out.means.transpose();
    return out;
}

Dataset::Dataset(VectorXd z, VectorXd w, VectorXd y, const MatrixXd& x, Covariates mode)
    : z_(std::move(z)), w_(std::move(w)), y_(std::move(y)) {
    const Index n = z_.size();
    if (w_.size() != n || y_.size() != n || x.rows() != n)
        throw InputError("dataset columns have inconsistent lengths");
    if (mode == Covariates::Center) {
        auto c = center_covariates(x);
        x_ = std::move(c.centered);
        covariate_means_ = std::move(c.means);
    } else {
        x_ = x;
        covariate_means_ = VectorXd::Zero(x.cols());
    }
    n1_ = 0;
    for (Index i = 0; i < n; ++i)
        if (z_[i] == 1.0) ++n1_;
}

Dataset Dataset::from_units(const std::vector<UnitData>& units, Covariates mode) {
    const Index n = static_cast<Index>(units.size());
    const Index k = n > 0 ? units.front().x.size() : 0;
    VectorXd z(n), w(n), y(n);
    MatrixXd x(n, k);
    for (Index i = 0; i < n; ++i) {
        const auto& u = units[static_cast<std::size_t>(i)];
        if (u.x.size() != k) {
            std::ostringstream msg;
            msg << "unit " << i << " has " << u.x.size() << " covariates, expected " << k;
            throw InputError(msg.str());
        }
        z[i] = u.z;
        w[i] = u.w;
        y[i] = u.y;
        if (k > 0) x.row(i) = u.x.transpose();
    }
    return Dataset(std::move(z), std::move(w), std::move(y), x, mode);
}

UnitData Dataset::unit(Index i) const {
    return UnitData{static_cast<int>(z_[i]), static_cast<int>(w_[i]), y_[i],
                    x_.row(i).transpose()};
}

Dataset Dataset::with_assignment(const VectorXd& z) const {
    Dataset out = *this;
    if (z.size() != n()) throw InputError("assignment length does not match dataset");
    out.z_ = z;
    out.n1_ = 0;
    for (Index i = 0; i < z.size(); ++i)
        if (z[i] == 1.0) ++out.n1_;
    return out;
}

std::vector<std::string> validate(const Dataset& d) {
    std::vector<std::string> report;
    auto binary = [](double v) { return v == 0.0 || v == 1.0; };
    for (Index i = 0; i < d.n(); ++i) {
        if (!binary(d.z()[i])) report.push_back("z not binary at row " + std::to_string(i));
        if (!binary(d.w()[i])) report.push_back("w not binary at row " + std::to_string(i));
        if (!std::isfinite(d.y()[i])) report.push_back("y not finite at row " + std::to_string(i));
    }
    if (d.n1() < 2) report.emplace_back("n1 < 2");
    if (d.n0() < 2) report.emplace_back("n0 < 2");
    if (d.n() > 0) {
        for (Index j = 0; j < d.k(); ++j) {
            const double scale = std::max(1.0, d.x().col(j).cwiseAbs().maxCoeff());
            if (std::abs(d.x().col(j).mean()) > 1e-10 * scale)
                report.push_back("covariates not centered (column " + std::to_string(j) + ")");
        }
    }
    return report;
}

Index PotentialDataset::complier_count() const {
    Index c = 0;
    for (Index i = 0; i < n(); ++i)
        if (w1[i] == 1.0 && w0[i] == 0.0) ++c;
    return c;
}

void PotentialDataset::check() const {
    const Index n = w0.size();
    if (w1.size() != n || y0.size() != n || y1.size() != n || x.rows() != n)
        throw InputError("potential dataset columns have inconsistent lengths");
    for (Index i = 0; i < n; ++i)
        if (w1[i] < w0[i])
            throw InputError("monotonicity violated at unit " + std::to_string(i));
    if (complier_count() < 1) throw InputError("Assumption 1 violated: no complier");
}

Dataset PotentialDataset::observe(const VectorXd& z) const {
    const Index n = this->n();
    if (z.size() != n) throw InputError("assignment length does not match population");
    VectorXd w(n), y(n);
    for (Index i = 0; i < n; ++i) {
        const bool treated = z[i] == 1.0;
        w[i] = treated ? w1[i] : w0[i];
        y[i] = treated ? y1[i] : y0[i];
    }
    return Dataset(z, std::move(w), std::move(y), x, Dataset::Covariates::AsGiven);
}

double true_sample_late(const PotentialDataset& p) {
    double sum = 0.0;
    Index count = 0;
    for (Index i = 0; i < p.n(); ++i) {
        if (p.w1[i] == 1.0 && p.w0[i] == 0.0) {
            sum += p.y1[i] - p.y0[i];
            ++count;
        }
    }
    if (count == 0) throw InputError("Assumption 1 violated: no complier");
    return sum / static_cast<double>(count);
}

DesignSpec DesignSpec::cre(Index n1) {
    DesignSpec d;
    d.kind = DesignKind::CRE;
    d.n1 = n1;
    return d;
}

DesignSpec DesignSpec::rem(Index n1, double a) {
    if (!(a > 0.0)) throw InputError("ReM threshold a must be positive");
    DesignSpec d;
    d.kind = DesignKind::ReM;
    d.n1 = n1;
    d.a = a;
    return d;
}

DesignSpec DesignSpec::rem_from_pa(Index n1, double p_a, Index k) {
    DesignSpec d = rem(n1, chisq_quantile(p_a, static_cast<double>(k)));
    d.p_a = p_a;
    return d;
}

std::string to_string(Adjustment a) {
    switch (a) {
    case Adjustment::None: return "none";
    case Adjustment::EHW: return "ehw";
    case Adjustment::HC2: return "hc2";
    case Adjustment::HC3: return "hc3";
    }
    return "?";
}

std::string to_string(DesignKind d) { return d == DesignKind::CRE ? "cre" : "rem"; }

Adjustment parse_adjustment(const std::string& text) {
    for (auto a : {Adjustment::None, Adjustment::EHW, Adjustment::HC2, Adjustment::HC3})
        if (text == to_string(a)) return a;
    throw InputError("unknown adjustment '" + text + "' (expected none, ehw, hc2, hc3)");
}

DesignKind parse_design_kind(const std::string& text) {
    if (text == "cre") return DesignKind::CRE;
    if (text == "rem") return DesignKind::ReM;
    throw InputError("unknown design '" + text + "' (expected cre, rem)");
}

void AnalysisConfig::check() const {
    auto in_unit = [](double v) { return v > 0.0 && v < 1.0; };
    if (!in_unit(alpha)) throw InputError("alpha must lie in (0,1)");
    if (!in_unit(gamma)) throw InputError("gamma must lie in (0,1)");
    if (!in_unit(p_plus)) throw InputError("p_plus must lie in (0,1)");
}

} // namespace late
