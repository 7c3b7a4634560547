#pragma once

#include "late/two_stage.hpp"

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace late {

/// Rows of one stratum as read, covariates not yet centered.
struct StratumRows {
    std::string key;
    std::vector<double> z, w, y;
    std::vector<std::vector<double>> x;
    /// 1-based input line numbers, for messages.
    std::vector<long> lines;

    Dataset dataset() const;
};

/// CSV with header: required z, w, y; optional x1..xK (any names starting with
/// 'x'), optional stratum.  Without a stratum column all rows form stratum "all".
struct InputTable {
    std::vector<std::string> covariate_names;
    bool has_stratum = false;
    std::vector<StratumRows> strata;  // in order of first appearance
};

/// Throws InputError naming the line and column of the first malformed field.
InputTable read_analysis_csv(std::istream& in);

/// Assignment-only CSV reader used by `design`: returns the covariate matrix
/// of every row (no z/w/y required).
MatrixXd read_covariates_csv(std::istream& in);

struct MethodReport {
    std::string method;
    std::optional<ConfidenceSet> set;
    std::optional<FirstStageResult> first_stage;
    std::optional<Branch> branch;
    std::string skip_reason;

    bool operator==(const MethodReport&) const = default;
};

struct StratumReport {
    std::string stratum;
    Index n = 0, n1 = 0, n0 = 0;
    bool skipped = false;
    std::string skip_reason;
    double tau_y_hat = 0.0;
    double tau_w_hat = 0.0;
    double tau_hat = 0.0;
    double est_compliers = 0.0;
    /// First-stage test at the configured gamma, tagging the stratum strong or weak.
    std::optional<FirstStageResult> first_stage;
    std::vector<MethodReport> methods;

    bool operator==(const StratumReport&) const = default;
};

struct AnalysisSettings {
    double alpha = 0.05;
    double gamma = 0.075;
    double p_plus = 0.01;
    DesignKind design = DesignKind::CRE;
    std::optional<double> p_a;
    Adjustment adjustment = Adjustment::None;
    std::vector<std::string> methods;

    bool operator==(const AnalysisSettings&) const = default;
};

struct AnalysisReport {
    AnalysisSettings settings;
    std::vector<StratumReport> strata;

    bool operator==(const AnalysisReport&) const = default;
};

/// Analyzes one stratum.  Data problems become a skipped report, never a throw.
StratumReport analyze_stratum(const StratumRows& rows, const AnalysisSettings& settings,
                              const std::vector<MethodSpec>& methods);

/// Analyzes all strata (in parallel when threads > 1); output follows input
/// order.  Throws InputError when the settings need covariates and there are none.
AnalysisReport analyze(const InputTable& table, const AnalysisSettings& settings,
                       unsigned threads = 1);

std::string report_json(const AnalysisReport& report);
/// Inverse of report_json.  Throws InputError on malformed documents.
AnalysisReport parse_report_json(const std::string& text);

/// stratum,n,est_compliers,method,length,strong
void write_plot_csv(const AnalysisReport& report, std::ostream& os);

/// {"type", "lo", "hi", "length", ...}; infinite values become "inf"/"-inf".
std::string confidence_set_json(const ConfidenceSet& set);

} // namespace late
