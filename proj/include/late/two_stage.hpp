#pragma once

#include "late/confidence_sets.hpp"

#include <optional>
#include <string>
#include <vector>

namespace late {

enum class StatisticKind { T, T_ReM, T_dagger, F };

std::string to_string(StatisticKind k);

struct FirstStageResult {
    double statistic = 0.0;
    double critical = 0.0;
    /// statistic > critical, strictly.
    bool strong = false;
    StatisticKind kind = StatisticKind::T;
    /// The variance in the denominator was not positive; the test reports weak.
    bool nonpositive_variance = false;

    bool operator==(const FirstStageResult&) const = default;
};

/// (tau_W - p_plus) / sqrt(V_W) against z_gamma (CRE, adjusted) or
/// lambda_gamma(R^2_W) (ReM), with the regime's variance family.
FirstStageResult first_stage_test(const RegimeInputs& in, double gamma, double p_plus);

/// F = tau_W^2 / V_W with the regime's variance family; strong iff F > 10.
FirstStageResult f_screen(const RegimeInputs& in);

enum class Branch { Wald, FAR };

std::string to_string(Branch b);

struct TwoStageOutput {
    FirstStageResult first_stage;
    ConfidenceSet set;
    Branch branch = Branch::FAR;
};

/// The Wald interval after a strong first stage, the FAR set otherwise.
TwoStageOutput two_stage_set(const RegimeInputs& in, double alpha, double gamma, double p_plus);

/// Same construction with the F > 10 screen as the first stage.
TwoStageOutput two_stage_f10(const RegimeInputs& in, double alpha);

/// One inference procedure.  Labels: "wald", "far", "ts_<gamma>", "ts_f10",
/// "wald_f10".
struct MethodSpec {
    enum class Kind { Wald, FAR, TwoStage, TwoStageF10, WaldF10 };
    Kind kind = Kind::Wald;
    double gamma = 0.075;

    std::string label() const;
    /// Accepts the labels above and plain "ts", which takes `default_gamma`.
    static MethodSpec parse(const std::string& text, double default_gamma);

    bool operator==(const MethodSpec&) const = default;
};

/// The six procedures of the simulation study.
std::vector<MethodSpec> standard_methods(const std::vector<double>& gammas = {0.075, 0.025});

struct MethodOutcome {
    MethodSpec spec;
    /// Absent when the method declines to report (wald_f10 after a weak screen).
    std::optional<ConfidenceSet> set;
    std::optional<FirstStageResult> first_stage;
    std::optional<Branch> branch;
    std::string skip_reason;
};

/// Evaluates every requested method on one set of regime inputs.  The Wald and
/// FAR sets are each computed once and shared by the composite procedures.
std::vector<MethodOutcome> evaluate_methods(const RegimeInputs& in,
                                            const std::vector<MethodSpec>& methods,
                                            const AnalysisConfig& config);

} // namespace late
