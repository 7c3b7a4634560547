#pragma once

#include "late/design.hpp"
#include "late/two_stage.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

namespace late {

/**
 * Population generator:
 *
 *   x_i ~ N(0, I_K), centered over the population
 *   Y^W_i(0) = 1'x_i + e0_i          Var(e0) = K
 *   Y^W_i(1) = 2 * 1'x_i + e1_i      Var(e1) = 4K
 *   L_i(0)   = 1'x_i + u_i           Var(u)  = K,   L_i(1) = L_i(0) + delta1
 *   W_i(z)   = 1{L_i(z) > 0},        Y_i(z) = Y^W_i(W_i(z))
 *
 * delta1 is placed midway between consecutive order statistics of
 * {-L_i(0) : L_i(0) <= 0} so that exactly round(n * tau_w) units comply.
 * Noise variances of zero or less select the defaults above.
 */
struct DgpConfig {
    Index n = 200;
    Index k = 5;
    double tau_w = 0.5;
    double var_e0 = 0.0;
    double var_e1 = 0.0;
    double var_u = 0.0;

    void check() const;
};

/// Covariates and the three structural equations before delta1 is chosen.
struct StructuralDraw {
    MatrixXd x;
    VectorXd yw0, yw1, l0;
};

StructuralDraw draw_structural(const DgpConfig& cfg, Rng& rng);

/// Throws InputError("infeasible tau_w_target ...") when too few units have L(0) <= 0.
PotentialDataset generate_population(const DgpConfig& cfg, Rng& rng);

/// Finite-population truths computable from potential outcomes.
struct PopulationOracle {
    double tau = 0.0;
    double tau_w = 0.0;
    /// S^2_{A(1)}/n1 + S^2_{A(0)}/n0 - S^2_{A(1)-A(0)}/n with A(z) = Y(z) - tau W(z).
    double v_a = 0.0;
    /// Same with every S^2 replaced by the variance of the projection on x.
    double v_a_given_x = 0.0;
    double r2_a = 0.0;
    bool degenerate = false;
};

PopulationOracle population_oracle(const PotentialDataset& p, Index n1);

struct StudyCell {
    Index n = 200;
    double tau_w = 0.5;
    DesignKind design = DesignKind::CRE;
    double p_a = 0.01;
    Adjustment adjustment = Adjustment::None;

    std::string key() const;
};

/**
 * Scenario grid plus run settings.  The text form is one `key = value` per
 * line, '#' starting a comment, list values comma-separated:
 *
 *   n, tau_w, design (cre|rem), p_a, adjustment (none|ehw|hc2|hc3), reps,
 *   seed, gamma, p_plus, alpha, k, threads
 */
struct StudyConfig {
    std::vector<Index> n{200};
    std::vector<double> tau_w{0.5};
    std::vector<DesignKind> designs{DesignKind::CRE};
    double p_a = 0.01;
    std::vector<Adjustment> adjustments{Adjustment::None};
    long reps = 2000;
    std::uint64_t seed = 20240601;
    std::vector<double> gammas{0.075, 0.025};
    double p_plus = 0.01;
    double alpha = 0.05;
    Index k = 5;
    unsigned threads = 0;  // 0: hardware concurrency

    std::vector<StudyCell> cells() const;
    std::vector<MethodSpec> methods() const { return standard_methods(gammas); }
    void check() const;

    /// Throws InputError listing every unknown key, or naming a bad value.
    static StudyConfig parse(const std::string& text);
};

struct MethodSummary {
    std::string method;
    /// Replications entering the metrics (strong draws only for wald_f10).
    long evaluated = 0;
    double coverage = 0.0;
    double median_length = 0.0;
    double median_abs_error = 0.0;
    double mean_abs_error = 0.0;
    /// Share of successful replications with a strong first stage; NaN for
    /// methods without one.
    double strong_proportion = 0.0;
};

struct CellResult {
    StudyCell cell;
    PopulationOracle oracle;
    long reps = 0;
    long failures = 0;
    std::vector<std::string> failure_messages;  // first few, for diagnostics
    double mean_attempts = 1.0;
    std::vector<MethodSummary> methods;
};

struct PerformanceTable {
    std::vector<CellResult> cells;
};

/// Per-draw hook.  Called from worker threads; must be thread safe.
using ReplicationObserver = std::function<void(const StudyCell&, long rep, const RegimeInputs&,
                                               const std::vector<MethodOutcome>&)>;

/// Fixed population for (n, tau_w, K), drawn from the base seed.
PotentialDataset study_population(const StudyConfig& cfg, Index n, double tau_w);

CellResult run_cell(const StudyCell& cell, const StudyConfig& cfg,
                    const ReplicationObserver& observer = {});

PerformanceTable run_study(const StudyConfig& cfg, const ReplicationObserver& observer = {});

/// Median over the extended reals: infinite iff more than half the values are.
double extended_median(std::vector<double> values);

void write_table_csv(const PerformanceTable& table, std::ostream& os);
std::string table_json(const PerformanceTable& table);

} // namespace late
