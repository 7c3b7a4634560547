#include "late/two_stage.hpp"

#include "late/error.hpp"
#include "late/mixture_dist.hpp"
#include "late/special_functions.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>

namespace late {

std::string to_string(StatisticKind k) {
    switch (k) {
    case StatisticKind::T: return "T";
    case StatisticKind::T_ReM: return "T_ReM";
    case StatisticKind::T_dagger: return "T_dagger";
    case StatisticKind::F: return "F";
    }
    return "?";
}

std::string to_string(Branch b) { return b == Branch::Wald ? "wald" : "far"; }

namespace {

double first_stage_variance(const RegimeInputs& in) {
    return family_form(in.components, in.family()).v_w;
}

} // namespace

FirstStageResult first_stage_test(const RegimeInputs& in, double gamma, double p_plus) {
    if (!(gamma > 0.0 && gamma < 0.5)) throw InputError("gamma must lie in (0, 0.5)");
    FirstStageResult r;
    switch (in.regime) {
    case Regime::CRE:
        r.kind = StatisticKind::T;
        r.critical = normal_quantile(1.0 - gamma);
        break;
    case Regime::ReM:
        r.kind = StatisticKind::T_ReM;
        r.critical = lambda_quantile(MixtureParams{in.k, in.a, gamma}, r2_w(in.components).rho);
        break;
    case Regime::Adjusted:
        r.kind = StatisticKind::T_dagger;
        r.critical = normal_quantile(1.0 - gamma);
        break;
    }
    const double v = first_stage_variance(in);
    if (!(v > 0.0)) {
        r.nonpositive_variance = true;
        r.strong = false;
        return r;
    }
    r.statistic = (in.tau_w_hat - p_plus) / std::sqrt(v);
    r.strong = r.statistic > r.critical;
    return r;
}

FirstStageResult f_screen(const RegimeInputs& in) {
    FirstStageResult r;
    r.kind = StatisticKind::F;
    r.critical = 10.0;
    const double v = first_stage_variance(in);
    if (!(v > 0.0)) {
        r.nonpositive_variance = true;
        return r;
    }
    r.statistic = in.tau_w_hat * in.tau_w_hat / v;
    r.strong = r.statistic > r.critical;
    return r;
}

namespace {

TwoStageOutput compose(const FirstStageResult& fs, const RegimeInputs& in, double alpha) {
    TwoStageOutput out;
    out.first_stage = fs;
    out.branch = fs.strong ? Branch::Wald : Branch::FAR;
    out.set = fs.strong ? wald_ci(in, alpha) : far_set(in, alpha);
    return out;
}

} // namespace

TwoStageOutput two_stage_set(const RegimeInputs& in, double alpha, double gamma, double p_plus) {
    return compose(first_stage_test(in, gamma, p_plus), in, alpha);
}

TwoStageOutput two_stage_f10(const RegimeInputs& in, double alpha) {
    return compose(f_screen(in), in, alpha);
}

std::string MethodSpec::label() const {
    switch (kind) {
    case Kind::Wald: return "wald";
    case Kind::FAR: return "far";
    case Kind::TwoStageF10: return "ts_f10";
    case Kind::WaldF10: return "wald_f10";
    case Kind::TwoStage: {
        char buf[32];
        std::snprintf(buf, sizeof buf, "ts_%g", gamma);
        return buf;
    }
    }
    return "?";
}

MethodSpec MethodSpec::parse(const std::string& text, double default_gamma) {
    if (text == "wald") return {Kind::Wald, default_gamma};
    if (text == "far") return {Kind::FAR, default_gamma};
    if (text == "ts_f10") return {Kind::TwoStageF10, default_gamma};
    if (text == "wald_f10") return {Kind::WaldF10, default_gamma};
    if (text == "ts") return {Kind::TwoStage, default_gamma};
    if (text.rfind("ts_", 0) == 0) {
        const std::string num = text.substr(3);
        double g = 0.0;
        const auto [ptr, ec] = std::from_chars(num.data(), num.data() + num.size(), g);
        if (ec == std::errc() && ptr == num.data() + num.size() && g > 0.0 && g < 0.5)
            return {Kind::TwoStage, g};
    }
    throw InputError("unknown method '" + text +
                     "' (expected wald, far, ts, ts_<gamma>, ts_f10, wald_f10)");
}

std::vector<MethodSpec> standard_methods(const std::vector<double>& gammas) {
    std::vector<MethodSpec> m{{MethodSpec::Kind::Wald, 0.0}, {MethodSpec::Kind::FAR, 0.0}};
    for (double g : gammas) m.push_back({MethodSpec::Kind::TwoStage, g});
    m.push_back({MethodSpec::Kind::TwoStageF10, 0.0});
    m.push_back({MethodSpec::Kind::WaldF10, 0.0});
    return m;
}

std::vector<MethodOutcome> evaluate_methods(const RegimeInputs& in,
                                            const std::vector<MethodSpec>& methods,
                                            const AnalysisConfig& config) {
    std::optional<ConfidenceSet> wald_set, far;
    std::optional<FirstStageResult> f;
    auto get_wald = [&]() -> const ConfidenceSet& {
        if (!wald_set) wald_set = wald_ci(in, config.alpha);
        return *wald_set;
    };
    auto get_far = [&]() -> const ConfidenceSet& {
        if (!far) far = far_set(in, config.alpha);
        return *far;
    };
    auto get_f = [&]() -> const FirstStageResult& {
        if (!f) f = f_screen(in);
        return *f;
    };

    std::vector<MethodOutcome> out;
    out.reserve(methods.size());
    for (const auto& spec : methods) {
        MethodOutcome o;
        o.spec = spec;
        switch (spec.kind) {
        case MethodSpec::Kind::Wald: o.set = get_wald(); break;
        case MethodSpec::Kind::FAR: o.set = get_far(); break;
        case MethodSpec::Kind::TwoStage:
        case MethodSpec::Kind::TwoStageF10: {
            const FirstStageResult fs = spec.kind == MethodSpec::Kind::TwoStage
                                            ? first_stage_test(in, spec.gamma, config.p_plus)
                                            : get_f();
            o.first_stage = fs;
            o.branch = fs.strong ? Branch::Wald : Branch::FAR;
            o.set = fs.strong ? get_wald() : get_far();
            o.set->method = spec.label();
            break;
        }
        case MethodSpec::Kind::WaldF10:
            o.first_stage = get_f();
            if (o.first_stage->strong) {
                o.set = get_wald();
                o.set->method = spec.label();
            } else {
                o.skip_reason = "first-stage F <= 10";
            }
            break;
        }
        out.push_back(std::move(o));
    }
    return out;
}

} // namespace late
