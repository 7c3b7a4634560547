#include "late/report_io.hpp"

#include "late/error.hpp"

#include <json.hpp>

#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <thread>

namespace late {

using json = nlohmann::ordered_json;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::vector<std::string> split_csv_line(const std::string& line, long lineno) {
    std::vector<std::string> out;
    std::string field;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    field += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                field += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.push_back(std::move(field));
            field.clear();
        } else if (c != '\r') {
            field += c;
        }
    }
    if (quoted) throw InputError("line " + std::to_string(lineno) + ": unterminated quote");
    out.push_back(std::move(field));
    return out;
}

std::string strip(const std::string& s) {
    const auto b = s.find_first_not_of(" \t");
    if (b == std::string::npos) return "";
    return s.substr(b, s.find_last_not_of(" \t") - b + 1);
}

double parse_field(const std::string& raw, long lineno, const std::string& column) {
    const std::string s = strip(raw);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc() || ptr != s.data() + s.size())
        throw InputError("line " + std::to_string(lineno) + ", column '" + column +
                         "': not a number: '" + s + "'");
    if (!std::isfinite(v))
        throw InputError("line " + std::to_string(lineno) + ", column '" + column + "': not finite");
    return v;
}

bool is_covariate_name(const std::string& h) {
    if (h.size() < 2 || h[0] != 'x') return false;
    for (std::size_t i = 1; i < h.size(); ++i)
        if (h[i] < '0' || h[i] > '9') return false;
    return true;
}

} // namespace

Dataset StratumRows::dataset() const {
    const auto n = static_cast<Index>(z.size());
    const Index k = x.empty() ? 0 : static_cast<Index>(x.front().size());
    VectorXd zv(n), wv(n), yv(n);
    MatrixXd xm(n, k);
    for (Index i = 0; i < n; ++i) {
        const auto u = static_cast<std::size_t>(i);
        zv[i] = z[u];
        wv[i] = w[u];
        yv[i] = y[u];
        for (Index j = 0; j < k; ++j) xm(i, j) = x[u][static_cast<std::size_t>(j)];
    }
    return Dataset(std::move(zv), std::move(wv), std::move(yv), xm, Dataset::Covariates::Center);
}

InputTable read_analysis_csv(std::istream& in) {
    std::string line;
    long lineno = 1;
    if (!std::getline(in, line)) throw InputError("input is empty: expected a header line");
    const auto header = split_csv_line(line, lineno);

    int iz = -1, iw = -1, iy = -1, is = -1;
    std::vector<int> ix;
    InputTable table;
    for (std::size_t c = 0; c < header.size(); ++c) {
        const std::string h = strip(header[c]);
        const int ci = static_cast<int>(c);
        if (h == "z") iz = ci;
        else if (h == "w") iw = ci;
        else if (h == "y") iy = ci;
        else if (h == "stratum") is = ci;
        else if (is_covariate_name(h)) {
            ix.push_back(ci);
            table.covariate_names.push_back(h);
        } else {
            throw InputError("header: unknown column '" + h + "'");
        }
    }
    if (iz < 0 || iw < 0 || iy < 0) throw InputError("header: columns z, w and y are required");
    table.has_stratum = is >= 0;

    std::map<std::string, std::size_t> index;
    while (std::getline(in, line)) {
        ++lineno;
        if (strip(line).empty() || strip(line) == "\r") continue;
        const auto f = split_csv_line(line, lineno);
        if (f.size() != header.size())
            throw InputError("line " + std::to_string(lineno) + ": expected " +
                             std::to_string(header.size()) + " fields, found " + std::to_string(f.size()));
        const std::string key = is >= 0 ? strip(f[static_cast<std::size_t>(is)]) : "all";
        auto [it, inserted] = index.try_emplace(key, table.strata.size());
        if (inserted) table.strata.push_back(StratumRows{key, {}, {}, {}, {}, {}});
        StratumRows& s = table.strata[it->second];

        const double z = parse_field(f[static_cast<std::size_t>(iz)], lineno, "z");
        const double w = parse_field(f[static_cast<std::size_t>(iw)], lineno, "w");
        if (z != 0.0 && z != 1.0)
            throw InputError("line " + std::to_string(lineno) + ", column 'z': must be 0 or 1");
        if (w != 0.0 && w != 1.0)
            throw InputError("line " + std::to_string(lineno) + ", column 'w': must be 0 or 1");
        s.z.push_back(z);
        s.w.push_back(w);
        s.y.push_back(parse_field(f[static_cast<std::size_t>(iy)], lineno, "y"));
        std::vector<double> xr;
        for (std::size_t j = 0; j < ix.size(); ++j)
            xr.push_back(parse_field(f[static_cast<std::size_t>(ix[j])], lineno, table.covariate_names[j]));
        s.x.push_back(std::move(xr));
        s.lines.push_back(lineno);
    }
    if (table.strata.empty()) throw InputError("input has a header but no data rows");
    return table;
}

MatrixXd read_covariates_csv(std::istream& in) {
    std::string line;
    long lineno = 1;
    if (!std::getline(in, line)) throw InputError("input is empty: expected a header line");
    const auto header = split_csv_line(line, lineno);
    std::vector<std::size_t> ix;
    std::vector<std::string> names;
    for (std::size_t c = 0; c < header.size(); ++c) {
        const std::string h = strip(header[c]);
        if (is_covariate_name(h)) {
            ix.push_back(c);
            names.push_back(h);
        }
    }
    if (ix.empty()) throw InputError("header: no covariate columns (x1, x2, ...)");
    std::vector<std::vector<double>> rows;
    while (std::getline(in, line)) {
        ++lineno;
        if (strip(line).empty()) continue;
        const auto f = split_csv_line(line, lineno);
        if (f.size() != header.size())
            throw InputError("line " + std::to_string(lineno) + ": expected " +
                             std::to_string(header.size()) + " fields, found " + std::to_string(f.size()));
        std::vector<double> r;
        for (std::size_t j = 0; j < ix.size(); ++j) r.push_back(parse_field(f[ix[j]], lineno, names[j]));
        rows.push_back(std::move(r));
    }
    MatrixXd x(static_cast<Index>(rows.size()), static_cast<Index>(ix.size()));
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < ix.size(); ++j) x(static_cast<Index>(i), static_cast<Index>(j)) = rows[i][j];
    return x;
}

namespace {

AnalysisConfig to_config(const AnalysisSettings& s, Index n1, Index k) {
    AnalysisConfig c;
    c.alpha = s.alpha;
    c.gamma = s.gamma;
    c.p_plus = s.p_plus;
    c.adjustment = s.adjustment;
    if (s.design == DesignKind::ReM) {
        if (!s.p_a) throw InputError("rem design requires p_a");
        c.design = DesignSpec::rem_from_pa(n1, *s.p_a, k);
    } else {
        c.design = DesignSpec::cre(n1);
    }
    return c;
}

} // namespace

StratumReport analyze_stratum(const StratumRows& rows, const AnalysisSettings& settings,
                              const std::vector<MethodSpec>& methods) {
    StratumReport r;
    r.stratum = rows.key;
    r.n = static_cast<Index>(rows.z.size());
    for (double z : rows.z) r.n1 += z == 1.0;
    r.n0 = r.n - r.n1;
    try {
        const Dataset data = rows.dataset();
        if (auto problems = validate(data); !problems.empty()) {
            std::string msg;
            for (const auto& p : problems) msg += (msg.empty() ? "" : "; ") + p;
            throw InputError(msg);
        }
        const AnalysisConfig config = to_config(settings, data.n1(), data.k());
        const RegimeInputs in = prepare_regime(data, config);
        r.tau_y_hat = in.tau_y_hat;
        r.tau_w_hat = in.tau_w_hat;
        r.tau_hat = in.estimate().tau_hat;
        r.est_compliers = static_cast<double>(r.n) * in.tau_w_hat;
        r.first_stage = first_stage_test(in, settings.gamma, settings.p_plus);
        for (auto& o : evaluate_methods(in, methods, config)) {
            MethodReport m;
            m.method = o.spec.label();
            m.set = std::move(o.set);
            m.first_stage = o.first_stage;
            m.branch = o.branch;
            m.skip_reason = std::move(o.skip_reason);
            r.methods.push_back(std::move(m));
        }
    } catch (const Error& e) {
        r.skipped = true;
        r.skip_reason = e.what();
        r.tau_y_hat = r.tau_w_hat = r.tau_hat = r.est_compliers = 0.0;
        r.first_stage.reset();
        r.methods.clear();
    }
    return r;
}

AnalysisReport analyze(const InputTable& table, const AnalysisSettings& settings, unsigned threads) {
    if ((settings.adjustment != Adjustment::None || settings.design == DesignKind::ReM) &&
        table.covariate_names.empty())
        throw InputError("regression adjustment and rem design need covariate columns x1..xK");
    if (settings.design == DesignKind::ReM && !(settings.p_a && *settings.p_a > 0.0 && *settings.p_a < 1.0))
        throw InputError("rem design requires p_a in (0, 1)");
    if (!(settings.gamma > 0.0 && settings.gamma < 0.5)) throw InputError("gamma must lie in (0, 0.5)");
    AnalysisConfig{settings.alpha, settings.gamma, settings.p_plus, settings.adjustment, {}}.check();

    std::vector<MethodSpec> methods;
    for (const auto& m : settings.methods) methods.push_back(MethodSpec::parse(m, settings.gamma));
    if (methods.empty()) throw InputError("no methods requested");

    AnalysisReport report;
    report.settings = settings;
    report.strata.resize(table.strata.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        for (std::size_t i = next++; i < table.strata.size(); i = next++)
            report.strata[i] = analyze_stratum(table.strata[i], settings, methods);
    };
    threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(table.strata.size())));
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    return report;
}

namespace {

json jnum(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    if (std::isnan(v)) return nullptr;
    return v;
}

double from_jnum(const json& j) {
    if (j.is_null()) return std::numeric_limits<double>::quiet_NaN();
    if (j.is_string()) {
        const auto s = j.get<std::string>();
        if (s == "inf") return kInf;
        if (s == "-inf") return -kInf;
        throw InputError("expected a number or \"inf\", found \"" + s + "\"");
    }
    return j.get<double>();
}

SetKind parse_set_kind(const std::string& s) {
    for (auto k : {SetKind::Point, SetKind::Interval, SetKind::TwoRays, SetKind::LeftRay,
                   SetKind::RightRay, SetKind::WholeLine})
        if (to_string(k) == s) return k;
    throw InputError("unknown confidence set type '" + s + "'");
}

StatisticKind parse_statistic_kind(const std::string& s) {
    for (auto k : {StatisticKind::T, StatisticKind::T_ReM, StatisticKind::T_dagger, StatisticKind::F})
        if (to_string(k) == s) return k;
    throw InputError("unknown statistic kind '" + s + "'");
}

json set_to_json(const ConfidenceSet& s) {
    return json{{"type", to_string(s.kind)},       {"lo", jnum(s.lo)},
                {"hi", jnum(s.hi)},                {"length", jnum(s.length())},
                {"contains_wald", s.contains_wald}, {"degenerate", s.degenerate},
                {"method", s.method}};
}

ConfidenceSet set_from_json(const json& j) {
    ConfidenceSet s;
    s.kind = parse_set_kind(j.at("type").get<std::string>());
    s.lo = from_jnum(j.at("lo"));
    s.hi = from_jnum(j.at("hi"));
    s.contains_wald = j.at("contains_wald").get<bool>();
    s.degenerate = j.at("degenerate").get<bool>();
    s.method = j.at("method").get<std::string>();
    return s;
}

json fs_to_json(const FirstStageResult& f) {
    return json{{"kind", to_string(f.kind)},
                {"statistic", jnum(f.statistic)},
                {"critical", jnum(f.critical)},
                {"strong", f.strong},
                {"nonpositive_variance", f.nonpositive_variance}};
}

FirstStageResult fs_from_json(const json& j) {
    FirstStageResult f;
    f.kind = parse_statistic_kind(j.at("kind").get<std::string>());
    f.statistic = from_jnum(j.at("statistic"));
    f.critical = from_jnum(j.at("critical"));
    f.strong = j.at("strong").get<bool>();
    f.nonpositive_variance = j.at("nonpositive_variance").get<bool>();
    return f;
}

template <class T, class F>
json opt_json(const std::optional<T>& v, F&& f) {
    return v ? f(*v) : json(nullptr);
}

} // namespace

std::string confidence_set_json(const ConfidenceSet& set) { return set_to_json(set).dump(); }

std::string report_json(const AnalysisReport& report) {
    const auto& s = report.settings;
    json root;
    root["settings"] = {{"alpha", s.alpha},
                        {"gamma", s.gamma},
                        {"p_plus", s.p_plus},
                        {"design", to_string(s.design)},
                        {"p_a", s.p_a ? json(*s.p_a) : json(nullptr)},
                        {"adjustment", to_string(s.adjustment)},
                        {"methods", s.methods}};
    json strata = json::array();
    for (const auto& r : report.strata) {
        json js;
        js["stratum"] = r.stratum;
        js["n"] = r.n;
        js["n1"] = r.n1;
        js["n0"] = r.n0;
        js["skipped"] = r.skipped;
        js["skip_reason"] = r.skip_reason;
        js["tau_y_hat"] = jnum(r.tau_y_hat);
        js["tau_w_hat"] = jnum(r.tau_w_hat);
        js["tau_hat"] = jnum(r.tau_hat);
        js["est_compliers"] = jnum(r.est_compliers);
        js["first_stage"] = opt_json(r.first_stage, fs_to_json);
        json ms = json::array();
        for (const auto& m : r.methods) {
            ms.push_back({{"method", m.method},
                          {"set", opt_json(m.set, set_to_json)},
                          {"first_stage", opt_json(m.first_stage, fs_to_json)},
                          {"branch", m.branch ? json(to_string(*m.branch)) : json(nullptr)},
                          {"skip_reason", m.skip_reason}});
        }
        js["methods"] = std::move(ms);
        strata.push_back(std::move(js));
    }
    root["strata"] = std::move(strata);
    return root.dump(2) + "\n";
}

AnalysisReport parse_report_json(const std::string& text) {
    try {
        const json root = json::parse(text);
        AnalysisReport report;
        const json& s = root.at("settings");
        report.settings.alpha = s.at("alpha").get<double>();
        report.settings.gamma = s.at("gamma").get<double>();
        report.settings.p_plus = s.at("p_plus").get<double>();
        report.settings.design = parse_design_kind(s.at("design").get<std::string>());
        if (!s.at("p_a").is_null()) report.settings.p_a = s.at("p_a").get<double>();
        report.settings.adjustment = parse_adjustment(s.at("adjustment").get<std::string>());
        report.settings.methods = s.at("methods").get<std::vector<std::string>>();
        for (const json& js : root.at("strata")) {
            StratumReport r;
            r.stratum = js.at("stratum").get<std::string>();
            r.n = js.at("n").get<Index>();
            r.n1 = js.at("n1").get<Index>();
            r.n0 = js.at("n0").get<Index>();
            r.skipped = js.at("skipped").get<bool>();
            r.skip_reason = js.at("skip_reason").get<std::string>();
            r.tau_y_hat = from_jnum(js.at("tau_y_hat"));
            r.tau_w_hat = from_jnum(js.at("tau_w_hat"));
            r.tau_hat = from_jnum(js.at("tau_hat"));
            r.est_compliers = from_jnum(js.at("est_compliers"));
            if (!js.at("first_stage").is_null()) r.first_stage = fs_from_json(js.at("first_stage"));
            for (const json& jm : js.at("methods")) {
                MethodReport m;
                m.method = jm.at("method").get<std::string>();
                if (!jm.at("set").is_null()) m.set = set_from_json(jm.at("set"));
                if (!jm.at("first_stage").is_null()) m.first_stage = fs_from_json(jm.at("first_stage"));
                if (!jm.at("branch").is_null())
                    m.branch = jm.at("branch").get<std::string>() == "wald" ? Branch::Wald : Branch::FAR;
                m.skip_reason = jm.at("skip_reason").get<std::string>();
                r.methods.push_back(std::move(m));
            }
            report.strata.push_back(std::move(r));
        }
        return report;
    } catch (const json::exception& e) {
        throw InputError(std::string("malformed report JSON: ") + e.what());
    }
}

void write_plot_csv(const AnalysisReport& report, std::ostream& os) {
    os << "stratum,n,est_compliers,method,length,strong\n";
    auto num = [](double v) -> std::string {
        if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
        char buf[40];
        std::snprintf(buf, sizeof buf, "%.10g", v);
        return buf;
    };
    for (const auto& r : report.strata) {
        if (r.skipped) continue;
        const std::string strong = r.first_stage && r.first_stage->strong ? "strong" : "weak";
        for (const auto& m : r.methods) {
            if (!m.set) continue;
            std::string key = r.stratum;
            if (key.find_first_of(",\"") != std::string::npos) {
                std::string q = "\"";
                for (char c : key) q += c == '"' ? std::string("\"\"") : std::string(1, c);
                key = q + "\"";
            }
            os << key << ',' << r.n << ',' << num(r.est_compliers) << ',' << m.method << ','
               << num(m.set->length()) << ',' << strong << '\n';
        }
    }
}

} // namespace late
