#include "late/sim_harness.hpp"

#include "late/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <limits>
#include <memory>
#include <numeric>
#include <ostream>
#include <sstream>
#include <thread>

namespace late {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

std::string num(double v) {
    if (std::isnan(v)) return "";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

nlohmann::ordered_json jnum(double v) {
    if (std::isnan(v)) return nullptr;
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    return v;
}

double sample_variance(const VectorXd& v) {
    const double m = v.mean();
    return (v.array() - m).square().sum() / static_cast<double>(v.size() - 1);
}

} // namespace

void DgpConfig::check() const {
    if (n < 4 || n % 2 != 0) throw InputError("simulation n must be even and at least 4");
    if (k < 1) throw InputError("simulation needs K >= 1");
    if (!(tau_w > 0.0 && tau_w <= 0.5)) throw InputError("tau_w target must lie in (0, 0.5]");
}

StructuralDraw draw_structural(const DgpConfig& cfg, Rng& rng) {
    cfg.check();
    const Index n = cfg.n, k = cfg.k;
    const double kd = static_cast<double>(k);
    const double sd_e0 = std::sqrt(cfg.var_e0 > 0.0 ? cfg.var_e0 : kd);
    const double sd_e1 = std::sqrt(cfg.var_e1 > 0.0 ? cfg.var_e1 : 4.0 * kd);
    const double sd_u = std::sqrt(cfg.var_u > 0.0 ? cfg.var_u : kd);

    std::normal_distribution<double> normal;
    StructuralDraw s;
    s.x.resize(n, k);
    for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < k; ++j) s.x(i, j) = normal(rng);
    s.x.rowwise() -= s.x.colwise().mean();

    s.yw0.resize(n);
    s.yw1.resize(n);
    s.l0.resize(n);
    for (Index i = 0; i < n; ++i) {
        const double sum = s.x.row(i).sum();
        s.yw0[i] = sum + sd_e0 * normal(rng);
        s.yw1[i] = 2.0 * sum + sd_e1 * normal(rng);
        s.l0[i] = sum + sd_u * normal(rng);
    }
    return s;
}

PotentialDataset generate_population(const DgpConfig& cfg, Rng& rng) {
    StructuralDraw s = draw_structural(cfg, rng);
    const Index n = cfg.n;
    const VectorXd& l0 = s.l0;
    const auto m = static_cast<std::size_t>(std::llround(static_cast<double>(n) * cfg.tau_w));
    std::vector<double> gaps;
    for (Index i = 0; i < n; ++i)
        if (l0[i] <= 0.0) gaps.push_back(-l0[i]);
    if (m < 1 || gaps.size() < m)
        throw InputError("infeasible tau_w_target: " + std::to_string(gaps.size()) +
                         " units with L(0) <= 0 but " + std::to_string(m) + " compliers requested");
    std::sort(gaps.begin(), gaps.end());
    const double delta1 = m == gaps.size() ? gaps.back() + 1.0 : 0.5 * (gaps[m - 1] + gaps[m]);

    PotentialDataset p;
    p.x = std::move(s.x);
    p.w0.resize(n);
    p.w1.resize(n);
    p.y0.resize(n);
    p.y1.resize(n);
    for (Index i = 0; i < n; ++i) {
        p.w0[i] = l0[i] > 0.0 ? 1.0 : 0.0;
        p.w1[i] = l0[i] + delta1 > 0.0 ? 1.0 : 0.0;
        p.y0[i] = p.w0[i] == 1.0 ? s.yw1[i] : s.yw0[i];
        p.y1[i] = p.w1[i] == 1.0 ? s.yw1[i] : s.yw0[i];
    }
    p.check();
    return p;
}

PopulationOracle population_oracle(const PotentialDataset& p, Index n1) {
    p.check();
    const Index n = p.n();
    if (n1 < 1 || n1 >= n) throw InputError("oracle: n1 must lie in [1, n-1]");
    const double nd = static_cast<double>(n), n1d = static_cast<double>(n1),
                 n0d = static_cast<double>(n - n1);

    PopulationOracle o;
    o.tau = true_sample_late(p);
    o.tau_w = (p.w1 - p.w0).mean();
    const VectorXd a1 = p.y1 - o.tau * p.w1;
    const VectorXd a0 = p.y0 - o.tau * p.w0;
    const VectorXd d = a1 - a0;
    o.v_a = sample_variance(a1) / n1d + sample_variance(a0) / n0d - sample_variance(d) / nd;

    if (p.x.cols() > 0) {
        const MatrixXd xc = p.x.rowwise() - p.x.colwise().mean();
        const MatrixXd sxx = xc.transpose() * xc / (nd - 1.0);
        const Eigen::LLT<MatrixXd> llt(sxx);
        auto proj = [&](const VectorXd& q) {
            const VectorXd s = xc.transpose() * (q.array() - q.mean()).matrix() / (nd - 1.0);
            return s.dot(llt.solve(s));
        };
        o.v_a_given_x = proj(a1) / n1d + proj(a0) / n0d - proj(d) / nd;
    }
    const double scale = std::max(sample_variance(a1) / n1d, sample_variance(a0) / n0d);
    if (!(o.v_a > 1e-14 * scale)) {
        o.degenerate = true;
        o.r2_a = 0.0;
    } else {
        o.r2_a = std::clamp(o.v_a_given_x / o.v_a, 0.0, 1.0);
    }
    return o;
}

std::string StudyCell::key() const {
    std::ostringstream os;
    os << "n=" << n << ";tau_w=" << num(tau_w) << ";design=" << to_string(design);
    if (design == DesignKind::ReM) os << ";p_a=" << num(p_a);
    os << ";adjustment=" << to_string(adjustment);
    return os.str();
}

std::vector<StudyCell> StudyConfig::cells() const {
    std::vector<StudyCell> out;
    for (Index nn : n)
        for (DesignKind d : designs)
            for (Adjustment adj : adjustments)
                for (double t : tau_w) out.push_back(StudyCell{nn, t, d, p_a, adj});
    return out;
}

void StudyConfig::check() const {
    if (n.empty() || tau_w.empty() || designs.empty() || adjustments.empty() || gammas.empty())
        throw InputError("study config: list values must not be empty");
    if (reps < 1) throw InputError("study config: reps must be positive");
    if (!(alpha > 0.0 && alpha < 1.0)) throw InputError("study config: alpha must lie in (0,1)");
    if (!(p_plus > 0.0 && p_plus < 1.0)) throw InputError("study config: p_plus must lie in (0,1)");
    if (!(p_a > 0.0 && p_a < 1.0)) throw InputError("study config: p_a must lie in (0,1)");
    for (double g : gammas)
        if (!(g > 0.0 && g < 0.5)) throw InputError("study config: gamma must lie in (0, 0.5)");
    for (Index nn : n) DgpConfig{nn, k, tau_w.front()}.check();
    for (double t : tau_w) DgpConfig{n.front(), k, t}.check();
}

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& v) {
    std::vector<std::string> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

double to_double(const std::string& key, const std::string& v) {
    std::size_t pos = 0;
    double d = 0.0;
    try {
        d = std::stod(v, &pos);
    } catch (const std::exception&) {
        pos = 0;
    }
    if (pos == 0 || pos != v.size()) throw InputError("study config: bad number '" + v + "' for " + key);
    return d;
}

long long to_integer(const std::string& key, const std::string& v) {
    std::size_t pos = 0;
    long long r = 0;
    try {
        r = std::stoll(v, &pos);
    } catch (const std::exception&) {
        pos = 0;
    }
    if (pos == 0 || pos != v.size()) throw InputError("study config: bad integer '" + v + "' for " + key);
    return r;
}

} // namespace

StudyConfig StudyConfig::parse(const std::string& text) {
    StudyConfig cfg;
    std::vector<std::string> unknown;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto h = line.find('#'); h != std::string::npos) line.erase(h);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw InputError("study config line " + std::to_string(lineno) + ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        const auto items = split_list(value);
        if (items.empty())
            throw InputError("study config line " + std::to_string(lineno) + ": empty value for " + key);

        if (key == "n") {
            cfg.n.clear();
            for (const auto& s : items) cfg.n.push_back(static_cast<Index>(to_integer(key, s)));
        } else if (key == "tau_w") {
            cfg.tau_w.clear();
            for (const auto& s : items) cfg.tau_w.push_back(to_double(key, s));
        } else if (key == "design") {
            cfg.designs.clear();
            for (const auto& s : items) cfg.designs.push_back(parse_design_kind(s));
        } else if (key == "adjustment") {
            cfg.adjustments.clear();
            for (const auto& s : items) cfg.adjustments.push_back(parse_adjustment(s));
        } else if (key == "gamma") {
            cfg.gammas.clear();
            for (const auto& s : items) cfg.gammas.push_back(to_double(key, s));
        } else if (key == "p_a") {
            cfg.p_a = to_double(key, value);
        } else if (key == "reps") {
            cfg.reps = static_cast<long>(to_integer(key, value));
        } else if (key == "seed") {
            cfg.seed = static_cast<std::uint64_t>(to_integer(key, value));
        } else if (key == "p_plus") {
            cfg.p_plus = to_double(key, value);
        } else if (key == "alpha") {
            cfg.alpha = to_double(key, value);
        } else if (key == "k") {
            cfg.k = static_cast<Index>(to_integer(key, value));
        } else if (key == "threads") {
            cfg.threads = static_cast<unsigned>(to_integer(key, value));
        } else {
            unknown.push_back(key);
        }
    }
    if (!unknown.empty()) {
        std::string msg = "study config: unknown keys:";
        for (const auto& k : unknown) msg += " " + k;
        throw InputError(msg);
    }
    cfg.check();
    return cfg;
}

PotentialDataset study_population(const StudyConfig& cfg, Index n, double tau_w) {
    const std::uint64_t key = fnv1a("population;n=" + std::to_string(n) + ";tau_w=" + num(tau_w) +
                                    ";k=" + std::to_string(cfg.k));
    const DgpConfig dgp{n, cfg.k, tau_w};
    for (std::uint64_t attempt = 0; attempt < 1000; ++attempt) {
        Rng rng = make_stream(cfg.seed, key, attempt);
        try {
            return generate_population(dgp, rng);
        } catch (const InputError&) {
            if (attempt == 999) throw;
        }
    }
    throw InputError("infeasible tau_w_target");
}

double extended_median(std::vector<double> v) {
    if (v.empty()) return kNaN;
    std::sort(v.begin(), v.end());
    const std::size_t m = v.size();
    const double lower = v[(m - 1) / 2];
    if (m % 2 == 1) return lower;
    const double upper = v[m / 2];
    return std::isfinite(upper) ? 0.5 * (lower + upper) : lower;
}

namespace {

struct Replication {
    bool ok = false;
    std::string error;
    double estimate = 0.0;
    long attempts = 1;
    std::vector<char> present, covered, strong, has_first_stage;
    std::vector<double> length;
};

} // namespace

CellResult run_cell(const StudyCell& cell, const StudyConfig& cfg, const ReplicationObserver& observer) {
    const PotentialDataset pop = study_population(cfg, cell.n, cell.tau_w);
    const Index n1 = cell.n / 2;

    CellResult result;
    result.cell = cell;
    result.reps = cfg.reps;
    result.oracle = population_oracle(pop, n1);
    const double tau = result.oracle.tau;

    AnalysisConfig ac;
    ac.alpha = cfg.alpha;
    ac.gamma = cfg.gammas.front();
    ac.p_plus = cfg.p_plus;
    ac.adjustment = cell.adjustment;
    ac.design = cell.design == DesignKind::ReM ? DesignSpec::rem_from_pa(n1, cell.p_a, cfg.k)
                                               : DesignSpec::cre(n1);
    std::unique_ptr<MahalanobisBalance> balance;
    if (cell.design == DesignKind::ReM) balance = std::make_unique<MahalanobisBalance>(pop.x);

    const auto methods = cfg.methods();
    const std::size_t nm = methods.size();
    const std::uint64_t cell_key = fnv1a(cell.key() + ";k=" + std::to_string(cfg.k));

    std::vector<Replication> reps(static_cast<std::size_t>(cfg.reps));
    std::atomic<long> next{0};
    auto worker = [&]() {
        for (long r = next++; r < cfg.reps; r = next++) {
            Replication& rec = reps[static_cast<std::size_t>(r)];
            try {
                Rng rng = make_stream(cfg.seed, cell_key, static_cast<std::uint64_t>(r));
                const AssignmentVector a = draw_assignment(ac.design, balance.get(), cell.n, rng);
                rec.attempts = a.accepted_after;
                const Dataset data = pop.observe(a.z);
                const RegimeInputs in = prepare_regime(data, ac);
                const auto outcomes = evaluate_methods(in, methods, ac);
                rec.estimate = in.estimate().tau_hat;
                rec.present.assign(nm, 0);
                rec.covered.assign(nm, 0);
                rec.strong.assign(nm, 0);
                rec.has_first_stage.assign(nm, 0);
                rec.length.assign(nm, kNaN);
                for (std::size_t j = 0; j < nm; ++j) {
                    const auto& o = outcomes[j];
                    if (o.first_stage) {
                        rec.has_first_stage[j] = 1;
                        rec.strong[j] = o.first_stage->strong;
                    }
                    if (!o.set) continue;
                    rec.present[j] = 1;
                    rec.covered[j] = o.set->contains(tau);
                    rec.length[j] = o.set->length();
                }
                rec.ok = true;
                if (observer) observer(cell, r, in, outcomes);
            } catch (const Error& e) {
                rec.ok = false;
                rec.error = e.what();
            }
        }
    };

    unsigned threads = cfg.threads ? cfg.threads : std::max(1u, std::thread::hardware_concurrency());
    threads = static_cast<unsigned>(std::min<long>(threads, cfg.reps));
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }

    double attempts = 0.0;
    long ok = 0;
    for (const auto& rec : reps) {
        if (!rec.ok) {
            ++result.failures;
            if (result.failure_messages.size() < 5) result.failure_messages.push_back(rec.error);
            continue;
        }
        ++ok;
        attempts += static_cast<double>(rec.attempts);
    }
    result.mean_attempts = ok ? attempts / static_cast<double>(ok) : kNaN;

    for (std::size_t j = 0; j < nm; ++j) {
        MethodSummary s;
        s.method = methods[j].label();
        std::vector<double> lengths, errors;
        long covered = 0, strong = 0, with_fs = 0;
        for (const auto& rec : reps) {
            if (!rec.ok) continue;
            if (rec.has_first_stage[j]) {
                ++with_fs;
                strong += rec.strong[j];
            }
            if (!rec.present[j]) continue;
            lengths.push_back(rec.length[j]);
            errors.push_back(std::abs(rec.estimate - tau));
            covered += rec.covered[j];
        }
        s.evaluated = static_cast<long>(lengths.size());
        if (s.evaluated > 0) {
            s.coverage = static_cast<double>(covered) / static_cast<double>(s.evaluated);
            s.median_length = extended_median(lengths);
            s.median_abs_error = extended_median(errors);
            s.mean_abs_error = std::accumulate(errors.begin(), errors.end(), 0.0) /
                               static_cast<double>(errors.size());
        } else {
            s.coverage = s.median_length = s.median_abs_error = s.mean_abs_error = kNaN;
        }
        s.strong_proportion = with_fs ? static_cast<double>(strong) / static_cast<double>(with_fs) : kNaN;
        result.methods.push_back(std::move(s));
    }
    return result;
}

PerformanceTable run_study(const StudyConfig& cfg, const ReplicationObserver& observer) {
    cfg.check();
    PerformanceTable t;
    for (const auto& cell : cfg.cells()) t.cells.push_back(run_cell(cell, cfg, observer));
    return t;
}

void write_table_csv(const PerformanceTable& table, std::ostream& os) {
    os << "n,tau_w,design,p_a,adjustment,method,reps,evaluated,failures,tau,tau_w_realized,"
          "coverage,median_length,median_abs_error,mean_abs_error,strong_proportion\n";
    for (const auto& c : table.cells) {
        for (const auto& m : c.methods) {
            os << c.cell.n << ',' << num(c.cell.tau_w) << ',' << to_string(c.cell.design) << ','
               << (c.cell.design == DesignKind::ReM ? num(c.cell.p_a) : "") << ','
               << to_string(c.cell.adjustment) << ',' << m.method << ',' << c.reps << ','
               << m.evaluated << ',' << c.failures << ',' << num(c.oracle.tau) << ','
               << num(c.oracle.tau_w) << ',' << num(m.coverage) << ',' << num(m.median_length)
               << ',' << num(m.median_abs_error) << ',' << num(m.mean_abs_error) << ','
               << num(m.strong_proportion) << '\n';
        }
    }
}

std::string table_json(const PerformanceTable& table) {
    nlohmann::ordered_json cells = nlohmann::ordered_json::array();
    for (const auto& c : table.cells) {
        nlohmann::ordered_json cj;
        cj["n"] = c.cell.n;
        cj["tau_w"] = c.cell.tau_w;
        cj["design"] = to_string(c.cell.design);
        cj["p_a"] = c.cell.design == DesignKind::ReM ? jnum(c.cell.p_a) : nullptr;
        cj["adjustment"] = to_string(c.cell.adjustment);
        cj["reps"] = c.reps;
        cj["failures"] = c.failures;
        cj["failure_messages"] = c.failure_messages;
        cj["mean_attempts"] = jnum(c.mean_attempts);
        cj["oracle"] = {{"tau", jnum(c.oracle.tau)},
                        {"tau_w", jnum(c.oracle.tau_w)},
                        {"v_a", jnum(c.oracle.v_a)},
                        {"r2_a", jnum(c.oracle.r2_a)},
                        {"degenerate", c.oracle.degenerate}};
        nlohmann::ordered_json ms = nlohmann::ordered_json::array();
        for (const auto& m : c.methods) {
            ms.push_back({{"method", m.method},
                          {"evaluated", m.evaluated},
                          {"coverage", jnum(m.coverage)},
                          {"median_length", jnum(m.median_length)},
                          {"median_abs_error", jnum(m.median_abs_error)},
                          {"mean_abs_error", jnum(m.mean_abs_error)},
                          {"strong_proportion", jnum(m.strong_proportion)}});
        }
        cj["methods"] = std::move(ms);
        cells.push_back(std::move(cj));
    }
    nlohmann::ordered_json root;
    root["cells"] = std::move(cells);
    return root.dump(2) + "\n";
}

} // namespace late
