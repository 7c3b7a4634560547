// Command-line front end: analyze, simulate, design, lambda.

#include "late/error.hpp"
#include "late/mixture_dist.hpp"
#include "late/report_io.hpp"
#include "late/sim_harness.hpp"
#include "late/special_functions.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

namespace fs = std::filesystem;
using namespace late;

namespace {

constexpr int kExitInput = 2;
constexpr int kExitInfeasible = 3;
constexpr const char* kVersion = "1.0.0";

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write '" + path + "'");
    out << content;
}

std::vector<std::string> split_commas(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty()) out.push_back(item);
    return out;
}

struct AnalyzeOpts {
    std::string input, out, plot, methods = "wald,far,ts", adjust = "none", design = "cre";
    double pa = 0.01, alpha = 0.05, gamma = 0.075, pplus = 0.01;
    unsigned threads = 1;
};

int run_analyze(const AnalyzeOpts& o) {
    std::ifstream in(o.input);
    if (!in) throw InputError("cannot open '" + o.input + "'");
    const InputTable table = read_analysis_csv(in);

    AnalysisSettings s;
    s.alpha = o.alpha;
    s.gamma = o.gamma;
    s.p_plus = o.pplus;
    s.design = parse_design_kind(o.design);
    if (s.design == DesignKind::ReM) s.p_a = o.pa;
    s.adjustment = parse_adjustment(o.adjust);
    s.methods = split_commas(o.methods);

    const AnalysisReport report = analyze(table, s, o.threads);
    const std::string text = report_json(report);
    if (o.out.empty() || o.out == "-") std::cout << text;
    else write_file(o.out, text);
    if (!o.plot.empty()) {
        std::ostringstream ss;
        write_plot_csv(report, ss);
        write_file(o.plot, ss.str());
    }
    return 0;
}

struct SimulateOpts {
    std::string config, out;
    std::optional<long> reps;
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> threads;
};

int run_simulate(const SimulateOpts& o) {
    StudyConfig cfg = StudyConfig::parse(read_file(o.config));
    if (o.reps) cfg.reps = *o.reps;
    if (o.seed) cfg.seed = *o.seed;
    if (o.threads) cfg.threads = *o.threads;
    cfg.check();

    fs::create_directories(o.out);
    const auto start = std::chrono::steady_clock::now();
    const PerformanceTable table = run_study(cfg);
    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    std::ostringstream csv;
    write_table_csv(table, csv);
    write_file((fs::path(o.out) / "performance.csv").string(), csv.str());
    write_file((fs::path(o.out) / "performance.json").string(), table_json(table));

    nlohmann::ordered_json manifest;
    manifest["version"] = kVersion;
    manifest["seed"] = cfg.seed;
    manifest["reps"] = cfg.reps;
    manifest["threads"] = cfg.threads ? cfg.threads : std::thread::hardware_concurrency();
    manifest["cells"] = table.cells.size();
    manifest["config"] = read_file(o.config);
    manifest["eigen_version"] = std::to_string(EIGEN_WORLD_VERSION) + "." +
                                std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                std::to_string(EIGEN_MINOR_VERSION);
    manifest["compiler"] = __VERSION__;
    manifest["wall_seconds"] = wall;
    write_file((fs::path(o.out) / "manifest.json").string(), manifest.dump(2) + "\n");
    return 0;
}

struct DesignOpts {
    std::string input, out, mode = "rem";
    double pa = 0.01;
    std::uint64_t seed = 1;
    long n1 = -1;
    long max_attempts = 1000000;
};

int run_design(const DesignOpts& o) {
    std::ifstream in(o.input);
    if (!in) throw InputError("cannot open '" + o.input + "'");
    const MatrixXd raw = read_covariates_csv(in);
    const MatrixXd x = center_covariates(raw).centered;
    const Index n = x.rows();
    const Index n1 = o.n1 >= 0 ? o.n1 : n / 2;
    if (n1 < 1 || n1 >= n) throw InputError("n1 must lie in [1, n-1]");

    DesignSpec spec;
    if (parse_design_kind(o.mode) == DesignKind::ReM) {
        if (!(o.pa > 0.0 && o.pa < 1.0)) throw InputError("--pa must lie in (0, 1)");
        spec = DesignSpec::rem_from_pa(n1, o.pa, x.cols());
    } else {
        spec = DesignSpec::cre(n1);
    }
    Rng rng = make_stream(o.seed, 0, 0);
    const MahalanobisBalance balance(x);
    const AssignmentVector a = draw_assignment(spec, &balance, n, rng, o.max_attempts);

    std::ostringstream csv;
    csv << "unit,z\n";
    for (Index i = 0; i < n; ++i) csv << i << ',' << static_cast<int>(a.z[i]) << '\n';
    if (o.out.empty() || o.out == "-") std::cout << csv.str();
    else write_file(o.out, csv.str());

    nlohmann::ordered_json summary;
    summary["design"] = to_string(spec.kind);
    summary["n"] = n;
    summary["n1"] = n1;
    summary["a"] = std::isfinite(spec.a) ? nlohmann::ordered_json(spec.a) : nlohmann::ordered_json("inf");
    summary["mahalanobis"] = a.mahalanobis;
    summary["attempts"] = a.accepted_after;
    (o.out.empty() || o.out == "-" ? std::cerr : std::cout) << summary.dump() << "\n";
    return 0;
}

struct LambdaOpts {
    long k = 1;
    std::optional<double> pa, a;
    double tail = 0.025;
    std::optional<double> rho;
};

int run_lambda(const LambdaOpts& o) {
    MixtureParams p;
    p.k = o.k;
    p.tail = o.tail;
    if (o.pa && o.a) throw InputError("give at most one of --pa and --a");
    if (o.pa) p.a = threshold_from_pa(*o.pa, o.k);
    if (o.a) p.a = *o.a;
    const auto table = lambda_table(p);
    nlohmann::ordered_json j;
    j["k"] = p.k;
    j["a"] = std::isfinite(p.a) ? nlohmann::ordered_json(p.a) : nlohmann::ordered_json("inf");
    j["tail"] = p.tail;
    if (o.rho) {
        j["rho"] = *o.rho;
        j["lambda"] = (*table)(*o.rho);
    } else {
        j["rho"] = table->rho_grid();
        j["lambda"] = table->lambda_values();
    }
    std::cout << j.dump() << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Inference for the sample local average treatment effect"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);

    AnalyzeOpts ao;
    auto* analyze_cmd = app.add_subcommand("analyze", "Per-stratum confidence sets from a CSV file");
    analyze_cmd->add_option("--input", ao.input, "CSV with columns z,w,y[,x1..xK][,stratum]")->required();
    analyze_cmd->add_option("--methods", ao.methods, "Comma list of wald,far,ts,ts_<gamma>,ts_f10,wald_f10")
        ->capture_default_str();
    analyze_cmd->add_option("--adjust", ao.adjust, "Regression adjustment")
        ->check(CLI::IsMember({"none", "ehw", "hc2", "hc3"}))
        ->capture_default_str();
    analyze_cmd->add_option("--design", ao.design, "Assignment mechanism")
        ->check(CLI::IsMember({"cre", "rem"}))
        ->capture_default_str();
    analyze_cmd->add_option("--pa", ao.pa, "ReM acceptance probability")->capture_default_str();
    analyze_cmd->add_option("--alpha", ao.alpha, "1 - confidence level")->capture_default_str();
    analyze_cmd->add_option("--gamma", ao.gamma, "First-stage test level")->capture_default_str();
    analyze_cmd->add_option("--pplus", ao.pplus, "First-stage null value")->capture_default_str();
    analyze_cmd->add_option("--out", ao.out, "Report JSON path (default stdout)");
    analyze_cmd->add_option("--plot-data", ao.plot, "Plot-data CSV path");
    analyze_cmd->add_option("--threads", ao.threads, "Worker threads")->capture_default_str();

    SimulateOpts so;
    auto* simulate_cmd = app.add_subcommand("simulate", "Monte Carlo study from a config file");
    simulate_cmd->add_option("--config", so.config, "key = value scenario file")->required();
    simulate_cmd->add_option("--out", so.out, "Output directory")->required();
    simulate_cmd->add_option("--reps", so.reps, "Override replications");
    simulate_cmd->add_option("--seed", so.seed, "Override base seed");
    simulate_cmd->add_option("--threads", so.threads, "Worker threads (0: all cores)");

    DesignOpts dopt;
    auto* design_cmd = app.add_subcommand("design", "Draw one assignment vector");
    design_cmd->add_option("--input", dopt.input, "CSV with covariate columns x1..xK")->required();
    design_cmd->add_option("--mode", dopt.mode, "cre or rem")
        ->check(CLI::IsMember({"cre", "rem"}))
        ->capture_default_str();
    design_cmd->add_option("--pa", dopt.pa, "ReM acceptance probability")->capture_default_str();
    design_cmd->add_option("--seed", dopt.seed, "Seed")->capture_default_str();
    design_cmd->add_option("--n1", dopt.n1, "Treated count (default n/2)");
    design_cmd->add_option("--max-attempts", dopt.max_attempts, "Rejection sampling budget")
        ->capture_default_str();
    design_cmd->add_option("--out", dopt.out, "Assignment CSV path (default stdout)");

    LambdaOpts lo;
    auto* lambda_cmd = app.add_subcommand("lambda", "Tabulate the rerandomization quantile lambda");
    lambda_cmd->add_option("--k", lo.k, "Number of covariates")->capture_default_str();
    lambda_cmd->add_option("--pa", lo.pa, "Acceptance probability (sets a)");
    lambda_cmd->add_option("--a", lo.a, "Threshold a");
    lambda_cmd->add_option("--tail", lo.tail, "Upper-tail probability")->capture_default_str();
    lambda_cmd->add_option("--rho", lo.rho, "Single rho in [0, 1]; default prints the grid");

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitInput;
    }

    try {
        if (*analyze_cmd) return run_analyze(ao);
        if (*simulate_cmd) return run_simulate(so);
        if (*design_cmd) return run_design(dopt);
        if (*lambda_cmd) return run_lambda(lo);
    } catch (const InfeasibleError& e) {
        std::cerr << "error: " << e.what() << " (observed acceptance rate " << e.observed_rate() << ")\n";
        return kExitInfeasible;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInput;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInput;
    }
    return kExitInput;
}
