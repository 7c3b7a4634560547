#include "late/mixture_dist.hpp"

#include "late/error.hpp"
#include "late/special_functions.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <tuple>

namespace late {

void MixtureParams::check() const {
    if (k < 1) throw InputError("mixture needs K >= 1");
    if (!(a > 0.0)) throw InputError("mixture truncation a must be positive");
    if (!(tail > 0.0 && tail < 0.5)) throw InputError("mixture tail must lie in (0, 0.5)");
}

std::vector<double> sample_L(const MixtureParams& params, Rng& rng, long count) {
    params.check();
    if (count < 1) throw InputError("sample_L: count must be positive");
    const double k = static_cast<double>(params.k);
    const bool truncated = std::isfinite(params.a);
    const double upper = truncated ? chisq_cdf(params.a, k) : 1.0;

    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::chi_squared_distribution<double> chisq(k);
    std::gamma_distribution<double> g_half(0.5, 1.0);
    std::gamma_distribution<double> g_rest(params.k > 1 ? 0.5 * (k - 1.0) : 1.0, 1.0);

    std::vector<double> out(static_cast<std::size_t>(count));
    for (auto& v : out) {
        double c2;
        if (truncated) {
            double u;
            do u = unif(rng) * upper; while (!(u > 0.0));
            c2 = std::min(chisq_quantile(u, k), params.a);
        } else {
            c2 = chisq(rng);
        }
        double beta = 1.0;
        if (params.k > 1) {
            const double g1 = g_half(rng);
            beta = g1 / (g1 + g_rest(rng));
        }
        const double sign = unif(rng) < 0.5 ? -1.0 : 1.0;
        v = std::sqrt(c2) * sign * std::sqrt(beta);
    }
    return out;
}

std::vector<double> isotonic_nonincreasing(const std::vector<double>& values) {
    // Pool adjacent violators on blocks (mean, weight).
    std::vector<double> mean;
    std::vector<std::size_t> weight;
    for (double v : values) {
        mean.push_back(v);
        weight.push_back(1);
        while (mean.size() > 1 && mean[mean.size() - 2] < mean.back()) {
            const std::size_t w1 = weight[weight.size() - 2], w2 = weight.back();
            const double m = (mean[mean.size() - 2] * w1 + mean.back() * w2) / static_cast<double>(w1 + w2);
            mean.pop_back();
            weight.pop_back();
            mean.back() = m;
            weight.back() = w1 + w2;
        }
    }
    std::vector<double> out;
    out.reserve(values.size());
    for (std::size_t b = 0; b < mean.size(); ++b) out.insert(out.end(), weight[b], mean[b]);
    return out;
}

namespace {

// Type-7 sample quantile; reorders `v`.
double sample_quantile(std::vector<double>& v, double p) {
    const double pos = p * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(lo), v.end());
    const double a = v[lo];
    if (lo + 1 >= v.size()) return a;
    const double b = *std::min_element(v.begin() + static_cast<std::ptrdiff_t>(lo) + 1, v.end());
    return a + (pos - static_cast<double>(lo)) * (b - a);
}

} // namespace

MixtureQuantileTable MixtureQuantileTable::build(const MixtureParams& params, std::uint64_t seed,
                                                 long draws, int grid_points) {
    params.check();
    if (grid_points < 2) throw InputError("quantile table needs at least two grid points");
    if (draws < 100) throw InputError("quantile table needs at least 100 draws");

    MixtureQuantileTable t;
    t.params_ = params;
    t.draws_ = draws;
    t.seed_ = seed;
    const double z = normal_quantile(1.0 - params.tail);
    t.rho_.resize(static_cast<std::size_t>(grid_points));
    for (int g = 0; g < grid_points; ++g) t.rho_[static_cast<std::size_t>(g)] = static_cast<double>(g) / (grid_points - 1);

    Rng rng(seed);
    std::normal_distribution<double> normal;
    std::vector<double> e0(static_cast<std::size_t>(draws));
    for (auto& e : e0) e = normal(rng);
    const std::vector<double> l = sample_L(params, rng, draws);

    // The mixture is symmetric, so its upper `tail` quantile is the
    // (1 - 2 tail) quantile of its absolute value.
    std::vector<double> folded(static_cast<std::size_t>(draws));
    for (double rho : t.rho_) {
        const double s0 = std::sqrt(1.0 - rho), s1 = std::sqrt(rho);
        for (std::size_t j = 0; j < folded.size(); ++j) folded[j] = std::abs(s0 * e0[j] + s1 * l[j]);
        t.raw_.push_back(sample_quantile(folded, 1.0 - 2.0 * params.tail));
    }

    std::vector<double> capped = t.raw_;
    for (auto& v : capped) v = std::clamp(v, 0.0, z);
    capped.front() = z;
    t.lambda_ = isotonic_nonincreasing(capped);
    return t;
}

double MixtureQuantileTable::operator()(double rho) const {
    if (!(rho >= 0.0 && rho <= 1.0)) throw InputError("lambda: rho must lie in [0,1]");
    const double pos = rho * static_cast<double>(rho_.size() - 1);
    const auto lo = std::min(static_cast<std::size_t>(pos), rho_.size() - 2);
    const double frac = pos - static_cast<double>(lo);
    return lambda_[lo] + frac * (lambda_[lo + 1] - lambda_[lo]);
}

double MixtureQuantileTable::max_raw_violation() const {
    double worst = 0.0;
    for (std::size_t i = 1; i < raw_.size(); ++i) worst = std::max(worst, raw_[i] - raw_[i - 1]);
    return worst;
}

std::shared_ptr<const MixtureQuantileTable> lambda_table(const MixtureParams& params) {
    params.check();
    struct Entry {
        std::once_flag once;
        std::shared_ptr<const MixtureQuantileTable> table;
    };
    static std::mutex mutex;
    static std::map<std::tuple<Index, double, double>, std::shared_ptr<Entry>> cache;

    std::shared_ptr<Entry> entry;
    {
        std::lock_guard<std::mutex> lock(mutex);
        auto& slot = cache[{params.k, params.a, params.tail}];
        if (!slot) slot = std::make_shared<Entry>();
        entry = slot;
    }
    std::call_once(entry->once, [&] {
        entry->table = std::make_shared<const MixtureQuantileTable>(MixtureQuantileTable::build(params));
    });
    return entry->table;
}

double lambda_quantile(const MixtureParams& params, double rho) {
    return (*lambda_table(params))(rho);
}

} // namespace late
