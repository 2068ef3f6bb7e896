#include "hebb/pruning.hpp"

#include <boost/math/distributions/chi_squared.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

namespace hebb {

namespace {

constexpr double em_tolerance = 1e-8;
constexpr int em_max_iterations = 500;
constexpr double min_log_std = 1e-10;
const double log_sqrt_2pi = 0.5 * std::log(2.0 * std::numbers::pi);

struct GaussComponent {
    double w, mu, sigma;
};

double gaussian_log_likelihood(const std::vector<double>& y, const std::vector<GaussComponent>& comps,
                               std::vector<double>* resp) {
    const std::size_t k = comps.size();
    std::vector<double> logp(k);
    double total = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        double peak = -std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < k; ++c) {
            const double z = (y[i] - comps[c].mu) / comps[c].sigma;
            logp[c] = std::log(comps[c].w) - std::log(comps[c].sigma) - log_sqrt_2pi - 0.5 * z * z;
            peak = std::max(peak, logp[c]);
        }
        double sum = 0.0;
        for (std::size_t c = 0; c < k; ++c) sum += std::exp(logp[c] - peak);
        const double lse = peak + std::log(sum);
        total += lse;
        if (resp) {
            for (std::size_t c = 0; c < k; ++c) (*resp)[i * k + c] = std::exp(logp[c] - lse);
        }
    }
    return total;
}

struct EmOutcome {
    bool ok = false;
    std::vector<GaussComponent> comps;
    double ll = -std::numeric_limits<double>::infinity();
    int iterations = 0;
    std::vector<double> trace;
};

EmOutcome run_em(const std::vector<double>& y, std::vector<GaussComponent> comps) {
    const std::size_t n = y.size();
    const std::size_t k = comps.size();
    std::vector<double> resp(n * k);
    EmOutcome out;
    double ll = gaussian_log_likelihood(y, comps, &resp);
    out.trace.push_back(ll);
    for (int it = 0; it < em_max_iterations; ++it) {
        for (std::size_t c = 0; c < k; ++c) {
            double nk = 0.0;
            double s1 = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                nk += resp[i * k + c];
                s1 += resp[i * k + c] * y[i];
            }
            if (!(nk > 0.0)) return out;
            const double mu = s1 / nk;
            double s2 = 0.0;
            for (std::size_t i = 0; i < n; ++i) s2 += resp[i * k + c] * (y[i] - mu) * (y[i] - mu);
            const double sigma = std::sqrt(s2 / nk);
            if (!(sigma >= min_log_std)) return out;
            comps[c] = {nk / static_cast<double>(n), mu, sigma};
        }
        const double next = gaussian_log_likelihood(y, comps, &resp);
        out.trace.push_back(next);
        out.iterations = it + 1;
        const double gain = next - ll;
        ll = next;
        if (gain < em_tolerance) break;
    }
    out.ok = std::isfinite(ll);
    out.comps = std::move(comps);
    out.ll = ll;
    return out;
}

double mean_of(const std::vector<double>& y) {
    double s = 0.0;
    for (double v : y) s += v;
    return s / static_cast<double>(y.size());
}

double std_of(const std::vector<double>& y, double mu) {
    double s = 0.0;
    for (double v : y) s += (v - mu) * (v - mu);
    return std::sqrt(s / static_cast<double>(y.size()));
}

MixtureModel to_model(const EmOutcome& em, double log_jacobian) {
    MixtureModel m;
    for (const auto& c : em.comps) m.components.push_back({c.w, c.mu, c.sigma});
    std::sort(m.components.begin(), m.components.end(),
              [](const MixtureComponent& a, const MixtureComponent& b) { return a.log_mean < b.log_mean; });
    m.log_likelihood = em.ll - log_jacobian;
    m.iterations = em.iterations;
    for (double t : em.trace) m.trace.push_back(t - log_jacobian);
    return m;
}

}  // namespace

double MixtureComponent::mean() const { return std::exp(log_mean + 0.5 * log_std * log_std); }

Vec row_variances(const Mat& s) {
    Vec out(s.rows());
    for (Eigen::Index i = 0; i < s.rows(); ++i) {
        if (s.cols() < 2) {
            out[i] = 0.0;
            continue;
        }
        const double mu = s.row(i).mean();
        out[i] = (s.row(i).array() - mu).square().sum() / static_cast<double>(s.cols() - 1);
    }
    return out;
}

MixtureModel fit_lognormal_mixture(std::span<const double> values, int num_components, std::uint64_t seed,
                                   const MixtureModel* warm_start) {
    if (num_components < 1 || num_components > max_mixture_components)
        throw ContractError("fit_lognormal_mixture: components must be in 1..4");
    if (values.size() < static_cast<std::size_t>(10 * num_components))
        throw ContractError("fit_lognormal_mixture: need at least 10 values per component");
    std::vector<double> y;
    y.reserve(values.size());
    double log_jacobian = 0.0;  // sum log(v): converts the Gaussian likelihood of log(v) back to v
    for (double v : values) {
        if (!(v > 0.0) || !std::isfinite(v)) throw ContractError("fit_lognormal_mixture: values must be positive and finite");
        y.push_back(std::log(v));
        log_jacobian += y.back();
    }
    const double mu_all = mean_of(y);
    const double sd_all = std_of(y, mu_all);
    if (!(sd_all >= min_log_std) && num_components > 1)
        throw DegenerateInputError("fit_lognormal_mixture: values are constant");

    if (num_components == 1) {
        if (!(sd_all >= min_log_std)) throw DegenerateInputError("fit_lognormal_mixture: values are constant");
        EmOutcome em;
        em.ok = true;
        em.comps = {{1.0, mu_all, sd_all}};
        em.ll = gaussian_log_likelihood(y, em.comps, nullptr);
        em.trace = {em.ll};
        return to_model(em, log_jacobian);
    }

    const auto k = static_cast<std::size_t>(num_components);
    std::vector<std::vector<GaussComponent>> starts;
    // Restart 0: equal-count quantile groups of the sorted logs.
    {
        std::vector<double> sorted = y;
        std::sort(sorted.begin(), sorted.end());
        std::vector<GaussComponent> init;
        for (std::size_t c = 0; c < k; ++c) {
            const std::size_t lo = c * sorted.size() / k;
            const std::size_t hi = (c + 1) * sorted.size() / k;
            std::vector<double> part(sorted.begin() + static_cast<std::ptrdiff_t>(lo), sorted.begin() + static_cast<std::ptrdiff_t>(hi));
            const double m = mean_of(part);
            init.push_back({1.0 / static_cast<double>(k), m, std::max(std_of(part, m), sd_all / static_cast<double>(k))});
        }
        starts.push_back(std::move(init));
    }
    Rng rng(seed);
    for (int r = 1; r < mixture_restarts; ++r) {
        std::vector<GaussComponent> init;
        for (std::size_t c = 0; c < k; ++c)
            init.push_back({1.0 / static_cast<double>(k), y[static_cast<std::size_t>(rng.below(y.size()))], sd_all});
        starts.push_back(std::move(init));
    }
    if (warm_start && warm_start->components.size() + 1 == k) {
        std::vector<GaussComponent> init;
        for (const auto& c : warm_start->components) init.push_back({c.weight, c.log_mean, c.log_std});
        auto widest = std::max_element(init.begin(), init.end(),
                                       [](const GaussComponent& a, const GaussComponent& b) { return a.w * a.sigma < b.w * b.sigma; });
        const GaussComponent base = *widest;
        *widest = {base.w / 2.0, base.mu - 0.5 * base.sigma, base.sigma};
        init.push_back({base.w / 2.0, base.mu + 0.5 * base.sigma, base.sigma});
        starts.push_back(std::move(init));
    }

    EmOutcome best;
    for (auto& s : starts) {
        EmOutcome em = run_em(y, std::move(s));
        // Strict comparison keeps the earliest restart on ties.
        if (em.ok && (!best.ok || em.ll > best.ll)) best = std::move(em);
    }
    if (!best.ok)
        throw DegenerateInputError("fit_lognormal_mixture: every EM restart collapsed a component (" +
                                   std::to_string(num_components) + " components)");
    return to_model(best, log_jacobian);
}

double chi_square_quantile(double probability, int dof) {
    if (!(probability > 0.0 && probability < 1.0) || dof < 1) throw ContractError("chi_square_quantile: bad arguments");
    return boost::math::quantile(boost::math::chi_squared_distribution<double>(dof), probability);
}

LrtSelection select_mixture_lrt(std::span<const double> values, double alpha_level, std::uint64_t seed) {
    if (!(alpha_level > 0.0 && alpha_level < 1.0)) throw ContractError("select_mixture_lrt: alpha must be in (0,1)");
    LrtSelection sel;
    // Each added log-normal component brings weight, log-mean and log-std.
    sel.critical_value = chi_square_quantile(1.0 - alpha_level, 3);
    const int max_c = std::min<int>(max_mixture_components, static_cast<int>(values.size() / 10));
    if (max_c < 1) throw ContractError("select_mixture_lrt: need at least 10 values");
    sel.fits.push_back(fit_lognormal_mixture(values, 1, seed));
    for (int c = 1; c < max_c; ++c) {
        MixtureModel next = fit_lognormal_mixture(values, c + 1, seed + static_cast<std::uint64_t>(c), &sel.fits.back());
        const double stat = 2.0 * (next.log_likelihood - sel.fits.back().log_likelihood);
        sel.statistics.push_back(stat);
        sel.fits.push_back(std::move(next));
        if (!(stat > sel.critical_value)) {
            sel.fits.pop_back();
            break;
        }
    }
    sel.model = sel.fits.back();
    return sel;
}

std::optional<double> derive_threshold(const MixtureModel& model) {
    if (model.components.size() < 2) return std::nullopt;
    std::vector<double> means;
    for (const auto& c : model.components) means.push_back(c.mean());
    std::sort(means.begin(), means.end(), std::greater<>());
    return 0.5 * (means[0] + means[1]);
}

PruneResult prune(const SynapseMatrix& synapses, double threshold) {
    if (!(threshold > 0.0)) throw ContractError("prune: threshold must be positive");
    PruneResult out;
    out.report.variances = row_variances(synapses.S);
    out.report.threshold = threshold;
    std::vector<Eigen::Index> keep;
    for (Eigen::Index i = 0; i < synapses.S.rows(); ++i) {
        if (out.report.variances[i] > threshold)
            out.report.pruned_rows.push_back(static_cast<int>(i));
        else
            keep.push_back(i);
    }
    if (keep.empty()) throw Error("prune: threshold " + std::to_string(threshold) + " removes every hidden unit");
    out.synapses.config = synapses.config;
    out.synapses.trained_epochs = synapses.trained_epochs;
    out.synapses.S.resize(static_cast<Eigen::Index>(keep.size()), synapses.S.cols());
    for (std::size_t r = 0; r < keep.size(); ++r) out.synapses.S.row(static_cast<Eigen::Index>(r)) = synapses.S.row(keep[r]);
    out.synapses.config.hidden_units = static_cast<int>(keep.size());
    out.synapses.config.k = std::min(out.synapses.config.k, out.synapses.config.hidden_units);
    return out;
}

PruneResult auto_prune(const SynapseMatrix& synapses, double alpha_level, std::uint64_t seed,
                       std::optional<double> threshold_override) {
    const Vec variances = row_variances(synapses.S);
    const LrtSelection sel = select_mixture_lrt(std::span<const double>(variances.data(), static_cast<std::size_t>(variances.size())),
                                                alpha_level, seed);
    const int selected = static_cast<int>(sel.model.components.size());
    std::optional<double> threshold = threshold_override ? threshold_override : derive_threshold(sel.model);
    PruneResult out;
    if (threshold) {
        out = prune(synapses, *threshold);
    } else {
        out.synapses = synapses;
        out.report.variances = variances;
    }
    out.report.selected_components = selected;
    return out;
}

}  // namespace hebb
