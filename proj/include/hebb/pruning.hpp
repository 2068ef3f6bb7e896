#pragma once

#include "hebb/localrule.hpp"
#include "hebb/types.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace hebb {

struct MixtureComponent {
    double weight = 1.0;
    double log_mean = 0.0;  // mean of log(value)
    double log_std = 1.0;

    /// Mean of the log-normal distribution, exp(mu + sigma^2 / 2).
    double mean() const;
};

struct MixtureModel {
    std::vector<MixtureComponent> components;  // sorted by log_mean
    double log_likelihood = 0.0;               // in the original (not log) space
    int iterations = 0;
    std::vector<double> trace;  // log-likelihood per EM iteration of the selected restart
};

struct LrtSelection {
    MixtureModel model;
    std::vector<MixtureModel> fits;  // fits[c-1] has c components; fitting stops at the first non-rejection
    std::vector<double> statistics;  // 2 (LL_{c+1} - LL_c) for each tested step
    double critical_value = 0.0;
};

struct PruneReport {
    Vec variances;
    int selected_components = 1;
    std::optional<double> threshold;
    std::vector<int> pruned_rows;
};

struct PruneResult {
    SynapseMatrix synapses;
    PruneReport report;
};

inline constexpr int max_mixture_components = 4;
inline constexpr int mixture_restarts = 5;

/// Unbiased sample variance of each row.
Vec row_variances(const Mat& s);

/// Log-normal mixture by EM on log(values): best of 5 seeded restarts, stopping when the
/// log-likelihood gain drops below 1e-8 or after 500 iterations. `warm_start` (a fit with
/// one component fewer) adds a restart that splits its widest component, which keeps
/// nested fits ordered by likelihood.
MixtureModel fit_lognormal_mixture(std::span<const double> values, int num_components, std::uint64_t seed,
                                   const MixtureModel* warm_start = nullptr);

/// Upper quantile of the chi-square distribution: P(X <= q) = probability.
double chi_square_quantile(double probability, int dof);

/// Fits 1..4 components and accepts c+1 over c while 2 (LL_{c+1} - LL_c) exceeds the
/// chi-square(3) quantile at 1 - alpha_level.
LrtSelection select_mixture_lrt(std::span<const double> values, double alpha_level, std::uint64_t seed);

/// Midpoint between the log-normal means of the two highest-mean components; none if uni-modal.
std::optional<double> derive_threshold(const MixtureModel& model);

/// Removes every row whose variance exceeds `threshold`.
PruneResult prune(const SynapseMatrix& synapses, double threshold);

/// Full post-processing: variances, LRT model selection, threshold (or `threshold_override`), ablation.
PruneResult auto_prune(const SynapseMatrix& synapses, double alpha_level, std::uint64_t seed,
                       std::optional<double> threshold_override = std::nullopt);

}  // namespace hebb
