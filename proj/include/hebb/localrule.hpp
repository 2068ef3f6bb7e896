#pragma once

#include "hebb/data.hpp"
#include "hebb/types.hpp"

#include <cstdint>
#include <functional>

namespace hebb {

/// How a raw batch update is scaled before it is added to S.
enum class UpdateScaling {
    mean,     // S += rate * E_batch[...]
    max_abs,  // S += rate * dS / max|dS|, as in the reference implementation of the rule
};

struct RuleConfig {
    double p = 2.0;           // Lebesgue exponent
    int k = 2;                // rank of the inhibited unit
    double delta = 0.4;       // inhibition strength
    double eta = 0.02;        // initial learning rate, decays linearly to 0
    double radius = 1.0;      // target value of sum_j |S_ij|^p
    int epochs = 1000;
    int batch_size = 100;
    int hidden_units = 2000;
    UpdateScaling scaling = UpdateScaling::max_abs;
    double init_std = 0.0;    // std of the initial entries; 0 selects 1/sqrt(input_dim)
    std::uint64_t seed = 0;

    void validate() const;
};

struct SynapseMatrix {
    Mat S;  // hidden_units x input_dim
    RuleConfig config;
    int trained_epochs = 0;
};

struct ConvergenceReport {
    bool passed = false;
    double fraction_converged = 0.0;  // rows with | |S_i|_p^p - R | <= tolerance
    double mean_entry = 0.0;
    bool norm_condition = false;
    bool mean_condition = false;
};

/// Winner-take-all gate: +1 at the largest entry, -delta at the k-th largest, 0 elsewhere.
/// Ties are ranked by lowest index.
Vec rank_gate(const Vec& h, int k, double delta);

/// Raw update eta * E_batch[g(h_i) (x_j - h_i S_ij)] with h = lebesgue_weights(S, p) x.
/// Rows of `batch` are samples. The update is returned, not applied.
Mat kh_update_batch(const SynapseMatrix& synapses, const Mat& batch, double eta);
inline Mat kh_update_batch(const SynapseMatrix& synapses, const Mat& batch) {
    return kh_update_batch(synapses, batch, synapses.config.eta);
}

/// Initial synapses: i.i.d. N(0, init_std^2), or N(0, 1/input_dim) when init_std is 0.
SynapseMatrix initial_synapses(const RuleConfig& config, Eigen::Index input_dim);

using EpochCallback = std::function<void(int epoch, const SynapseMatrix&)>;

/// Shuffled-minibatch training over `config.epochs` epochs with rate eta * (1 - epoch / epochs).
/// Throws DivergenceError if S becomes non-finite.
SynapseMatrix train_unsupervised(const RuleConfig& config, const Dataset& data, const EpochCallback& on_epoch = {});

/// Continues training an existing matrix from `synapses.trained_epochs` up to its config's epoch count.
void continue_unsupervised(SynapseMatrix& synapses, const Dataset& data, const EpochCallback& on_epoch = {});

/// sum_j |S_ij|^p for each row.
Vec row_p_norms(const Mat& s, double p);

/// Accepts the matrix iff more than 10% of rows have | |S_i|_p^p - R | <= 1e-2
/// and the mean entry exceeds -R/2.
ConvergenceReport convergence_check(const SynapseMatrix& synapses, double tolerance = 1e-2,
                                    double min_fraction = 0.1);

}  // namespace hebb
