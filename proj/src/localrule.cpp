#include "hebb/localrule.hpp"

#include "hebb/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

namespace hebb {

void RuleConfig::validate() const {
    if (!(p >= 2.0)) throw ConfigError("rule: p must be >= 2");
    if (k < 2) throw ConfigError("rule: k must be >= 2");
    if (hidden_units < 1) throw ConfigError("rule: hidden_units must be positive");
    if (k > hidden_units) throw ConfigError("rule: k must not exceed hidden_units");
    if (!(delta >= 0.0)) throw ConfigError("rule: delta must be >= 0");
    if (!(eta > 0.0)) throw ConfigError("rule: eta must be > 0");
    if (!(radius > 0.0)) throw ConfigError("rule: radius must be > 0");
    if (epochs < 0) throw ConfigError("rule: epochs must be >= 0");
    if (batch_size < 1) throw ConfigError("rule: batch_size must be positive");
    if (!(init_std >= 0.0)) throw ConfigError("rule: init_std must be >= 0");
}

namespace {

// Writes +1 / -delta into `g` (already zeroed) for one row of currents.
void gate_row(const double* h, Eigen::Index n, int k, double delta, double* g, std::vector<Eigen::Index>& order) {
    order.resize(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    auto before = [h](Eigen::Index a, Eigen::Index b) { return h[a] > h[b] || (h[a] == h[b] && a < b); };
    std::nth_element(order.begin(), order.begin() + (k - 1), order.end(), before);
    const Eigen::Index kth = order[static_cast<std::size_t>(k - 1)];
    const Eigen::Index top = *std::min_element(order.begin(), order.begin() + k, before);
    g[top] = 1.0;
    if (kth != top) g[kth] = -delta;
}

Mat effective_weights(const Mat& s, double p) {
    if (p == 2.0) return s;
    if (p == 3.0) return s.cwiseProduct(s.cwiseAbs());
    if (p == 4.0) return s.cwiseProduct(s.cwiseProduct(s));
    return lebesgue_weights(s, p);
}

}  // namespace

Vec rank_gate(const Vec& h, int k, double delta) {
    if (k < 1 || h.size() < k) throw ContractError("rank_gate: vector shorter than k");
    Vec g = Vec::Zero(h.size());
    std::vector<Eigen::Index> order;
    gate_row(h.data(), h.size(), k, delta, g.data(), order);
    return g;
}

Mat kh_update_batch(const SynapseMatrix& synapses, const Mat& batch, double eta) {
    const Mat& s = synapses.S;
    if (batch.rows() == 0) throw ContractError("kh_update_batch: empty batch");
    if (batch.cols() != s.cols()) throw ContractError("kh_update_batch: input dimension mismatch");
    const auto& cfg = synapses.config;
    const Mat w = effective_weights(s, cfg.p);
    const Mat currents = batch * w.transpose();  // B x hidden
    Mat gates = Mat::Zero(currents.rows(), currents.cols());
    std::vector<Eigen::Index> order;
    for (Eigen::Index b = 0; b < currents.rows(); ++b)
        gate_row(currents.row(b).data(), currents.cols(), cfg.k, cfg.delta, gates.row(b).data(), order);

    // sum_b g_bi x_bj - (sum_b g_bi h_bi) S_ij
    const Vec decay = gates.cwiseProduct(currents).colwise().sum().transpose();
    Mat ds = gates.transpose() * batch;
    ds -= decay.asDiagonal() * s;
    ds *= eta / static_cast<double>(batch.rows());
    return ds;
}

SynapseMatrix initial_synapses(const RuleConfig& config, Eigen::Index input_dim) {
    config.validate();
    Rng rng(config.seed);
    SynapseMatrix out;
    out.config = config;
    out.S.resize(config.hidden_units, input_dim);
    const double scale = config.init_std > 0.0 ? config.init_std : 1.0 / std::sqrt(static_cast<double>(input_dim));
    for (Eigen::Index i = 0; i < out.S.rows(); ++i)
        for (Eigen::Index j = 0; j < out.S.cols(); ++j) out.S(i, j) = scale * rng.normal();
    return out;
}

void continue_unsupervised(SynapseMatrix& synapses, const Dataset& data, const EpochCallback& on_epoch) {
    const auto& cfg = synapses.config;
    cfg.validate();
    if (data.dim() != synapses.S.cols()) throw ContractError("train_unsupervised: input dimension mismatch");
    if (data.count() == 0) throw ContractError("train_unsupervised: empty dataset");

    std::vector<Eigen::Index> order(static_cast<std::size_t>(data.count()));
    Mat batch;
    for (int epoch = synapses.trained_epochs; epoch < cfg.epochs; ++epoch) {
        // Per-epoch stream so resumed training matches uninterrupted training.
        Rng rng = worker_rng(cfg.seed ^ 0x6b68ULL, static_cast<std::uint64_t>(epoch));
        std::iota(order.begin(), order.end(), Eigen::Index{0});
        rng.shuffle(order);
        const double rate = cfg.eta * (1.0 - static_cast<double>(epoch) / cfg.epochs);
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
            batch.resize(static_cast<Eigen::Index>(stop - start), data.dim());
            for (std::size_t r = start; r < stop; ++r) batch.row(static_cast<Eigen::Index>(r - start)) = data.inputs.row(order[r]);
            Mat ds = kh_update_batch(synapses, batch, rate);
            if (cfg.scaling == UpdateScaling::max_abs) {
                const double peak = ds.cwiseAbs().maxCoeff();
                // rate is already folded into ds; rescale so the largest step equals rate.
                if (peak > 1e-30) ds *= rate / peak;
            }
            synapses.S += ds;
        }
        if (!synapses.S.allFinite())
            throw DivergenceError("train_unsupervised: synapses diverged in epoch " + std::to_string(epoch), epoch);
        synapses.trained_epochs = epoch + 1;
        if (on_epoch) on_epoch(epoch, synapses);
    }
}

SynapseMatrix train_unsupervised(const RuleConfig& config, const Dataset& data, const EpochCallback& on_epoch) {
    SynapseMatrix s = initial_synapses(config, data.dim());
    continue_unsupervised(s, data, on_epoch);
    return s;
}

Vec row_p_norms(const Mat& s, double p) {
    if (p == 2.0) return s.rowwise().squaredNorm();
    return s.cwiseAbs().unaryExpr([p](double v) { return std::pow(v, p); }).rowwise().sum();
}

ConvergenceReport convergence_check(const SynapseMatrix& synapses, double tolerance, double min_fraction) {
    ConvergenceReport r;
    const auto& cfg = synapses.config;
    const Vec norms = row_p_norms(synapses.S, cfg.p);
    Eigen::Index converged = 0;
    for (Eigen::Index i = 0; i < norms.size(); ++i)
        if (std::abs(norms[i] - cfg.radius) <= tolerance) ++converged;
    r.fraction_converged = norms.size() > 0 ? static_cast<double>(converged) / static_cast<double>(norms.size()) : 0.0;
    r.mean_entry = synapses.S.size() > 0 ? synapses.S.mean() : 0.0;
    r.norm_condition = r.fraction_converged > min_fraction;
    r.mean_condition = r.mean_entry > -cfg.radius / 2.0;
    r.passed = r.norm_condition && r.mean_condition;
    return r;
}

}  // namespace hebb
