#include "hebb/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace hebb {

void TrainConfig::validate() const {
    if (batch_size < 1) throw ConfigError("train: batch_size must be positive");
    if (epochs < 0) throw ConfigError("train: epochs must be >= 0");
    if (!(reg_coefficient >= 0.0)) throw ConfigError("train: reg_coefficient must be >= 0");
    if (n_proj < 1) throw ConfigError("train: n_proj must be >= 1");
    if (spectral_cutoff < 0) throw ConfigError("train: spectral_cutoff must be >= 0");
    if (reg == Regularizer::spectral && batch_size < 2) throw ConfigError("train: spectral regularization needs batch_size >= 2");
    if (!(adam.lr > 0.0) || !(adam.beta1 >= 0.0 && adam.beta1 < 1.0) || !(adam.beta2 >= 0.0 && adam.beta2 < 1.0) ||
        !(adam.eps > 0.0))
        throw ConfigError("train: invalid Adam hyperparameters");
}

double default_reg_coefficient(Regularizer reg) {
    switch (reg) {
        case Regularizer::none: return 0.0;
        case Regularizer::l2: return 1e-3;
        case Regularizer::jacobian: return 1e-2;
        case Regularizer::spectral: return 1e-2;
    }
    return 0.0;
}

double cross_entropy(const Vec& logits, int label) {
    if (label < 0 || label >= logits.size()) throw ContractError("cross_entropy: label out of range");
    const double top = logits.maxCoeff();
    const double lse = top + std::log((logits.array() - top).exp().sum());
    return lse - logits[label];
}

double l2_penalty(const Mat& w) { return w.squaredNorm(); }

Mat draw_projections(int n_proj, Eigen::Index hidden, Rng& rng) {
    Mat v(n_proj, hidden);
    for (int k = 0; k < n_proj; ++k) {
        Vec d = rng.normal_vector(hidden);
        double norm = d.norm();
        while (norm == 0.0) {
            d = rng.normal_vector(hidden);
            norm = d.norm();
        }
        v.row(k) = (d / norm).transpose();
    }
    return v;
}

namespace {

Mat activation_slopes(const Mat& z, double n) {
    return z.unaryExpr([n](double v) { return activation_derivative(v, n); });
}

}  // namespace

PenaltyGradient jacobian_penalty_projected(const EncoderDecoderModel& model, const Mat& inputs, const Mat& projections) {
    if (projections.rows() < 1 || projections.cols() != model.hidden_dim())
        throw ContractError("jacobian_penalty_projected: projections must be n_proj x hidden");
    const double n = model.act_power;
    const Mat z = pre_activations(model, inputs);
    const Mat slope = activation_slopes(z, n);
    const Mat curve = z.unaryExpr([n](double v) { return activation_second_derivative(v, n); });
    const auto batch = static_cast<double>(inputs.rows());
    const double c = static_cast<double>(model.hidden_dim()) / static_cast<double>(projections.rows()) / batch;

    PenaltyGradient out;
    out.grad = Mat::Zero(model.W.rows(), model.W.cols());
    for (Eigen::Index k = 0; k < projections.rows(); ++k) {
        // a_b = v * sigma'(z_b); r_b = W^T a_b = v^T J(x_b).
        const Mat a = slope.array().rowwise() * projections.row(k).array();
        const Mat r = a * model.W;  // B x input
        out.value += c * r.squaredNorm();
        // d||r||^2/dW = 2 a r^T + 2 ((W r) * v * sigma''(z)) x^T, summed over the batch.
        Mat through_slope = (r * model.W.transpose()).array() * curve.array();
        through_slope.array().rowwise() *= projections.row(k).array();
        out.grad.noalias() += (2.0 * c) * (a.transpose() * r + through_slope.transpose() * inputs);
    }
    return out;
}

double jacobian_penalty_projected(const EncoderDecoderModel& model, const Mat& inputs, int n_proj, std::uint64_t seed) {
    if (n_proj < 1) throw ContractError("jacobian_penalty_projected: n_proj must be >= 1");
    Rng rng(seed);
    return jacobian_penalty_projected(model, inputs, draw_projections(n_proj, model.hidden_dim(), rng)).value;
}

double jacobian_frobenius_sq_mean(const EncoderDecoderModel& model, const Mat& inputs) {
    const Mat slope = activation_slopes(pre_activations(model, inputs), model.act_power);
    const Vec row_norms = model.W.rowwise().squaredNorm();
    return (slope.array().square().matrix() * row_norms).mean();
}

int spectral_cutoff_for(int requested, Eigen::Index batch, Eigen::Index hidden) {
    const auto limit = static_cast<int>(std::min(batch - 1, hidden));
    if (requested == 0) return std::min(limit, 256);
    if (requested > limit)
        throw ContractError("spectral_penalty: cutoff " + std::to_string(requested) + " exceeds min(batch - 1, hidden) = " +
                            std::to_string(limit));
    return requested;
}

PenaltyGradient spectral_penalty(const Mat& hidden_batch, double target_alpha, int cutoff) {
    const Eigen::Index batch = hidden_batch.rows();
    if (batch < 2) throw ContractError("spectral_penalty: need at least 2 samples");
    if (cutoff < 1 || cutoff > std::min(batch - 1, hidden_batch.cols()))
        throw ContractError("spectral_penalty: cutoff out of range");
    const Mat centered = hidden_batch.rowwise() - hidden_batch.colwise().mean();
    const SymSpectrum spec = sym_eig_descending(covariance(hidden_batch));
    const double l1 = spec.eigenvalues[0];

    PenaltyGradient out;
    Vec weights = Vec::Zero(cutoff);
    for (int idx = 1; idx < cutoff; ++idx) {
        const double target = std::pow(static_cast<double>(idx + 1), -target_alpha);
        const double r = spec.eigenvalues[idx] - l1 * target;
        out.value += r * r;
        weights[idx] = 2.0 * r;
        weights[0] -= 2.0 * r * target;
    }
    const Mat u = spec.eigenvectors.leftCols(cutoff);
    const Mat g = u * weights.asDiagonal() * u.transpose();
    out.grad = (2.0 / static_cast<double>(batch - 1)) * centered * g;
    return out;
}

LossBreakdown loss_and_gradients(const EncoderDecoderModel& model, const Mat& inputs, std::span<const int> labels,
                                 const TrainConfig& config, const Mat& projections) {
    const Eigen::Index batch = inputs.rows();
    if (batch == 0 || static_cast<Eigen::Index>(labels.size()) != batch)
        throw ContractError("loss_and_gradients: inputs and labels must be non-empty and aligned");
    const bool train_encoder = config.mode == TrainMode::end_to_end;
    const double n = model.act_power;

    const Mat z = pre_activations(model, inputs);
    const Mat hidden = z.unaryExpr([n](double v) { return activation(v, n); });
    Mat y = hidden * model.A.transpose();
    y.rowwise() += model.b.transpose();

    LossBreakdown out;
    Mat dy(batch, y.cols());
    for (Eigen::Index r = 0; r < batch; ++r) {
        const int label = labels[static_cast<std::size_t>(r)];
        if (label < 0 || label >= y.cols()) throw ContractError("loss_and_gradients: label out of range");
        const double top = y.row(r).maxCoeff();
        const Eigen::RowVectorXd e = (y.row(r).array() - top).exp();
        const double sum = e.sum();
        out.cross_entropy += top + std::log(sum) - y(r, label);
        dy.row(r) = e / sum;
        dy(r, label) -= 1.0;
    }
    const auto bd = static_cast<double>(batch);
    out.cross_entropy /= bd;
    dy /= bd;

    out.grads.A = dy.transpose() * hidden;
    out.grads.b = dy.colwise().sum().transpose();
    Mat d_hidden;
    if (train_encoder) d_hidden = dy * model.A;

    const double coeff = config.reg_coefficient;
    Mat d_w_reg;
    switch (config.reg) {
        case Regularizer::none: break;
        case Regularizer::l2:
            out.penalty = l2_penalty(model.W);
            if (train_encoder) d_w_reg = (2.0 * coeff) * model.W;
            break;
        case Regularizer::jacobian: {
            if (projections.rows() == 0) throw ContractError("loss_and_gradients: jacobian regularizer needs projections");
            PenaltyGradient pg = jacobian_penalty_projected(model, inputs, projections);
            out.penalty = pg.value;
            if (train_encoder) d_w_reg = coeff * pg.grad;
            break;
        }
        case Regularizer::spectral: {
            const int cutoff = spectral_cutoff_for(config.spectral_cutoff, batch, model.hidden_dim());
            PenaltyGradient pg = spectral_penalty(hidden, config.spectral_target_alpha, cutoff);
            out.penalty = pg.value;
            if (train_encoder) d_hidden += coeff * pg.grad;
            break;
        }
    }
    out.total = out.cross_entropy + coeff * out.penalty;

    if (train_encoder) {
        const Mat dz = d_hidden.cwiseProduct(activation_slopes(z, n));
        out.grads.W = dz.transpose() * inputs;
        if (d_w_reg.size() > 0) out.grads.W += d_w_reg;
    }
    return out;
}

void adam_step(std::span<double> params, std::span<const double> grads, AdamMoments& moments, long step,
               const AdamConfig& config) {
    if (params.size() != grads.size()) throw ContractError("adam_step: parameter and gradient sizes differ");
    if (step < 1) throw ContractError("adam_step: step count is 1-based");
    if (moments.m.size() != params.size()) {
        moments.m.assign(params.size(), 0.0);
        moments.v.assign(params.size(), 0.0);
    }
    const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(step));
    const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        moments.m[i] = config.beta1 * moments.m[i] + (1.0 - config.beta1) * grads[i];
        moments.v[i] = config.beta2 * moments.v[i] + (1.0 - config.beta2) * grads[i] * grads[i];
        const double m_hat = moments.m[i] / c1;
        const double v_hat = moments.v[i] / c2;
        params[i] -= config.lr * m_hat / (std::sqrt(v_hat) + config.eps);
    }
}

namespace {

template <typename Dense>
std::span<double> flat(Dense& m) {
    return {m.data(), static_cast<std::size_t>(m.size())};
}

template <typename Dense>
std::span<const double> flat(const Dense& m) {
    return {m.data(), static_cast<std::size_t>(m.size())};
}

}  // namespace

void apply_adam(EncoderDecoderModel& model, const Gradients& grads, AdamState& state, const AdamConfig& config) {
    ++state.step;
    if (grads.W.size() > 0) adam_step(flat(model.W), flat(grads.W), state.W, state.step, config);
    adam_step(flat(model.A), flat(grads.A), state.A, state.step, config);
    adam_step(flat(model.b), flat(grads.b), state.b, state.step, config);
}

double accuracy(const EncoderDecoderModel& model, const Dataset& data) {
    if (!data.has_labels() || data.count() == 0) throw ContractError("accuracy: labeled, non-empty data required");
    const auto predicted = predict_labels(model, data.inputs);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < predicted.size(); ++i) hits += predicted[i] == data.labels[i] ? 1 : 0;
    return static_cast<double>(hits) / static_cast<double>(predicted.size());
}

double hidden_feature_rms(const EncoderDecoderModel& model, const Dataset& data) {
    constexpr Eigen::Index chunk = 1000;
    double sum = 0.0;
    for (Eigen::Index start = 0; start < data.count(); start += chunk) {
        const Eigen::Index rows = std::min(chunk, data.count() - start);
        sum += hidden_features(model, data.inputs.middleRows(start, rows)).squaredNorm();
    }
    const double entries = static_cast<double>(data.count()) * static_cast<double>(model.hidden_dim());
    return entries > 0.0 ? std::sqrt(sum / entries) : 0.0;
}

TrainResult train_supervised(EncoderDecoderModel model, const Dataset& train, const TrainConfig& config,
                             const Dataset* test) {
    config.validate();
    model.validate();
    if (!train.has_labels() || train.count() == 0) throw ContractError("train_supervised: labeled training data required");
    if (train.dim() != model.input_dim()) throw ContractError("train_supervised: input dimension mismatch");
    model.frozen_encoder = config.mode == TrainMode::decoder_only;

    const Mat original_w = model.W;
    double feature_rms = 0.0;
    if (config.normalize_features && model.frozen_encoder) {
        feature_rms = hidden_feature_rms(model, train);
        // ReLU(W x / c)^n = ReLU(W x)^n / rms for c = rms^(1/n).
        if (feature_rms > 0.0) model.W /= std::pow(feature_rms, 1.0 / model.act_power);
    }
    const auto restore = [&](EncoderDecoderModel& m) {
        if (feature_rms > 0.0) {
            m.W = original_w;
            m.A /= feature_rms;
        }
    };

    TrainResult result;
    Rng rng(config.seed);
    AdamState adam;
    std::vector<Eigen::Index> order(static_cast<std::size_t>(train.count()));
    Mat batch;
    std::vector<int> labels;
    const auto bs = static_cast<std::size_t>(config.batch_size);
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), Eigen::Index{0});
        rng.shuffle(order);
        double loss_sum = 0.0;
        int batches = 0;
        for (std::size_t start = 0; start < order.size(); start += bs) {
            const std::size_t stop = std::min(order.size(), start + bs);
            // A trailing batch too small for a covariance spectrum is dropped.
            if (config.reg == Regularizer::spectral && stop - start < 2) break;
            batch.resize(static_cast<Eigen::Index>(stop - start), train.dim());
            labels.resize(stop - start);
            for (std::size_t r = start; r < stop; ++r) {
                batch.row(static_cast<Eigen::Index>(r - start)) = train.inputs.row(order[r]);
                labels[r - start] = train.labels[static_cast<std::size_t>(order[r])];
            }
            Mat projections;
            if (config.reg == Regularizer::jacobian) projections = draw_projections(config.n_proj, model.hidden_dim(), rng);
            const LossBreakdown lb = loss_and_gradients(model, batch, labels, config, projections);
            if (!std::isfinite(lb.total))
                throw DivergenceError("train_supervised: non-finite loss in epoch " + std::to_string(epoch), epoch);
            apply_adam(model, lb.grads, adam, config.adam);
            loss_sum += lb.total;
            ++batches;
        }
        if (!model.W.allFinite() || !model.A.allFinite() || !model.b.allFinite())
            throw DivergenceError("train_supervised: non-finite parameters in epoch " + std::to_string(epoch), epoch);
        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_loss = batches > 0 ? loss_sum / batches : 0.0;
        rec.train_accuracy = accuracy(model, train);
        if (test) rec.test_accuracy = accuracy(model, *test);
        result.history.push_back(rec);
    }
    restore(model);
    result.model = std::move(model);
    return result;
}

std::string to_string(TrainMode mode) { return mode == TrainMode::decoder_only ? "decoder_only" : "end_to_end"; }

std::string to_string(Regularizer reg) {
    switch (reg) {
        case Regularizer::none: return "none";
        case Regularizer::l2: return "l2";
        case Regularizer::jacobian: return "jacobian";
        case Regularizer::spectral: return "spectral";
    }
    return "none";
}

TrainMode parse_train_mode(const std::string& text) {
    if (text == "decoder_only") return TrainMode::decoder_only;
    if (text == "end_to_end") return TrainMode::end_to_end;
    throw ConfigError("unknown training mode '" + text + "'");
}

Regularizer parse_regularizer(const std::string& text) {
    if (text == "none") return Regularizer::none;
    if (text == "l2") return Regularizer::l2;
    if (text == "jacobian") return Regularizer::jacobian;
    if (text == "spectral") return Regularizer::spectral;
    throw ConfigError("unknown regularizer '" + text + "'");
}

}  // namespace hebb
