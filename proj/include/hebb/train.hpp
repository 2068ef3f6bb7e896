#pragma once

#include "hebb/data.hpp"
#include "hebb/model.hpp"
#include "hebb/types.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace hebb {

enum class TrainMode { decoder_only, end_to_end };
enum class Regularizer { none, l2, jacobian, spectral };

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct TrainConfig {
    TrainMode mode = TrainMode::end_to_end;
    int batch_size = 1000;
    int epochs = 30;
    AdamConfig adam;
    Regularizer reg = Regularizer::none;
    double reg_coefficient = 0.0;
    int n_proj = 3;
    double spectral_target_alpha = 1.0;
    int spectral_cutoff = 0;  // 0: min(batch - 1, hidden, 256)
    /// Decoder-only mode: optimise against hidden features divided by their RMS over the
    /// training set, then fold the factor back into A. The trained model has the same form.
    bool normalize_features = false;
    std::uint64_t seed = 0;

    void validate() const;
};

/// Default coefficient per regularizer: l2 1e-3, jacobian 1e-2, spectral 1e-2.
double default_reg_coefficient(Regularizer reg);

struct Gradients {
    Mat W;  // empty when the encoder is frozen
    Mat A;
    Vec b;
};

struct LossBreakdown {
    double total = 0.0;
    double cross_entropy = 0.0;  // batch mean
    double penalty = 0.0;        // unscaled regularizer value
    Gradients grads;
};

struct PenaltyGradient {
    double value = 0.0;
    Mat grad;
};

/// -log softmax(logits)[label], log-sum-exp stabilised.
double cross_entropy(const Vec& logits, int label);

/// ||W||_F^2.
double l2_penalty(const Mat& w);

/// n_proj x hidden matrix of independent uniform unit vectors.
Mat draw_projections(int n_proj, Eigen::Index hidden, Rng& rng);

/// Unbiased estimate of the batch mean of ||J(x)||_F^2:
/// (hidden / n_proj) sum_k mean_b ||v_k^T J(x_b)||^2, with v_k^T J = (v_k * sigma'(W x))^T W.
/// The returned gradient is with respect to W.
PenaltyGradient jacobian_penalty_projected(const EncoderDecoderModel& model, const Mat& inputs, const Mat& projections);
double jacobian_penalty_projected(const EncoderDecoderModel& model, const Mat& inputs, int n_proj, std::uint64_t seed);

/// Batch mean of the exact ||J(x)||_F^2.
double jacobian_frobenius_sq_mean(const EncoderDecoderModel& model, const Mat& inputs);

/// Resolves a requested cutoff (0 = automatic) for a batch of the given size; throws if too large.
int spectral_cutoff_for(int requested, Eigen::Index batch, Eigen::Index hidden);

/// sum_{n=2}^{cutoff} (lambda_n - lambda_1 n^-alpha)^2 over the batch covariance of `hidden_batch`.
/// The gradient (w.r.t. hidden_batch) holds eigenvectors fixed: d lambda_n / dC = u_n u_n^T.
PenaltyGradient spectral_penalty(const Mat& hidden_batch, double target_alpha, int cutoff);

/// Mean cross-entropy plus reg_coefficient * penalty, with exact gradients for the trainable
/// parameters. `projections` is only read for the Jacobian regularizer.
LossBreakdown loss_and_gradients(const EncoderDecoderModel& model, const Mat& inputs, std::span<const int> labels,
                                 const TrainConfig& config, const Mat& projections = {});

/// Adam moments for a flat parameter block.
struct AdamMoments {
    std::vector<double> m;
    std::vector<double> v;
};

/// One Adam update with bias correction; `step` is the 1-based step count.
void adam_step(std::span<double> params, std::span<const double> grads, AdamMoments& moments, long step,
               const AdamConfig& config);

struct AdamState {
    AdamMoments W, A, b;
    long step = 0;
};

void apply_adam(EncoderDecoderModel& model, const Gradients& grads, AdamState& state, const AdamConfig& config);

struct EpochRecord {
    int epoch = 0;
    double train_loss = 0.0;
    double train_accuracy = 0.0;
    double test_accuracy = -1.0;  // -1 when no test set was supplied
};

struct TrainResult {
    EncoderDecoderModel model;
    std::vector<EpochRecord> history;
};

double accuracy(const EncoderDecoderModel& model, const Dataset& data);

/// Root mean square of the hidden features over `data`.
double hidden_feature_rms(const EncoderDecoderModel& model, const Dataset& data);

/// Shuffled minibatch Adam training. Throws DivergenceError on a non-finite loss.
TrainResult train_supervised(EncoderDecoderModel model, const Dataset& train, const TrainConfig& config,
                             const Dataset* test = nullptr);

std::string to_string(TrainMode mode);
std::string to_string(Regularizer reg);
TrainMode parse_train_mode(const std::string& text);
Regularizer parse_regularizer(const std::string& text);

}  // namespace hebb
