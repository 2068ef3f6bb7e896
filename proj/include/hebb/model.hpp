#pragma once

#include "hebb/numerics.hpp"
#include "hebb/types.hpp"

namespace hebb {

/// Two-layer encoder-decoder: h = W x, hidden = ReLU(h)^n, y = A hidden + b.
struct EncoderDecoderModel {
    Mat W;  // hidden x input
    Mat A;  // classes x hidden
    Vec b;  // classes
    double act_power = 1.0;
    bool frozen_encoder = false;

    Eigen::Index input_dim() const { return W.cols(); }
    Eigen::Index hidden_dim() const { return W.rows(); }
    Eigen::Index num_classes() const { return A.rows(); }

    /// Throws ContractError on inconsistent shapes, non-finite weights or n < 1.
    void validate() const;
};

enum class Layer { pre_activation, post_activation };

struct ForwardResult {
    Vec pre;     // h
    Vec hidden;  // ReLU(h)^n
    Vec logits;  // y
};

struct JacobianResult {
    Mat jacobian;  // hidden x input
    double frobenius = 0.0;
};

struct Prediction {
    int label = 0;
    double confidence = 0.0;
};

/// Effective weights W = S |S|^(p-2), elementwise.
Mat lebesgue_weights(const Mat& synapses, double p);

/// ReLU(z)^n.
double activation(double z, double power);
/// d/dz ReLU(z)^n; defined as 0 at z <= 0.
double activation_derivative(double z, double power);
/// d^2/dz^2 ReLU(z)^n; 0 at z <= 0.
double activation_second_derivative(double z, double power);

ForwardResult forward(const EncoderDecoderModel& model, const Vec& x);

/// Rows of `inputs` are samples; result has one row per sample.
Mat pre_activations(const EncoderDecoderModel& model, const Mat& inputs);
Mat hidden_features(const EncoderDecoderModel& model, const Mat& inputs);
Mat representations(const EncoderDecoderModel& model, const Mat& inputs, Layer layer);
Mat logits(const EncoderDecoderModel& model, const Mat& inputs);

/// Exact Jacobian of the hidden features with respect to the input.
JacobianResult hidden_jacobian_exact(const EncoderDecoderModel& model, const Vec& x);
/// Frobenius norm of the hidden Jacobian without materialising it:
/// ||J||_F^2 = sum_i sigma'((Wx)_i)^2 ||W_i||^2.
double hidden_jacobian_frobenius(const EncoderDecoderModel& model, const Vec& x);
/// Largest singular value of the hidden Jacobian by power iteration on J^T J.
double hidden_jacobian_spectral(const EncoderDecoderModel& model, const Vec& x, int iterations = 200);

/// Argmax class (lowest index on ties) and its softmax probability.
Prediction predict_from_logits(const Vec& y);
Prediction predict(const EncoderDecoderModel& model, const Vec& x);
std::vector<int> predict_labels(const EncoderDecoderModel& model, const Mat& inputs);

/// Model with the given encoder and a small random decoder (entries N(0, 1/hidden)), b = 0.
EncoderDecoderModel make_model(Mat encoder, int num_classes, double act_power, Rng& rng);

}  // namespace hebb
