#include "hebb/model.hpp"

#include <algorithm>
#include <cmath>

namespace hebb {

void EncoderDecoderModel::validate() const {
    if (A.cols() != W.rows()) throw ContractError("model: decoder columns do not match hidden units");
    if (b.size() != A.rows()) throw ContractError("model: bias length does not match classes");
    if (!(act_power >= 1.0)) throw ContractError("model: activation power must be >= 1");
    if (!W.allFinite() || !A.allFinite() || !b.allFinite()) throw ContractError("model: non-finite weights");
}

Mat lebesgue_weights(const Mat& synapses, double p) {
    if (p < 2.0) throw ContractError("lebesgue_weights: p must be >= 2");
    if (p == 2.0) return synapses;
    const double e = p - 2.0;
    return synapses.unaryExpr([e](double s) { return s * std::pow(std::abs(s), e); });
}

double activation(double z, double power) {
    if (z <= 0.0) return 0.0;
    return power == 1.0 ? z : std::pow(z, power);
}

double activation_derivative(double z, double power) {
    if (z <= 0.0) return 0.0;
    return power == 1.0 ? 1.0 : power * std::pow(z, power - 1.0);
}

double activation_second_derivative(double z, double power) {
    if (z <= 0.0 || power == 1.0) return 0.0;
    return power * (power - 1.0) * std::pow(z, power - 2.0);
}

ForwardResult forward(const EncoderDecoderModel& model, const Vec& x) {
    if (x.size() != model.input_dim()) throw ContractError("forward: input dimension mismatch");
    if (!x.allFinite()) throw ContractError("forward: non-finite input");
    ForwardResult r;
    r.pre = model.W * x;
    const double n = model.act_power;
    r.hidden = r.pre.unaryExpr([n](double z) { return activation(z, n); });
    r.logits = model.A * r.hidden + model.b;
    return r;
}

Mat pre_activations(const EncoderDecoderModel& model, const Mat& inputs) {
    if (inputs.cols() != model.input_dim()) throw ContractError("pre_activations: input dimension mismatch");
    return inputs * model.W.transpose();
}

Mat hidden_features(const EncoderDecoderModel& model, const Mat& inputs) {
    const double n = model.act_power;
    return pre_activations(model, inputs).unaryExpr([n](double z) { return activation(z, n); });
}

Mat representations(const EncoderDecoderModel& model, const Mat& inputs, Layer layer) {
    return layer == Layer::pre_activation ? pre_activations(model, inputs) : hidden_features(model, inputs);
}

Mat logits(const EncoderDecoderModel& model, const Mat& inputs) {
    Mat y = hidden_features(model, inputs) * model.A.transpose();
    y.rowwise() += model.b.transpose();
    return y;
}

JacobianResult hidden_jacobian_exact(const EncoderDecoderModel& model, const Vec& x) {
    const Vec z = model.W * x;
    const double n = model.act_power;
    const Vec slope = z.unaryExpr([n](double v) { return activation_derivative(v, n); });
    JacobianResult r;
    r.jacobian = slope.asDiagonal() * model.W;
    r.frobenius = std::sqrt((slope.array().square() * model.W.rowwise().squaredNorm().array()).sum());
    return r;
}

double hidden_jacobian_frobenius(const EncoderDecoderModel& model, const Vec& x) {
    const Vec z = model.W * x;
    const double n = model.act_power;
    double total = 0.0;
    for (Eigen::Index i = 0; i < z.size(); ++i) {
        const double s = activation_derivative(z[i], n);
        if (s != 0.0) total += s * s * model.W.row(i).squaredNorm();
    }
    return std::sqrt(total);
}

double hidden_jacobian_spectral(const EncoderDecoderModel& model, const Vec& x, int iterations) {
    const Vec z = model.W * x;
    const double n = model.act_power;
    const Vec slope = z.unaryExpr([n](double v) { return activation_derivative(v, n); });
    if (slope.isZero(0.0)) return 0.0;
    // Iterate in the smaller of the two spaces: J J^T is hidden x hidden.
    Vec v = Vec::Constant(model.hidden_dim(), 1.0 / std::sqrt(static_cast<double>(model.hidden_dim())));
    v = v.cwiseProduct(slope);
    if (v.norm() == 0.0) v = slope;
    v.normalize();
    double lambda = 0.0;
    for (int it = 0; it < iterations; ++it) {
        Vec w = slope.cwiseProduct(model.W * (model.W.transpose() * slope.cwiseProduct(v)));
        const double norm = w.norm();
        if (norm == 0.0) return 0.0;
        const double next = v.dot(w);
        v = w / norm;
        if (std::abs(next - lambda) <= 1e-12 * std::abs(next)) {
            lambda = next;
            break;
        }
        lambda = next;
    }
    return std::sqrt(std::max(lambda, 0.0));
}

Prediction predict_from_logits(const Vec& y) {
    Prediction p;
    Eigen::Index arg = 0;
    for (Eigen::Index i = 1; i < y.size(); ++i) {
        if (y[i] > y[arg]) arg = i;
    }
    p.label = static_cast<int>(arg);
    const double top = y[arg];
    const double denom = (y.array() - top).exp().sum();
    p.confidence = 1.0 / denom;
    return p;
}

Prediction predict(const EncoderDecoderModel& model, const Vec& x) { return predict_from_logits(forward(model, x).logits); }

std::vector<int> predict_labels(const EncoderDecoderModel& model, const Mat& inputs) {
    const Mat y = logits(model, inputs);
    std::vector<int> out(static_cast<std::size_t>(y.rows()));
    for (Eigen::Index r = 0; r < y.rows(); ++r) out[static_cast<std::size_t>(r)] = predict_from_logits(y.row(r).transpose()).label;
    return out;
}

EncoderDecoderModel make_model(Mat encoder, int num_classes, double act_power, Rng& rng) {
    EncoderDecoderModel m;
    m.W = std::move(encoder);
    const double scale = 1.0 / std::sqrt(static_cast<double>(std::max<Eigen::Index>(m.W.rows(), 1)));
    m.A.resize(num_classes, m.W.rows());
    for (Eigen::Index i = 0; i < m.A.rows(); ++i)
        for (Eigen::Index j = 0; j < m.A.cols(); ++j) m.A(i, j) = scale * rng.normal();
    m.b = Vec::Zero(num_classes);
    m.act_power = act_power;
    return m;
}

}  // namespace hebb
