#pragma once

#include "hebb/data.hpp"
#include "hebb/model.hpp"
#include "hebb/types.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace hebb {

struct Spectrum {
    Vec lambdas;     // descending covariance eigenvalues
    Vec normalized;  // lambdas / lambdas[0]
    std::string source;
    Eigen::Index dim = 0;
    Eigen::Index samples = 0;
};

struct PowerLawFit {
    double alpha = 0.0;
    double alpha_err = 0.0;
    int n_min = 1;  // 1-based, inclusive
    int n_max = 1;
    int used_points = 0;
    int excluded_points = 0;  // non-positive eigenvalues skipped inside the window
};

enum class ScaleMode { subsample_hidden, crop_input };

struct ScaleRun {
    double scale = 1.0;
    Eigen::Index dim = 0;
    PowerLawFit fit;
    Spectrum spectrum;
};

/// lambdas / lambdas[0]. Throws DegenerateInputError when lambdas[0] <= 0.
Vec normalize_spectrum(const Vec& lambdas);

Spectrum spectrum_from_covariance(const Mat& cov, std::string source, Eigen::Index samples);
/// Covariance spectrum of the rows of `samples`.
Spectrum spectrum_from_samples(const Mat& samples, std::string source);

/// Spectrum of the model's representations (default: pre-activations h = W x) over `data`.
Spectrum representation_spectrum(const EncoderDecoderModel& model, const Dataset& data,
                                 Layer layer = Layer::pre_activation);

/// Default window [11, min(500, dim / 2)].
std::pair<int, int> default_fit_window(Eigen::Index dim);

/// OLS of log(normalized lambda_n) on log(n) over n in [n_min, n_max]; alpha = -slope.
PowerLawFit fit_power_exponent(const Vec& normalized, int n_min, int n_max);
inline PowerLawFit fit_power_exponent(const Spectrum& spec, int n_min, int n_max) {
    return fit_power_exponent(spec.normalized, n_min, n_max);
}

/// Recomputes spectra at reduced scale (random hidden subsets, or centred input crops) and
/// fits each over the window [n_min, n_max] scaled by the effective dimension ratio.
std::vector<ScaleRun> scale_invariance_probe(const EncoderDecoderModel& model, const Dataset& data,
                                             const std::vector<double>& scales, ScaleMode mode, std::uint64_t seed,
                                             int n_min, int n_max, Layer layer = Layer::pre_activation,
                                             const ImageShape& shape = cifar10_shape);

/// Crop probe on the inputs themselves (no encoder), e.g. for raw pixel spectra.
std::vector<ScaleRun> input_crop_probe(const Dataset& data, const std::vector<double>& scales, int n_min, int n_max,
                                       const ImageShape& shape = cifar10_shape);

std::string to_string(ScaleMode mode);
ScaleMode parse_scale_mode(const std::string& text);
std::string to_string(Layer layer);
Layer parse_layer(const std::string& text);

}  // namespace hebb
