#include "hebb/spectra.hpp"

#include "hebb/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace hebb {

Vec normalize_spectrum(const Vec& lambdas) {
    if (lambdas.size() == 0 || !(lambdas[0] > 0.0))
        throw DegenerateInputError("spectrum: leading eigenvalue is not positive (constant representations?)");
    return lambdas / lambdas[0];
}

Spectrum spectrum_from_covariance(const Mat& cov, std::string source, Eigen::Index samples) {
    Spectrum s;
    s.lambdas = sym_eigenvalues_descending(cov);
    s.normalized = normalize_spectrum(s.lambdas);
    s.source = std::move(source);
    s.dim = cov.rows();
    s.samples = samples;
    return s;
}

Spectrum spectrum_from_samples(const Mat& samples, std::string source) {
    return spectrum_from_covariance(covariance(samples), std::move(source), samples.rows());
}

Spectrum representation_spectrum(const EncoderDecoderModel& model, const Dataset& data, Layer layer) {
    if (data.count() < 2) throw DegenerateInputError("representation_spectrum: need at least 2 samples");
    return spectrum_from_samples(representations(model, data.inputs, layer), data.name + ":" + to_string(layer));
}

std::pair<int, int> default_fit_window(Eigen::Index dim) {
    return {11, static_cast<int>(std::min<Eigen::Index>(500, dim / 2))};
}

PowerLawFit fit_power_exponent(const Vec& normalized, int n_min, int n_max) {
    if (n_min < 1 || n_max <= n_min || n_max > normalized.size())
        throw ContractError("fit_power_exponent: window [" + std::to_string(n_min) + ", " + std::to_string(n_max) +
                            "] invalid for dimension " + std::to_string(normalized.size()));
    PowerLawFit fit;
    fit.n_min = n_min;
    fit.n_max = n_max;
    std::vector<double> xs;
    std::vector<double> ys;
    for (int n = n_min; n <= n_max; ++n) {
        const double v = normalized[n - 1];
        if (!(v > 0.0)) {
            ++fit.excluded_points;
            continue;
        }
        xs.push_back(std::log(static_cast<double>(n)));
        ys.push_back(std::log(v));
    }
    fit.used_points = static_cast<int>(xs.size());
    if (xs.size() < 3) throw SingularFitError("fit_power_exponent: fewer than 3 usable points in window");
    const LineFit line = linear_fit(xs, ys);
    fit.alpha = -line.slope;
    fit.alpha_err = line.slope_stderr;
    return fit;
}

namespace {

std::pair<int, int> scaled_window(int n_min, int n_max, double ratio, Eigen::Index dim) {
    const int lo = std::max(1, static_cast<int>(std::lround(n_min * ratio)));
    const int hi = std::min(static_cast<int>(dim), static_cast<int>(std::lround(n_max * ratio)));
    if (hi - lo + 1 < 3) throw ContractError("scale_invariance_probe: scaled dimension too small to fit");
    return {lo, hi};
}

struct Crop {
    std::vector<Eigen::Index> cols;
    double ratio = 1.0;
};

// Centred square-ish crop keeping about `scale` of the pixels of every channel.
Crop center_crop(const ImageShape& shape, double scale) {
    const int side_h = std::max(1, static_cast<int>(std::lround(std::sqrt(scale) * shape.height)));
    const int side_w = std::max(1, static_cast<int>(std::lround(std::sqrt(scale) * shape.width)));
    const int top = (shape.height - side_h) / 2;
    const int left = (shape.width - side_w) / 2;
    Crop crop;
    for (int ch = 0; ch < shape.channels; ++ch)
        for (int y = top; y < top + side_h; ++y)
            for (int x = left; x < left + side_w; ++x)
                crop.cols.push_back(static_cast<Eigen::Index>(ch * shape.height * shape.width + y * shape.width + x));
    crop.ratio = static_cast<double>(side_h * side_w) / static_cast<double>(shape.height * shape.width);
    return crop;
}

Mat select_columns(const Mat& m, const std::vector<Eigen::Index>& cols) {
    Mat out(m.rows(), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t c = 0; c < cols.size(); ++c) out.col(static_cast<Eigen::Index>(c)) = m.col(cols[c]);
    return out;
}

}  // namespace

std::vector<ScaleRun> scale_invariance_probe(const EncoderDecoderModel& model, const Dataset& data,
                                             const std::vector<double>& scales, ScaleMode mode, std::uint64_t seed,
                                             int n_min, int n_max, Layer layer, const ImageShape& shape) {
    std::vector<ScaleRun> runs;
    Rng rng(seed);
    Mat reps;
    if (mode == ScaleMode::subsample_hidden) reps = representations(model, data.inputs, layer);
    for (double scale : scales) {
        if (!(scale > 0.0 && scale <= 1.0)) throw ContractError("scale_invariance_probe: scales must lie in (0, 1]");
        ScaleRun run;
        run.scale = scale;
        if (mode == ScaleMode::subsample_hidden) {
            const Eigen::Index hidden = model.hidden_dim();
            const auto keep = std::max<Eigen::Index>(1, std::lround(scale * static_cast<double>(hidden)));
            std::vector<Eigen::Index> units(static_cast<std::size_t>(hidden));
            std::iota(units.begin(), units.end(), Eigen::Index{0});
            if (keep < hidden) {
                rng.shuffle(units);
                units.resize(static_cast<std::size_t>(keep));
                std::sort(units.begin(), units.end());
            }
            Mat sub(reps.rows(), keep);
            for (Eigen::Index c = 0; c < keep; ++c) sub.col(c) = reps.col(units[static_cast<std::size_t>(c)]);
            run.spectrum = spectrum_from_samples(sub, data.name + ":hidden-subset");
            run.dim = keep;
            const double ratio = static_cast<double>(keep) / static_cast<double>(hidden);
            const auto [lo, hi] = scaled_window(n_min, n_max, ratio, run.dim);
            run.fit = fit_power_exponent(run.spectrum, lo, hi);
        } else {
            if (shape.pixels() != model.input_dim()) throw ContractError("scale_invariance_probe: image shape does not match input dim");
            const Crop crop = center_crop(shape, scale);
            EncoderDecoderModel cropped = model;
            cropped.W = select_columns(model.W, crop.cols);
            run.spectrum = spectrum_from_samples(representations(cropped, select_columns(data.inputs, crop.cols), layer),
                                                 data.name + ":crop");
            run.dim = std::min<Eigen::Index>(model.hidden_dim(), static_cast<Eigen::Index>(crop.cols.size()));
            const auto [lo, hi] = scaled_window(n_min, n_max, crop.ratio, run.dim);
            run.fit = fit_power_exponent(run.spectrum, lo, hi);
        }
        runs.push_back(std::move(run));
    }
    return runs;
}

std::vector<ScaleRun> input_crop_probe(const Dataset& data, const std::vector<double>& scales, int n_min, int n_max,
                                       const ImageShape& shape) {
    if (shape.pixels() != data.dim()) throw ContractError("input_crop_probe: image shape does not match input dim");
    std::vector<ScaleRun> runs;
    for (double scale : scales) {
        if (!(scale > 0.0 && scale <= 1.0)) throw ContractError("input_crop_probe: scales must lie in (0, 1]");
        const Crop crop = center_crop(shape, scale);
        ScaleRun run;
        run.scale = scale;
        run.spectrum = spectrum_from_samples(select_columns(data.inputs, crop.cols), data.name + ":crop");
        run.dim = static_cast<Eigen::Index>(crop.cols.size());
        const auto [lo, hi] = scaled_window(n_min, n_max, crop.ratio, run.dim);
        run.fit = fit_power_exponent(run.spectrum, lo, hi);
        runs.push_back(std::move(run));
    }
    return runs;
}

std::string to_string(ScaleMode mode) { return mode == ScaleMode::subsample_hidden ? "subsample_hidden" : "crop_input"; }

ScaleMode parse_scale_mode(const std::string& text) {
    if (text == "subsample_hidden") return ScaleMode::subsample_hidden;
    if (text == "crop_input") return ScaleMode::crop_input;
    throw ConfigError("unknown scale mode '" + text + "'");
}

std::string to_string(Layer layer) { return layer == Layer::pre_activation ? "pre" : "post"; }

Layer parse_layer(const std::string& text) {
    if (text == "pre") return Layer::pre_activation;
    if (text == "post") return Layer::post_activation;
    throw ConfigError("unknown layer '" + text + "'");
}

}  // namespace hebb
