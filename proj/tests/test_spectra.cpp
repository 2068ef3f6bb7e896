#include "hebb/spectra.hpp"

#include "test_util.hpp"

#include <doctest.h>

#include <cmath>

using namespace hebb;
using hebb::testing::random_matrix;

namespace {

Vec power_law(int dim, double alpha, double scale = 1.0) {
    Vec v(dim);
    for (int n = 1; n <= dim; ++n) v[n - 1] = scale * std::pow(static_cast<double>(n), -alpha);
    return v;
}

// Samples whose sample covariance is exactly the identity.
Mat whitened_samples(Eigen::Index count, Eigen::Index dim, std::uint64_t seed) {
    Mat x = random_matrix(count, dim, seed);
    x.rowwise() -= x.colwise().mean();
    const Mat c = covariance(x);
    const Eigen::LLT<Mat> llt(c);
    const Mat l = llt.matrixL();
    return l.triangularView<Eigen::Lower>().solve(x.transpose()).transpose();
}

Mat random_orthogonal(Eigen::Index dim, std::uint64_t seed) {
    const Eigen::HouseholderQR<Mat> qr(random_matrix(dim, dim, seed));
    return qr.householderQ() * Mat::Identity(dim, dim);
}

EncoderDecoderModel encoder_only(Mat w) {
    EncoderDecoderModel m;
    m.A = Mat::Zero(2, w.rows());
    m.b = Vec::Zero(2);
    m.W = std::move(w);
    return m;
}

Dataset unlabeled(Mat inputs, std::string name = "synthetic") {
    Dataset d;
    d.inputs = std::move(inputs);
    d.name = std::move(name);
    return d;
}

}  // namespace

TEST_CASE("normalization") {
    const Vec n = normalize_spectrum(power_law(10, 1.0, 3.0));
    CHECK(n[0] == 1.0);
    CHECK((normalize_spectrum(n) - n).norm() == 0.0);
    CHECK_THROWS_AS(normalize_spectrum(Vec::Zero(4)), DegenerateInputError);
}

TEST_CASE("exact power laws are recovered") {
    for (const double alpha : {0.5, 1.0, 2.0}) {
        const PowerLawFit fit = fit_power_exponent(normalize_spectrum(power_law(200, alpha)), 11, 100);
        CHECK(std::abs(fit.alpha - alpha) <= 1e-6);
        CHECK(fit.alpha_err <= 1e-6);
        CHECK(fit.alpha_err >= 0.0);
        CHECK(fit.used_points == 90);
    }
    const PowerLawFit scaled = fit_power_exponent(normalize_spectrum(power_law(50, 2.0, 5.0)), 1, 50);
    CHECK(std::abs(scaled.alpha - 2.0) <= 1e-6);

    const PowerLawFit flat = fit_power_exponent(Vec::Ones(60), 11, 30);
    CHECK(std::abs(flat.alpha) <= 1e-6);
}

TEST_CASE("index rescaling leaves the exponent unchanged") {
    const Vec spec = normalize_spectrum(power_law(1000, 1.3));
    const double base = fit_power_exponent(spec, 11, 100).alpha;
    for (const int a : {2, 3, 5}) CHECK(std::abs(fit_power_exponent(spec, 11 * a, 100 * a).alpha - base) <= 1e-6);
}

TEST_CASE("fit window checks and exclusions") {
    Vec spec = normalize_spectrum(power_law(30, 1.0));
    spec[20] = 0.0;
    spec[21] = -1e-12;
    const PowerLawFit fit = fit_power_exponent(spec, 11, 30);
    CHECK(fit.excluded_points == 2);
    CHECK(fit.used_points == 18);
    CHECK(fit.alpha == doctest::Approx(1.0).epsilon(1e-9));
    CHECK_THROWS_AS(fit_power_exponent(spec, 0, 10), ContractError);
    CHECK_THROWS_AS(fit_power_exponent(spec, 10, 10), ContractError);
    CHECK_THROWS_AS(fit_power_exponent(spec, 10, 31), ContractError);
    CHECK_THROWS_AS(fit_power_exponent(Vec::Unit(10, 0), 2, 10), SingularFitError);

    CHECK(default_fit_window(3072) == std::pair<int, int>{11, 500});
    CHECK(default_fit_window(256) == std::pair<int, int>{11, 128});
}

TEST_CASE("identity encoder reproduces the data spectrum") {
    const Mat x = random_matrix(300, 12, 5) * Eigen::VectorXd::LinSpaced(12, 0.2, 3.0).asDiagonal();
    const Dataset data = unlabeled(x);
    const Spectrum rep = representation_spectrum(encoder_only(Mat::Identity(12, 12)), data);
    const Spectrum raw = spectrum_from_samples(x, "raw");
    CHECK((rep.lambdas - raw.lambdas).norm() <= 1e-12 * raw.lambdas.norm());
    CHECK(rep.samples == 300);
    CHECK(rep.dim == 12);
    CHECK(rep.normalized[0] == 1.0);
    for (Eigen::Index n = 1; n < 12; ++n) CHECK(rep.lambdas[n] <= rep.lambdas[n - 1]);
    CHECK(rep.lambdas.minCoeff() >= -1e-10);
    CHECK(std::abs(rep.lambdas.sum() - covariance(x).trace()) <= 1e-8 * rep.lambdas.sum());
}

TEST_CASE("rank-one encoder") {
    Mat w(5, 8);
    const Mat row = random_matrix(1, 8, 2);
    for (int i = 0; i < 5; ++i) w.row(i) = row;
    const Spectrum s = representation_spectrum(encoder_only(w), unlabeled(random_matrix(100, 8, 3)));
    CHECK(s.normalized[0] == 1.0);
    CHECK(s.normalized.tail(4).cwiseAbs().maxCoeff() <= 1e-12);

    CHECK_THROWS_AS(representation_spectrum(encoder_only(Mat::Zero(3, 8)), unlabeled(random_matrix(10, 8, 1))),
                    DegenerateInputError);
    CHECK_THROWS_AS(representation_spectrum(encoder_only(w), unlabeled(random_matrix(1, 8, 1))), DegenerateInputError);
}

TEST_CASE("random encoder on white noise matches the analytic covariance") {
    const Mat w = random_matrix(64, 16, 7, 0.25);
    const Dataset noise = gaussian_noise_set(16, 5000, 8);
    const Spectrum s = representation_spectrum(encoder_only(w), noise);
    const Vec expected = sym_eig_descending(w * w.transpose()).eigenvalues;
    CHECK((s.lambdas - expected).norm() <= 0.05 * expected.norm());
    CHECK(std::abs(s.lambdas[0] - expected[0]) <= 0.05 * expected[0]);

    const Spectrum post = representation_spectrum(encoder_only(w), noise, Layer::post_activation);
    CHECK(post.lambdas[0] > 0.0);
    CHECK(post.lambdas[0] < s.lambdas[0]);
}

TEST_CASE("planted power law is scale invariant under hidden subsampling") {
    const int dim = 1000;
    const Mat u = random_orthogonal(dim, 11);
    Vec roots(dim);
    for (int n = 1; n <= dim; ++n) roots[n - 1] = std::pow(static_cast<double>(n), -0.5);
    const EncoderDecoderModel m = encoder_only(u * roots.asDiagonal() * u.transpose());
    const Dataset data = unlabeled(whitened_samples(1200, dim, 12));

    const Spectrum full = representation_spectrum(m, data);
    CHECK(fit_power_exponent(full, 11, 100).alpha == doctest::Approx(1.0).epsilon(1e-8));

    const auto runs = scale_invariance_probe(m, data, {1.0, 0.5, 0.25}, ScaleMode::subsample_hidden, 3, 11, 100);
    REQUIRE(runs.size() == 3);
    CHECK(runs[0].fit.alpha == doctest::Approx(fit_power_exponent(full, 11, 100).alpha).epsilon(1e-12));
    CHECK(runs[1].dim == 500);
    CHECK(runs[2].fit.n_max == 25);
    for (const auto& r : runs) {
        MESSAGE("scale " << r.scale << " alpha " << r.fit.alpha);
        CHECK(std::abs(r.fit.alpha - runs[0].fit.alpha) < 0.1);
    }
}

TEST_CASE("white noise stays flat and its drop moves right with scale") {
    const int dim = 200;
    const EncoderDecoderModel m = encoder_only(Mat::Identity(dim, dim));
    const Dataset noise = gaussian_noise_set(dim, 5000, 4);
    const auto runs = scale_invariance_probe(m, noise, {1.0, 0.5, 0.25}, ScaleMode::subsample_hidden, 9, 11, 100);
    std::vector<int> drops;
    for (const auto& r : runs) {
        CHECK(std::abs(r.fit.alpha) < 0.2);
        int drop = 0;
        while (drop < r.spectrum.normalized.size() && r.spectrum.normalized[drop] > 0.25) ++drop;
        drops.push_back(drop);
    }
    CHECK(drops[0] > drops[1]);
    CHECK(drops[1] > drops[2]);
}

TEST_CASE("input crops") {
    const ImageShape shape{3, 8, 8};
    const Dataset data = synthetic_images(400, 2, shape);
    const EncoderDecoderModel m = encoder_only(random_matrix(40, shape.pixels(), 3, 0.1));
    const auto runs = scale_invariance_probe(m, data, {1.0, 0.25}, ScaleMode::crop_input, 0, 3, 20, Layer::pre_activation, shape);
    REQUIRE(runs.size() == 2);
    const Spectrum full = representation_spectrum(m, data);
    CHECK((runs[0].spectrum.lambdas - full.lambdas).norm() <= 1e-10 * full.lambdas.norm());
    CHECK(runs[1].dim == 40);
    CHECK(runs[1].fit.n_max == 5);

    CHECK_THROWS_AS(scale_invariance_probe(m, data, {1.5}, ScaleMode::crop_input, 0, 3, 20, Layer::pre_activation, shape),
                    ContractError);
    CHECK_THROWS_AS(scale_invariance_probe(m, data, {0.01}, ScaleMode::subsample_hidden, 0, 3, 20), ContractError);
}

TEST_CASE("mode names") {
    CHECK(parse_scale_mode(to_string(ScaleMode::crop_input)) == ScaleMode::crop_input);
    CHECK(parse_layer("post") == Layer::post_activation);
    CHECK_THROWS_AS(parse_layer("middle"), ConfigError);
}

TEST_CASE("raw input crops") {
    const ImageShape shape{3, 8, 8};
    const Dataset data = synthetic_images(300, 4, shape);
    const auto runs = input_crop_probe(data, {1.0, 0.25}, 3, 20, shape);
    REQUIRE(runs.size() == 2);
    const Spectrum full = spectrum_from_samples(data.inputs, "full");
    CHECK((runs[0].spectrum.lambdas - full.lambdas).norm() <= 1e-12 * full.lambdas.norm());
    CHECK(runs[0].fit.n_max == 20);

    // Centre 4x4 window of each channel: rows and columns 2..5.
    Mat crop(data.count(), 48);
    int c = 0;
    for (int ch = 0; ch < 3; ++ch)
        for (int y = 2; y < 6; ++y)
            for (int x = 2; x < 6; ++x) crop.col(c++) = data.inputs.col(ch * 64 + y * 8 + x);
    const Spectrum expected = spectrum_from_samples(crop, "crop");
    CHECK(runs[1].dim == 48);
    CHECK((runs[1].spectrum.lambdas - expected.lambdas).norm() <= 1e-12 * expected.lambdas.norm());
    CHECK(runs[1].fit.n_min == 1);
    CHECK(runs[1].fit.n_max == 5);
    CHECK_THROWS_AS(input_crop_probe(data, {1.0}, 3, 20, ImageShape{3, 4, 4}), ContractError);
}
