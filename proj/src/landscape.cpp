#include "hebb/landscape.hpp"

#include "hebb/numerics.hpp"
#include "hebb/parallel.hpp"

#include <cmath>

namespace hebb {

namespace {

double grid_coordinate(int index, double extent, int resolution) {
    if (resolution == 1) return 0.0;
    return -extent + 2.0 * extent * index / (resolution - 1);
}

void check_grid(const EncoderDecoderModel& model, const Vec& center, const Plane& plane, double extent, int resolution) {
    if (center.size() != model.input_dim() || plane.u.size() != center.size() || plane.v.size() != center.size())
        throw ContractError("landscape: center and plane must match the model input dimension");
    if (!(extent >= 0.0)) throw ContractError("landscape: extent must be >= 0");
    if (resolution < 1) throw ContractError("landscape: resolution must be >= 1");
}

// Inputs of grid row i (fixed a, all b).
Mat row_inputs(const Vec& center, const Plane& plane, double extent, int resolution, int i) {
    Mat xs(resolution, center.size());
    const double a = grid_coordinate(i, extent, resolution);
    for (int j = 0; j < resolution; ++j)
        xs.row(j) = (center + a * plane.u + grid_coordinate(j, extent, resolution) * plane.v).transpose();
    return xs;
}

}  // namespace

double LandscapeGrid::coordinate(int index) const { return grid_coordinate(index, extent, resolution); }

Plane random_plane(Eigen::Index dim, std::uint64_t seed) {
    if (dim < 2) throw ContractError("random_plane: dimension must be >= 2");
    Rng rng(seed);
    for (;;) {
        Vec u = rng.normal_vector(dim);
        Vec v = rng.normal_vector(dim);
        const double un = u.norm();
        if (un < 1e-12) continue;
        u /= un;
        v -= v.dot(u) * u;
        const double vn = v.norm();
        if (vn < 1e-12) continue;
        v /= vn;
        // Second pass removes round-off left by the first projection.
        v -= v.dot(u) * u;
        v.normalize();
        return {u, v};
    }
}

LandscapeGrid decision_grid(const EncoderDecoderModel& model, const Vec& center, const Plane& plane, double extent,
                            int resolution, int jobs) {
    check_grid(model, center, plane, extent, resolution);
    LandscapeGrid g;
    g.center = center;
    g.plane = plane;
    g.extent = extent;
    g.resolution = resolution;
    g.decisions.resize(resolution, resolution);
    g.confidences.resize(resolution, resolution);
    parallel_for(static_cast<std::size_t>(resolution), jobs, [&](std::size_t i) {
        const Mat y = logits(model, row_inputs(center, plane, extent, resolution, static_cast<int>(i)));
        for (int j = 0; j < resolution; ++j) {
            const Prediction p = predict_from_logits(y.row(j).transpose());
            g.decisions(static_cast<Eigen::Index>(i), j) = p.label;
            g.confidences(static_cast<Eigen::Index>(i), j) = p.confidence;
        }
    });
    return g;
}

Eigen::MatrixXd jacobian_norm_grid(const EncoderDecoderModel& model, const Vec& center, const Plane& plane,
                                   double extent, int resolution, JacobianNorm norm, int jobs) {
    check_grid(model, center, plane, extent, resolution);
    Eigen::MatrixXd out(resolution, resolution);
    parallel_for(static_cast<std::size_t>(resolution), jobs, [&](std::size_t i) {
        const Mat xs = row_inputs(center, plane, extent, resolution, static_cast<int>(i));
        for (int j = 0; j < resolution; ++j) {
            const Vec x = xs.row(j).transpose();
            out(static_cast<Eigen::Index>(i), j) =
                norm == JacobianNorm::frobenius ? hidden_jacobian_frobenius(model, x) : hidden_jacobian_spectral(model, x);
        }
    });
    return out;
}

LandscapeGrid landscape(const EncoderDecoderModel& model, const Vec& center, const Plane& plane, double extent,
                        int resolution, JacobianNorm norm, int jobs) {
    LandscapeGrid g = decision_grid(model, center, plane, extent, resolution, jobs);
    g.jacobian_norms = jacobian_norm_grid(model, center, plane, extent, resolution, norm, jobs);
    g.norm = norm;
    return g;
}

std::string to_string(JacobianNorm norm) { return norm == JacobianNorm::frobenius ? "frobenius" : "spectral"; }

JacobianNorm parse_jacobian_norm(const std::string& text) {
    if (text == "frobenius") return JacobianNorm::frobenius;
    if (text == "spectral") return JacobianNorm::spectral;
    throw ConfigError("unknown jacobian norm '" + text + "'");
}

}  // namespace hebb
