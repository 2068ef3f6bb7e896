#pragma once

#include "hebb/model.hpp"
#include "hebb/types.hpp"

#include <cstdint>
#include <string>

namespace hebb {

enum class JacobianNorm { frobenius, spectral };

struct Plane {
    Vec u;
    Vec v;
};

/// Grid over the plane center + a u + b v, a and b uniform in [-extent, extent].
/// Entry (i, j) uses a = coordinate(i), b = coordinate(j).
struct LandscapeGrid {
    Vec center;
    Plane plane;
    double extent = 1.0;
    int resolution = 101;
    Eigen::MatrixXi decisions;
    Eigen::MatrixXd confidences;
    Eigen::MatrixXd jacobian_norms;  // empty until computed
    JacobianNorm norm = JacobianNorm::frobenius;

    double coordinate(int index) const;
};

/// Two standard-normal draws, Gram-Schmidt orthonormalised (redrawn if nearly collinear).
Plane random_plane(Eigen::Index dim, std::uint64_t seed);

/// Class and softmax confidence at every grid point.
LandscapeGrid decision_grid(const EncoderDecoderModel& model, const Vec& center, const Plane& plane, double extent,
                            int resolution, int jobs = 1);

/// Hidden-Jacobian norm at every grid point.
Eigen::MatrixXd jacobian_norm_grid(const EncoderDecoderModel& model, const Vec& center, const Plane& plane,
                                   double extent, int resolution, JacobianNorm norm = JacobianNorm::frobenius,
                                   int jobs = 1);

/// Decisions, confidences and Jacobian norms on one shared plane.
LandscapeGrid landscape(const EncoderDecoderModel& model, const Vec& center, const Plane& plane, double extent,
                        int resolution, JacobianNorm norm = JacobianNorm::frobenius, int jobs = 1);

std::string to_string(JacobianNorm norm);
JacobianNorm parse_jacobian_norm(const std::string& text);

}  // namespace hebb
