#pragma once

#include "hebb/data.hpp"
#include "hebb/model.hpp"
#include "hebb/numerics.hpp"
#include "hebb/types.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace hebb {

enum class AttackKind { random, fgsm, pgd };
enum class BallNorm { inf, l2 };

struct EpsilonGrid {
    double min = 1e-3;
    double max = 1e2;
    int count = 50;

    /// `count` log-spaced values from min to max inclusive.
    std::vector<double> values() const;
};

struct AttackConfig {
    AttackKind kind = AttackKind::fgsm;
    EpsilonGrid grid;
    int pgd_steps = 10;
    double pgd_step_fraction = 0.1;  // PGD step = fraction * epsilon
    BallNorm ball = BallNorm::inf;
    bool clip = false;               // clip perturbed inputs to [0, 1]
    int random_draws = 5;            // random directions per image
    bool extend_until_saturated = true;
    bool refine = false;             // bisection refinement of critical distances
    int refine_iterations = 12;
    std::uint64_t seed = 0;
    int jobs = 1;

    void validate() const;
};

struct CurvePoint {
    double epsilon = 0.0;
    double relative_accuracy = 1.0;
};

struct CriticalDistance {
    int index = 0;
    double distance = 0.0;  // Euclidean norm of the realised perturbation
    double epsilon = 0.0;   // attack strength at which the image was first fooled
    bool censored = false;  // never fooled within the scanned range
};

struct DistanceSummary {
    double mean = 0.0;
    double median = 0.0;
    double variance = 0.0;
    int fooled = 0;
    int censored = 0;
};

struct AttackReport {
    AttackKind kind = AttackKind::fgsm;
    std::vector<CurvePoint> curve;  // first point is epsilon = 0
    std::vector<CriticalDistance> distances;
    DistanceSummary summary;
};

/// Gradient of the cross-entropy with respect to the input; one row per sample.
Mat loss_input_gradient(const EncoderDecoderModel& model, const Mat& inputs, std::span<const int> labels);
Vec loss_input_gradient(const EncoderDecoderModel& model, const Vec& x, int label);

/// x + epsilon * xi / ||xi|| with xi standard normal.
Vec perturb_random(const Vec& x, double epsilon, Rng& rng);

/// x + epsilon * sign(grad_x L), with sign(0) = 0.
Vec attack_fgsm(const EncoderDecoderModel& model, const Vec& x, int label, double epsilon, bool clip = false);
Mat attack_fgsm(const EncoderDecoderModel& model, const Mat& inputs, std::span<const int> labels, double epsilon,
                bool clip = false);

/// `pgd_steps` signed-gradient steps of size pgd_step_fraction * epsilon, each followed by
/// projection onto the epsilon ball around x in `ball` norm.
Vec attack_pgd(const EncoderDecoderModel& model, const Vec& x, int label, double epsilon, const AttackConfig& config);
Mat attack_pgd(const EncoderDecoderModel& model, const Mat& inputs, std::span<const int> labels, double epsilon,
               const AttackConfig& config);

/// Projects a perturbation onto the epsilon ball (coordinate clipping for inf, radial rescale for l2).
Vec project_ball(const Vec& delta, double epsilon, BallNorm ball);

/// Relative accuracy on the model's correct subset for every epsilon of the grid (plus epsilon = 0),
/// extending the grid by decades while the last decade still changes accuracy by more than 1%.
std::vector<CurvePoint> relative_accuracy_sweep(const EncoderDecoderModel& model, const Dataset& subset,
                                                const AttackConfig& config);

/// First fooling epsilon per image on the grid (optionally bisected), reported as the
/// Euclidean norm of the realised perturbation.
std::vector<CriticalDistance> critical_distances(const EncoderDecoderModel& model, const Dataset& subset,
                                                 const AttackConfig& config, const std::vector<double>& epsilons);
std::vector<CriticalDistance> critical_distances(const EncoderDecoderModel& model, const Dataset& subset,
                                                 const AttackConfig& config);

/// Statistics over non-censored distances.
DistanceSummary summarize(const std::vector<CriticalDistance>& distances);

/// Sweep, critical distances on the (possibly extended) sweep grid, and summary.
AttackReport run_attack(const EncoderDecoderModel& model, const Dataset& subset, const AttackConfig& config);

std::string to_string(AttackKind kind);
AttackKind parse_attack_kind(const std::string& text);
std::string to_string(BallNorm ball);
BallNorm parse_ball_norm(const std::string& text);

}  // namespace hebb
