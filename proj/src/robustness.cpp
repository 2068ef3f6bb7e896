#include "hebb/robustness.hpp"

#include "hebb/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace hebb {

namespace {

constexpr Eigen::Index chunk_rows = 128;
constexpr int max_extensions = 6;

double sign_of(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

std::uint64_t image_seed(std::uint64_t seed, std::uint64_t index) {
    // Distinct, well-mixed stream per image.
    std::uint64_t z = seed ^ (index * 0x9e3779b97f4a7c15ULL + 0x632be59bd9b4e019ULL);
    z = (z ^ (z >> 31)) * 0xbf58476d1ce4e5b9ULL;
    return z ^ (z >> 29);
}

void clip_unit(Mat& m) { m = m.cwiseMax(0.0).cwiseMin(1.0); }

void project_rows(Mat& delta, double epsilon, BallNorm ball) {
    if (ball == BallNorm::inf) {
        delta = delta.cwiseMax(-epsilon).cwiseMin(epsilon);
        return;
    }
    for (Eigen::Index r = 0; r < delta.rows(); ++r) {
        const double n = delta.row(r).norm();
        if (n > epsilon) delta.row(r) *= epsilon / n;
    }
}

// Pulls rows of `adv` towards `origin` until adv - origin, as computed in floating point,
// lies inside the ball; x + delta can round to a point just outside it.
void enforce_ball(Mat& adv, const Mat& origin, double epsilon, BallNorm ball) {
    for (Eigen::Index r = 0; r < adv.rows(); ++r) {
        if (ball == BallNorm::inf) {
            for (Eigen::Index j = 0; j < adv.cols(); ++j) {
                adv(r, j) = std::clamp(adv(r, j), origin(r, j) - epsilon, origin(r, j) + epsilon);
                while (std::abs(adv(r, j) - origin(r, j)) > epsilon) adv(r, j) = std::nextafter(adv(r, j), origin(r, j));
            }
            continue;
        }
        const double n = (adv.row(r) - origin.row(r)).norm();
        if (n > epsilon) adv.row(r) = origin.row(r) + (epsilon / n) * (adv.row(r) - origin.row(r));
        for (double shrink = 4.0 * std::numeric_limits<double>::epsilon(); (adv.row(r) - origin.row(r)).norm() > epsilon;
             shrink = std::min(2.0 * shrink, 1.0))
            adv.row(r) = origin.row(r) + (1.0 - shrink) * (adv.row(r) - origin.row(r));
    }
}

// Per image and epsilon: fraction of attack variants still classified correctly, and the smallest
// realised perturbation norm among fooling variants (NaN if none fooled).
struct Evaluation {
    std::vector<std::vector<double>> correct;      // [eps][image]
    std::vector<std::vector<double>> fooled_norm;  // [eps][image]
};

struct ChunkContext {
    Eigen::Index begin = 0;
    Mat inputs;
    std::vector<int> labels;
    Mat directions;  // (rows * draws) x dim, random attack only
    Mat fgsm_sign;   // rows x dim, fgsm only
};

ChunkContext make_chunk(const EncoderDecoderModel& model, const Dataset& subset, const AttackConfig& config,
                        Eigen::Index begin, Eigen::Index end) {
    ChunkContext ctx;
    ctx.begin = begin;
    ctx.inputs = subset.inputs.middleRows(begin, end - begin);
    ctx.labels.assign(subset.labels.begin() + begin, subset.labels.begin() + end);
    if (config.kind == AttackKind::random) {
        const int draws = config.random_draws;
        ctx.directions.resize((end - begin) * draws, subset.dim());
        for (Eigen::Index r = begin; r < end; ++r) {
            Rng rng(image_seed(config.seed, static_cast<std::uint64_t>(r)));
            for (int d = 0; d < draws; ++d) {
                Vec xi = rng.normal_vector(subset.dim());
                while (xi.norm() == 0.0) xi = rng.normal_vector(subset.dim());
                ctx.directions.row((r - begin) * draws + d) = (xi / xi.norm()).transpose();
            }
        }
    } else if (config.kind == AttackKind::fgsm) {
        ctx.fgsm_sign = loss_input_gradient(model, ctx.inputs, ctx.labels).unaryExpr(&sign_of);
    }
    return ctx;
}

// Attacked inputs for one chunk at one epsilon; random attacks return `draws` rows per image.
Mat attacked(const EncoderDecoderModel& model, const ChunkContext& ctx, const AttackConfig& config, double epsilon) {
    Mat out;
    switch (config.kind) {
        case AttackKind::random: {
            const int draws = config.random_draws;
            out.resize(ctx.directions.rows(), ctx.directions.cols());
            for (Eigen::Index r = 0; r < ctx.inputs.rows(); ++r)
                for (int d = 0; d < draws; ++d)
                    out.row(r * draws + d) = ctx.inputs.row(r) + epsilon * ctx.directions.row(r * draws + d);
            if (config.clip) clip_unit(out);
            break;
        }
        case AttackKind::fgsm:
            out = ctx.inputs + epsilon * ctx.fgsm_sign;
            if (config.clip) clip_unit(out);
            break;
        case AttackKind::pgd: out = attack_pgd(model, ctx.inputs, ctx.labels, epsilon, config); break;
    }
    return out;
}

int variants(const AttackConfig& config) { return config.kind == AttackKind::random ? config.random_draws : 1; }

void evaluate_chunk(const EncoderDecoderModel& model, const ChunkContext& ctx, const AttackConfig& config, double epsilon,
                    double* correct, double* fooled_norm) {
    const Mat adv = attacked(model, ctx, config, epsilon);
    const auto predicted = predict_labels(model, adv);
    const int v = variants(config);
    for (Eigen::Index r = 0; r < ctx.inputs.rows(); ++r) {
        int hits = 0;
        double norm = std::numeric_limits<double>::quiet_NaN();
        for (int d = 0; d < v; ++d) {
            const Eigen::Index row = r * v + d;
            if (predicted[static_cast<std::size_t>(row)] == ctx.labels[static_cast<std::size_t>(r)]) {
                ++hits;
            } else {
                const double n = (adv.row(row) - ctx.inputs.row(r)).norm();
                if (std::isnan(norm) || n < norm) norm = n;
            }
        }
        correct[r] = static_cast<double>(hits) / v;
        fooled_norm[r] = norm;
    }
}

Evaluation evaluate(const EncoderDecoderModel& model, const Dataset& subset, const AttackConfig& config,
                    const std::vector<double>& epsilons) {
    const Eigen::Index n = subset.count();
    Evaluation ev;
    ev.correct.assign(epsilons.size(), std::vector<double>(static_cast<std::size_t>(n)));
    ev.fooled_norm.assign(epsilons.size(), std::vector<double>(static_cast<std::size_t>(n)));
    const auto chunks = static_cast<std::size_t>((n + chunk_rows - 1) / chunk_rows);
    parallel_for(chunks, config.jobs, [&](std::size_t c) {
        const Eigen::Index begin = static_cast<Eigen::Index>(c) * chunk_rows;
        const Eigen::Index end = std::min(n, begin + chunk_rows);
        const ChunkContext ctx = make_chunk(model, subset, config, begin, end);
        for (std::size_t e = 0; e < epsilons.size(); ++e)
            evaluate_chunk(model, ctx, config, epsilons[e], ev.correct[e].data() + begin, ev.fooled_norm[e].data() + begin);
    });
    return ev;
}

double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

void check_subset(const Dataset& subset) {
    if (subset.count() == 0) throw EmptySubsetError("attack: empty subset");
    if (!subset.has_labels()) throw ContractError("attack: subset has no labels");
}

}  // namespace

void AttackConfig::validate() const {
    if (!(grid.min > 0.0) || !(grid.max > grid.min) || grid.count < 2)
        throw ConfigError("attack: epsilon grid needs 0 < min < max and count >= 2");
    if (pgd_steps < 1) throw ConfigError("attack: pgd_steps must be >= 1");
    if (!(pgd_step_fraction > 0.0)) throw ConfigError("attack: pgd_step_fraction must be > 0");
    if (random_draws < 1) throw ConfigError("attack: random_draws must be >= 1");
    if (refine_iterations < 0) throw ConfigError("attack: refine_iterations must be >= 0");
}

std::vector<double> EpsilonGrid::values() const {
    std::vector<double> v(static_cast<std::size_t>(count));
    const double lo = std::log10(min);
    const double hi = std::log10(max);
    for (int i = 0; i < count; ++i) v[static_cast<std::size_t>(i)] = std::pow(10.0, lo + (hi - lo) * i / (count - 1));
    v.front() = min;
    v.back() = max;
    return v;
}

Mat loss_input_gradient(const EncoderDecoderModel& model, const Mat& inputs, std::span<const int> labels) {
    const double n = model.act_power;
    const Mat z = pre_activations(model, inputs);
    const Mat hidden = z.unaryExpr([n](double v) { return activation(v, n); });
    Mat y = hidden * model.A.transpose();
    y.rowwise() += model.b.transpose();
    for (Eigen::Index r = 0; r < y.rows(); ++r) {
        const double top = y.row(r).maxCoeff();
        y.row(r) = (y.row(r).array() - top).exp();
        y.row(r) /= y.row(r).sum();
        y(r, labels[static_cast<std::size_t>(r)]) -= 1.0;
    }
    const Mat dz = (y * model.A).cwiseProduct(z.unaryExpr([n](double v) { return activation_derivative(v, n); }));
    return dz * model.W;
}

Vec loss_input_gradient(const EncoderDecoderModel& model, const Vec& x, int label) {
    const int labels[] = {label};
    return loss_input_gradient(model, Mat(x.transpose()), labels).row(0).transpose();
}

Vec perturb_random(const Vec& x, double epsilon, Rng& rng) {
    if (!(epsilon >= 0.0)) throw ContractError("perturb_random: epsilon must be >= 0");
    Vec xi = rng.normal_vector(x.size());
    while (xi.norm() == 0.0) xi = rng.normal_vector(x.size());
    return x + epsilon * xi / xi.norm();
}

Mat attack_fgsm(const EncoderDecoderModel& model, const Mat& inputs, std::span<const int> labels, double epsilon, bool clip) {
    Mat out = inputs + epsilon * loss_input_gradient(model, inputs, labels).unaryExpr(&sign_of);
    if (clip) clip_unit(out);
    return out;
}

Vec attack_fgsm(const EncoderDecoderModel& model, const Vec& x, int label, double epsilon, bool clip) {
    const int labels[] = {label};
    return attack_fgsm(model, Mat(x.transpose()), labels, epsilon, clip).row(0).transpose();
}

Mat attack_pgd(const EncoderDecoderModel& model, const Mat& inputs, std::span<const int> labels, double epsilon,
               const AttackConfig& config) {
    const double step = config.pgd_step_fraction * epsilon;
    Mat current = inputs;
    for (int s = 0; s < config.pgd_steps; ++s) {
        Mat delta = current + step * loss_input_gradient(model, current, labels).unaryExpr(&sign_of) - inputs;
        project_rows(delta, epsilon, config.ball);
        current = inputs + delta;
        if (config.clip) clip_unit(current);
        enforce_ball(current, inputs, epsilon, config.ball);
    }
    return current;
}

Vec attack_pgd(const EncoderDecoderModel& model, const Vec& x, int label, double epsilon, const AttackConfig& config) {
    const int labels[] = {label};
    return attack_pgd(model, Mat(x.transpose()), labels, epsilon, config).row(0).transpose();
}

Vec project_ball(const Vec& delta, double epsilon, BallNorm ball) {
    Mat m = delta.transpose();
    project_rows(m, epsilon, ball);
    return m.row(0).transpose();
}


namespace {

std::vector<CriticalDistance> distances_from(const EncoderDecoderModel& model, const Dataset& subset,
                                             const AttackConfig& config, const std::vector<double>& epsilons,
                                             const Evaluation& ev) {
    std::vector<CriticalDistance> out(static_cast<std::size_t>(subset.count()));
    parallel_for(out.size(), config.jobs, [&](std::size_t i) {
        CriticalDistance cd;
        cd.index = static_cast<int>(i);
        cd.censored = true;
        for (std::size_t e = 0; e < epsilons.size(); ++e) {
            if (std::isnan(ev.fooled_norm[e][i])) continue;
            cd.censored = false;
            cd.epsilon = epsilons[e];
            cd.distance = ev.fooled_norm[e][i];
            if (config.refine) {
                const auto row = static_cast<Eigen::Index>(i);
                const ChunkContext ctx = make_chunk(model, subset, config, row, row + 1);
                double lo = e > 0 ? epsilons[e - 1] : 0.0;
                double hi = epsilons[e];
                for (int it = 0; it < config.refine_iterations; ++it) {
                    const double mid = 0.5 * (lo + hi);
                    double correct = 0.0;
                    double norm = 0.0;
                    evaluate_chunk(model, ctx, config, mid, &correct, &norm);
                    if (std::isnan(norm)) {
                        lo = mid;
                    } else {
                        hi = mid;
                        cd.distance = norm;
                        cd.epsilon = mid;
                    }
                }
            }
            break;
        }
        out[i] = cd;
    });
    return out;
}

}  // namespace

std::vector<CriticalDistance> critical_distances(const EncoderDecoderModel& model, const Dataset& subset,
                                                 const AttackConfig& config, const std::vector<double>& epsilons) {
    config.validate();
    check_subset(subset);
    return distances_from(model, subset, config, epsilons, evaluate(model, subset, config, epsilons));
}

std::vector<CriticalDistance> critical_distances(const EncoderDecoderModel& model, const Dataset& subset,
                                                 const AttackConfig& config) {
    return critical_distances(model, subset, config, config.grid.values());
}

DistanceSummary summarize(const std::vector<CriticalDistance>& distances) {
    DistanceSummary s;
    std::vector<double> v;
    for (const auto& d : distances) {
        if (d.censored) {
            ++s.censored;
        } else {
            v.push_back(d.distance);
        }
    }
    s.fooled = static_cast<int>(v.size());
    if (v.empty()) {
        s.mean = s.median = s.variance = std::numeric_limits<double>::quiet_NaN();
        return s;
    }
    s.mean = mean_of(v);
    std::sort(v.begin(), v.end());
    const std::size_t m = v.size() / 2;
    s.median = v.size() % 2 == 1 ? v[m] : 0.5 * (v[m - 1] + v[m]);
    double ss = 0.0;
    for (double x : v) ss += (x - s.mean) * (x - s.mean);
    s.variance = v.size() > 1 ? ss / static_cast<double>(v.size() - 1) : 0.0;
    return s;
}

namespace {

struct Sweep {
    std::vector<double> epsilons;
    Evaluation ev;
    std::vector<CurvePoint> curve;
};

Sweep sweep(const EncoderDecoderModel& model, const Dataset& subset, const AttackConfig& config) {
    config.validate();
    check_subset(subset);
    Sweep sw;
    sw.epsilons = config.grid.values();
    sw.ev = evaluate(model, subset, config, sw.epsilons);
    if (config.extend_until_saturated) {
        const double per_decade =
            std::max(1.0, std::round((config.grid.count - 1) / std::log10(config.grid.max / config.grid.min)));
        for (int ext = 0; ext < max_extensions; ++ext) {
            const double top = sw.epsilons.back();
            // Accuracy at the last grid point at or below top / 10.
            std::size_t ref = 0;
            for (std::size_t e = 0; e < sw.epsilons.size(); ++e)
                if (sw.epsilons[e] <= top / 10.0 * (1.0 + 1e-12)) ref = e;
            const double change = std::abs(mean_of(sw.ev.correct[ref]) - mean_of(sw.ev.correct.back()));
            if (change <= 0.01) break;
            std::vector<double> extra;
            for (int j = 1; j <= static_cast<int>(per_decade); ++j) extra.push_back(top * std::pow(10.0, j / per_decade));
            Evaluation more = evaluate(model, subset, config, extra);
            sw.epsilons.insert(sw.epsilons.end(), extra.begin(), extra.end());
            sw.ev.correct.insert(sw.ev.correct.end(), more.correct.begin(), more.correct.end());
            sw.ev.fooled_norm.insert(sw.ev.fooled_norm.end(), more.fooled_norm.begin(), more.fooled_norm.end());
        }
    }
    const Evaluation at_zero = evaluate(model, subset, config, {0.0});
    sw.curve.push_back({0.0, mean_of(at_zero.correct[0])});
    for (std::size_t e = 0; e < sw.epsilons.size(); ++e) sw.curve.push_back({sw.epsilons[e], mean_of(sw.ev.correct[e])});
    return sw;
}

}  // namespace

std::vector<CurvePoint> relative_accuracy_sweep(const EncoderDecoderModel& model, const Dataset& subset,
                                                const AttackConfig& config) {
    return sweep(model, subset, config).curve;
}

AttackReport run_attack(const EncoderDecoderModel& model, const Dataset& subset, const AttackConfig& config) {
    Sweep sw = sweep(model, subset, config);
    AttackReport report;
    report.kind = config.kind;
    report.distances = distances_from(model, subset, config, sw.epsilons, sw.ev);
    report.summary = summarize(report.distances);
    report.curve = std::move(sw.curve);
    return report;
}

std::string to_string(AttackKind kind) {
    switch (kind) {
        case AttackKind::random: return "random";
        case AttackKind::fgsm: return "fgsm";
        case AttackKind::pgd: return "pgd";
    }
    return "fgsm";
}

AttackKind parse_attack_kind(const std::string& text) {
    if (text == "random") return AttackKind::random;
    if (text == "fgsm") return AttackKind::fgsm;
    if (text == "pgd") return AttackKind::pgd;
    throw ConfigError("unknown attack kind '" + text + "'");
}

std::string to_string(BallNorm ball) { return ball == BallNorm::inf ? "inf" : "l2"; }

BallNorm parse_ball_norm(const std::string& text) {
    if (text == "inf") return BallNorm::inf;
    if (text == "l2") return BallNorm::l2;
    throw ConfigError("unknown ball norm '" + text + "'");
}

}  // namespace hebb
