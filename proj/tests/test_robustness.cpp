#include "hebb/robustness.hpp"
#include "hebb/train.hpp"

#include "test_util.hpp"

#include <doctest.h>

#include <cmath>

using namespace hebb;
using hebb::testing::random_matrix;

namespace {

EncoderDecoderModel random_model(int in, int hidden, int classes, double power, std::uint64_t seed) {
    EncoderDecoderModel m;
    m.W = random_matrix(hidden, in, seed, 1.0 / std::sqrt(static_cast<double>(in)));
    m.A = random_matrix(classes, hidden, seed + 1);
    m.b = random_matrix(classes, 1, seed + 2, 0.1);
    m.act_power = power;
    return m;
}

// One input, boundary at x = 0.8: class 0 below, class 1 above.
EncoderDecoderModel threshold_model() {
    EncoderDecoderModel m;
    m.W = Mat::Ones(1, 1);
    m.A.resize(2, 1);
    m.A << -1.0, 1.0;
    m.b.resize(2);
    m.b << 1.6, 0.0;
    return m;
}

Dataset labeled(Mat inputs, std::vector<int> labels) {
    Dataset d;
    d.inputs = std::move(inputs);
    d.labels = std::move(labels);
    d.name = "subset";
    return d;
}

struct Trained {
    EncoderDecoderModel model;
    Dataset subset;
};

const Trained& small_trained() {
    static const Trained t = [] {
        const Dataset data = synthetic_images(600, 3, ImageShape{3, 8, 8});
        Rng rng(4);
        const EncoderDecoderModel init = make_model(random_matrix(32, data.dim(), 5, 0.05), 10, 1.0, rng);
        TrainConfig cfg;
        cfg.batch_size = 50;
        cfg.epochs = 15;
        cfg.adam.lr = 3e-3;
        Trained out;
        out.model = train_supervised(init, data, cfg).model;
        out.subset = head(correct_subset(out.model, data), 200);
        return out;
    }();
    return t;
}

}  // namespace

TEST_CASE("random perturbations") {
    Rng rng(1);
    const Vec x = random_matrix(20, 1, 2);
    CHECK(perturb_random(x, 0.0, rng) == x);
    for (const double eps : {1e-3, 0.5, 40.0}) CHECK(std::abs((perturb_random(x, eps, rng) - x).norm() - eps) <= 1e-12 * std::max(1.0, eps));
    CHECK_THROWS_AS(perturb_random(x, -1.0, rng), ContractError);

    Vec mean = Vec::Zero(10);
    const Vec origin = Vec::Zero(10);
    for (int i = 0; i < 100000; ++i) mean += perturb_random(origin, 1.0, rng);
    CHECK((mean / 100000.0).norm() < 0.02);
}

TEST_CASE("input gradient matches finite differences") {
    const EncoderDecoderModel m = random_model(6, 5, 3, 2.0, 7);
    const Vec x = random_matrix(6, 1, 8);
    const Vec g = loss_input_gradient(m, x, 2);
    Vec fd(6);
    for (int j = 0; j < 6; ++j) {
        Vec up = x, down = x;
        up[j] += 1e-6;
        down[j] -= 1e-6;
        fd[j] = (cross_entropy(forward(m, up).logits, 2) - cross_entropy(forward(m, down).logits, 2)) / 2e-6;
    }
    CHECK((g - fd).norm() <= 1e-6 * std::max(1.0, fd.norm()));
}

TEST_CASE("fgsm on a hand-sized linear model") {
    EncoderDecoderModel m;
    m.W = Mat::Identity(2, 2);
    m.A.resize(2, 2);
    m.A << 1.0, -2.0, 0.5, 3.0;
    m.b = Vec::Zero(2);
    Vec x(2);
    x << 0.4, 0.7;
    // d/dx CE for label 0: (softmax - onehot)^T A.
    const Vec y = forward(m, x).logits;
    const Vec p = (y.array() - y.maxCoeff()).exp() / (y.array() - y.maxCoeff()).exp().sum();
    Vec r = p;
    r[0] -= 1.0;
    const Vec hand = m.A.transpose() * r;
    const Vec adv = attack_fgsm(m, x, 0, 0.1);
    for (int j = 0; j < 2; ++j) CHECK((adv[j] - x[j]) == doctest::Approx(0.1 * (hand[j] > 0 ? 1.0 : -1.0)));
    CHECK(attack_fgsm(m, x, 0, 0.0) == x);
}

TEST_CASE("fgsm stays in the infinity ball") {
    const EncoderDecoderModel m = random_model(12, 9, 4, 1.0, 3);
    const Mat x = random_matrix(30, 12, 4);
    std::vector<int> labels(30);
    for (int i = 0; i < 30; ++i) labels[static_cast<std::size_t>(i)] = i % 4;
    const Mat adv = attack_fgsm(m, x, labels, 0.3);
    const Mat g = loss_input_gradient(m, x, labels);
    for (Eigen::Index r = 0; r < 30; ++r)
        for (Eigen::Index c = 0; c < 12; ++c) {
            const double d = std::abs(adv(r, c) - x(r, c));
            CHECK(d <= 0.3 + 1e-15);
            if (g(r, c) != 0.0) CHECK(d == doctest::Approx(0.3));
        }
    const Mat clipped = attack_fgsm(m, x, labels, 5.0, true);
    CHECK(clipped.minCoeff() >= 0.0);
    CHECK(clipped.maxCoeff() <= 1.0);
}

TEST_CASE("pgd projection contract") {
    const EncoderDecoderModel m = random_model(10, 8, 3, 2.0, 13);
    const Mat x = random_matrix(25, 10, 14);
    std::vector<int> labels(25, 1);
    for (const BallNorm ball : {BallNorm::inf, BallNorm::l2})
        for (const double eps : {1e-3, 0.05, 2.0}) {
            AttackConfig cfg;
            cfg.ball = ball;
            const Mat adv = attack_pgd(m, x, labels, eps, cfg);
            for (Eigen::Index r = 0; r < 25; ++r) {
                const Eigen::RowVectorXd d = adv.row(r) - x.row(r);
                const double size = ball == BallNorm::inf ? d.cwiseAbs().maxCoeff() : d.norm();
                CHECK(size <= eps);
            }
        }

    Vec delta(3);
    delta << 3.0, -4.0, 0.0;
    CHECK(project_ball(delta, 1.0, BallNorm::inf) == Vec(Eigen::Vector3d(1.0, -1.0, 0.0)));
    CHECK(project_ball(delta, 1.0, BallNorm::l2).norm() == doctest::Approx(1.0));
    CHECK(project_ball(delta, 10.0, BallNorm::l2) == delta);
}

TEST_CASE("pgd special cases") {
    EncoderDecoderModel constant = random_model(5, 4, 3, 1.0, 1);
    constant.A.setZero();
    const Vec x = random_matrix(5, 1, 2);
    AttackConfig cfg;
    CHECK(attack_pgd(constant, x, 0, 0.5, cfg) == x);

    const EncoderDecoderModel m = random_model(5, 4, 3, 1.0, 6);
    cfg.pgd_steps = 1;
    cfg.pgd_step_fraction = 1.0;
    CHECK((attack_pgd(m, x, 2, 0.2, cfg) - attack_fgsm(m, x, 2, 0.2)).norm() == 0.0);
    cfg.ball = BallNorm::l2;
    const Vec fgsm = attack_fgsm(m, x, 2, 0.2);
    CHECK((attack_pgd(m, x, 2, 0.2, cfg) - (x + project_ball(fgsm - x, 0.2, BallNorm::l2))).norm() <= 1e-15);
}

TEST_CASE("epsilon grid") {
    EpsilonGrid grid;
    const auto v = grid.values();
    REQUIRE(v.size() == 50);
    CHECK(v.front() == 1e-3);
    CHECK(v.back() == 1e2);
    for (std::size_t i = 1; i < v.size(); ++i) CHECK(v[i] / v[i - 1] == doctest::Approx(std::pow(1e5, 1.0 / 49)));
    AttackConfig cfg;
    cfg.grid.min = 0.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("constant classifier is never fooled") {
    EncoderDecoderModel m = random_model(6, 4, 3, 1.0, 2);
    m.A.setZero();
    m.b << 0.0, 1.0, 0.0;
    const Dataset subset = labeled(random_matrix(20, 6, 3), std::vector<int>(20, 1));
    for (const AttackKind kind : {AttackKind::random, AttackKind::fgsm, AttackKind::pgd}) {
        AttackConfig cfg;
        cfg.kind = kind;
        cfg.grid = {1e-2, 10.0, 10};
        const AttackReport r = run_attack(m, subset, cfg);
        CHECK(r.curve.size() == 11);
        for (const auto& p : r.curve) CHECK(p.relative_accuracy == 1.0);
        CHECK(r.summary.censored == 20);
        CHECK(r.summary.fooled == 0);
        for (const auto& d : r.distances) CHECK(d.censored);
    }
}

TEST_CASE("critical distance of a one-dimensional boundary") {
    const EncoderDecoderModel m = threshold_model();
    const Dataset subset = labeled(Mat::Constant(1, 1, 0.5), {0});
    REQUIRE(predict(m, subset.inputs.row(0).transpose()).label == 0);
    for (const AttackKind kind : {AttackKind::fgsm, AttackKind::pgd, AttackKind::random}) {
        AttackConfig cfg;
        cfg.kind = kind;
        cfg.grid = {1e-3, 1.0, 31};
        cfg.refine = true;
        cfg.random_draws = 8;
        const auto d = critical_distances(m, subset, cfg);
        REQUIRE(d.size() == 1);
        CHECK_FALSE(d[0].censored);
        const auto eps = cfg.grid.values();
        const double bracket = 0.3 * (eps[1] / eps[0] - 1.0);
        CHECK(std::abs(d[0].distance - 0.3) <= bracket / std::pow(2.0, 12) + 1e-12);

        cfg.refine = false;
        const auto coarse = critical_distances(m, subset, cfg);
        CHECK(coarse[0].distance >= 0.3);
        CHECK(coarse[0].distance <= 0.3 + bracket * 1.0001);
    }
}

TEST_CASE("fgsm distance at the first grid point is eps times sqrt(d)") {
    const int dim = 9;
    EncoderDecoderModel m = random_model(dim, 6, 2, 1.0, 30);
    const Vec x = random_matrix(dim, 1, 31);
    const int label = predict(m, x).label;
    // Shift the bias so that the image sits just inside its class.
    const Vec y = forward(m, x).logits;
    m.b[label] -= y[label] - y[1 - label] - 1e-6;
    REQUIRE(predict(m, x).label == label);
    REQUIRE((loss_input_gradient(m, x, label).array() != 0.0).all());
    AttackConfig cfg;
    cfg.grid = {1e-3, 1.0, 10};
    const auto d = critical_distances(m, labeled(Mat(x.transpose()), {label}), cfg);
    CHECK(d[0].epsilon == 1e-3);
    CHECK(d[0].distance == doctest::Approx(1e-3 * std::sqrt(static_cast<double>(dim))).epsilon(1e-12));
}

TEST_CASE("summaries exclude censored images") {
    std::vector<CriticalDistance> d{{0, 1.0, 0.1, false}, {1, 0.0, 0.0, true}, {2, 3.0, 0.2, false}, {3, 2.0, 0.1, false}};
    const DistanceSummary s = summarize(d);
    CHECK(s.fooled == 3);
    CHECK(s.censored == 1);
    CHECK(s.mean == doctest::Approx(2.0));
    CHECK(s.median == doctest::Approx(2.0));
    CHECK(s.variance == doctest::Approx(1.0));
    d.pop_back();
    CHECK(summarize(d).median == doctest::Approx(2.0));
}

TEST_CASE("sweeps on a trained model") {
    const Trained& t = small_trained();
    REQUIRE(t.subset.count() > 50);
    std::vector<std::vector<CurvePoint>> curves;
    for (const AttackKind kind : {AttackKind::random, AttackKind::fgsm, AttackKind::pgd}) {
        AttackConfig cfg;
        cfg.kind = kind;
        cfg.grid = {1e-3, 10.0, 21};
        cfg.extend_until_saturated = false;
        cfg.seed = 5;
        curves.push_back(relative_accuracy_sweep(t.model, t.subset, cfg));
        const auto& c = curves.back();
        CHECK(c.front().epsilon == 0.0);
        CHECK(c.front().relative_accuracy == 1.0);
        for (const auto& p : c) {
            CHECK(p.relative_accuracy >= 0.0);
            CHECK(p.relative_accuracy <= 1.0);
        }
        if (kind != AttackKind::random)
            for (std::size_t i = 1; i < c.size(); ++i) CHECK(c[i].relative_accuracy <= c[i - 1].relative_accuracy + 0.01);
    }
    for (std::size_t i = 0; i < curves[0].size(); ++i) {
        CHECK(curves[1][i].relative_accuracy <= curves[0][i].relative_accuracy + 0.02);
        CHECK(curves[2][i].relative_accuracy <= curves[1][i].relative_accuracy + 0.02);
    }
}

TEST_CASE("random sweeps are deterministic and thread-count independent") {
    const Trained& t = small_trained();
    AttackConfig cfg;
    cfg.kind = AttackKind::random;
    cfg.grid = {1e-2, 100.0, 9};
    cfg.seed = 77;
    const AttackReport a = run_attack(t.model, t.subset, cfg);
    const AttackReport b = run_attack(t.model, t.subset, cfg);
    cfg.jobs = 3;
    const AttackReport c = run_attack(t.model, t.subset, cfg);
    REQUIRE(a.curve.size() == b.curve.size());
    REQUIRE(a.curve.size() == c.curve.size());
    for (std::size_t i = 0; i < a.curve.size(); ++i) {
        CHECK(a.curve[i].relative_accuracy == b.curve[i].relative_accuracy);
        CHECK(a.curve[i].relative_accuracy == c.curve[i].relative_accuracy);
    }
    for (std::size_t i = 0; i < a.distances.size(); ++i) CHECK(a.distances[i].distance == c.distances[i].distance);
}

TEST_CASE("grid extends until accuracy saturates") {
    const EncoderDecoderModel m = threshold_model();
    const Dataset subset = labeled(Mat::Constant(4, 1, 0.5), {0, 0, 0, 0});
    AttackConfig cfg;
    cfg.grid = {1e-4, 1e-2, 5};
    const auto curve = relative_accuracy_sweep(m, subset, cfg);
    CHECK(curve.size() == 6);  // nothing changes inside the first decade below 1e-2

    cfg.grid = {1e-3, 0.1, 5};
    Dataset spread = labeled(Mat(4, 1), {0, 0, 0, 0});
    spread.inputs << 0.79, 0.75, 0.7, 0.5;
    const auto extended = relative_accuracy_sweep(m, spread, cfg);
    CHECK(extended.back().epsilon > 0.1);
    CHECK(extended.back().relative_accuracy == 0.0);
}

TEST_CASE("attack names") {
    CHECK(parse_attack_kind("pgd") == AttackKind::pgd);
    CHECK(to_string(BallNorm::l2) == "l2");
    CHECK_THROWS_AS(parse_ball_norm("l1"), ConfigError);
    const EncoderDecoderModel m = threshold_model();
    CHECK_THROWS_AS(run_attack(m, labeled(Mat(0, 1), {}), AttackConfig{}), EmptySubsetError);
}
