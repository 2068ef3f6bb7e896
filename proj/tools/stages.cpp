#include "cli.hpp"

#include "hebb/checkpoint.hpp"
#include "hebb/data.hpp"
#include "hebb/landscape.hpp"
#include "hebb/pruning.hpp"
#include "hebb/spectra.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>
#include <type_traits>

namespace hebb::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

double real_or_nan(const json& v) { return v.is_null() ? std::numeric_limits<double>::quiet_NaN() : v.get<double>(); }

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

class Csv {
public:
    Csv(const fs::path& file, const std::string& hash, const std::string& columns) : out_(file) {
        if (!out_) throw Error("cannot write " + file.string());
        out_ << "# config_hash=" << hash << "\n" << columns << "\n";
    }
    template <typename... T>
    void row(const T&... cells) {
        bool first = true;
        ((out_ << (first ? "" : ",") << cell(cells), first = false), ...);
        out_ << "\n";
    }

    void line(const std::string& text) { out_ << text << "\n"; }

private:
    static std::string cell(double v) { return num(v); }
    static std::string cell(int v) { return std::to_string(v); }
    static std::string cell(long v) { return std::to_string(v); }
    static std::string cell(const std::string& v) { return v; }
    static std::string cell(const char* v) { return v; }
    std::ofstream out_;
};

struct Context {
    const ExperimentConfig& config;
    const RunOptions& options;
    std::ostream& log;
    std::string hash;
    fs::path root;
    std::optional<Dataset> train_set, test_set;

    const Dataset& train() {
        if (!train_set) train_set = load_split(Split::train, "data.train_count");
        return *train_set;
    }
    const Dataset& test() {
        if (!test_set) test_set = load_split(Split::test, "data.test_count");
        return *test_set;
    }

private:
    Dataset load_split(Split split, const std::string& count_key) {
        const std::string& dir = config.get("data_dir");
        if (dir.empty()) throw ConfigError("data_dir is not set (config key or --data-dir)");
        if (!fs::is_directory(dir)) throw Error("data_dir '" + dir + "' does not exist");
        Dataset d = load_cifar10(dir, split);
        const long n = config.integer(count_key);
        return n > 0 ? head(d, n) : d;
    }
};

fs::path marker(const fs::path& dir) { return dir / "stage.json"; }

std::optional<json> read_marker(const fs::path& dir) {
    if (!fs::exists(marker(dir))) return std::nullopt;
    return read_json(marker(dir));
}

// True when the unit must run; logs the decision.
bool should_run(Context& ctx, const fs::path& dir, const std::string& label) {
    const auto m = read_marker(dir);
    const bool current = m && m->value("config_hash", "") == ctx.hash;
    if (current && !ctx.options.force) {
        ctx.log << "[skip] " << label << " (outputs present)\n";
        return false;
    }
    ctx.log << (ctx.options.dry_run ? "[plan] " : "[run]  ") << label << "\n";
    if (ctx.options.dry_run) return false;
    fs::remove(marker(dir));
    fs::create_directories(dir);
    return true;
}

void finish(Context& ctx, const fs::path& dir, const std::string& stage, const std::string& status = "done",
            json extra = json::object()) {
    extra["stage"] = stage;
    extra["status"] = status;
    extra["config_hash"] = ctx.hash;
    write_json(marker(dir), extra);
}

std::string status_of(const fs::path& dir) {
    const auto m = read_marker(dir);
    return m ? m->value("status", "") : "";
}

json report_json(const ConvergenceReport& r) {
    return {{"passed", r.passed},
            {"fraction_converged", r.fraction_converged},
            {"mean_entry", r.mean_entry},
            {"norm_condition", r.norm_condition},
            {"mean_condition", r.mean_condition}};
}

json train_json(const TrainConfig& t) {
    return {{"mode", to_string(t.mode)},         {"batch_size", t.batch_size},
            {"epochs", t.epochs},                {"lr", t.adam.lr},
            {"reg", to_string(t.reg)},           {"reg_coefficient", t.reg_coefficient},
            {"n_proj", t.n_proj},                {"spectral_target_alpha", t.spectral_target_alpha},
            {"spectral_cutoff", t.spectral_cutoff}, {"normalize_features", t.normalize_features},
            {"seed", t.seed}};
}

double elapsed(std::chrono::steady_clock::time_point since) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - since).count();
}

// ---------------------------------------------------------------- train-unsup

void stage_train_unsup(Context& ctx) {
    const fs::path dir = ctx.root / "unsup";
    if (!should_run(ctx, dir, "train-unsup")) return;
    const auto start = std::chrono::steady_clock::now();
    const RuleConfig rule = ctx.config.rule();
    const Dataset& train = ctx.train();
    const int every = std::max(1, rule.epochs / 10);
    const SynapseMatrix s = train_unsupervised(rule, train, [&](int epoch, const SynapseMatrix&) {
        if ((epoch + 1) % every == 0) ctx.log << "  epoch " << epoch + 1 << "/" << rule.epochs << "\n";
    });
    save_synapses(dir / "synapses.json", s, {{"config_hash", ctx.hash}, {"images", train.count()}});
    const ConvergenceReport conv = convergence_check(s, ctx.config.real("convergence.tolerance"),
                                                     ctx.config.real("convergence.min_fraction"));
    json cj = report_json(conv);
    cj["config_hash"] = ctx.hash;
    cj["tolerance"] = ctx.config.real("convergence.tolerance");
    cj["min_fraction"] = ctx.config.real("convergence.min_fraction");
    write_json(dir / "convergence.json", cj);
    ctx.log << "  convergence " << (conv.passed ? "passed" : "FAILED") << ": " << conv.fraction_converged
            << " of rows within tolerance (" << elapsed(start) << " s)\n";
    finish(ctx, dir, "train-unsup", "done", {{"convergence_passed", conv.passed}});
}

// ---------------------------------------------------------------------- prune

void stage_prune(Context& ctx) {
    const fs::path dir = ctx.root / "prune";
    const fs::path unsup = ctx.root / "unsup";
    if (!should_run(ctx, dir, "prune")) return;
    if (status_of(unsup) != "done") throw Error("prune: no unsupervised checkpoint; run train-unsup first");
    const json conv = read_json(unsup / "convergence.json");
    if (!conv.at("passed").get<bool>()) {
        ctx.log << "  convergence check failed: model rejected, KH branch stops here\n";
        finish(ctx, dir, "prune", "rejected");
        return;
    }
    const SynapseMatrix s = load_synapses(unsup / "synapses.json");
    const Vec variances = row_variances(s.S);
    LrtSelection sel;
    std::string mixture_error;
    try {
        sel = select_mixture_lrt(std::span<const double>(variances.data(), static_cast<std::size_t>(variances.size())),
                                 ctx.config.real("prune.alpha"), ctx.config.seed());
    } catch (const DegenerateInputError& e) {
        mixture_error = e.what();
        ctx.log << "  warning: variance mixture could not be fitted (" << mixture_error << ")\n";
    }
    const std::string& manual = ctx.config.get("prune.threshold");
    std::optional<double> threshold;
    if (manual != "auto")
        threshold = ctx.config.real("prune.threshold");
    else if (mixture_error.empty())
        threshold = derive_threshold(sel.model);
    PruneResult pr;
    if (threshold) {
        pr = prune(s, *threshold);
    } else {
        pr.synapses = s;
        pr.report.variances = variances;
    }
    save_synapses(dir / "synapses.json", pr.synapses, {{"config_hash", ctx.hash}});

    json comps = json::array();
    for (const auto& c : sel.model.components)
        comps.push_back({{"weight", c.weight}, {"log_mean", c.log_mean}, {"log_std", c.log_std}, {"mean", c.mean()}});
    json report = {{"config_hash", ctx.hash},
                   {"selected_components", sel.model.components.size()},
                   {"components", comps},
                   {"lrt_statistics", sel.statistics},
                   {"critical_value", sel.critical_value},
                   {"threshold", threshold ? json(*threshold) : json(nullptr)},
                   {"threshold_source", manual == "auto" ? "lrt" : "manual"},
                   {"mixture_error", mixture_error.empty() ? json(nullptr) : json(mixture_error)},
                   {"pruned_rows", pr.report.pruned_rows},
                   {"hidden_before", s.S.rows()},
                   {"hidden_after", pr.synapses.S.rows()}};
    write_json(dir / "report.json", report);
    Csv csv(dir / "variances.csv", ctx.hash, "row,variance,pruned");
    std::vector<bool> pruned(static_cast<std::size_t>(s.S.rows()), false);
    for (int r : pr.report.pruned_rows) pruned[static_cast<std::size_t>(r)] = true;
    for (Eigen::Index i = 0; i < variances.size(); ++i)
        csv.row(static_cast<int>(i), variances[i], pruned[static_cast<std::size_t>(i)] ? 1 : 0);
    ctx.log << "  " << sel.model.components.size() << " component(s), pruned " << pr.report.pruned_rows.size() << " of "
            << s.S.rows() << " units\n";
    finish(ctx, dir, "prune");
}

// ------------------------------------------------------------------ train-sup

std::optional<EncoderDecoderModel> initial_model(Context& ctx, const std::string& variant) {
    const int classes = cifar10_classes;
    Rng rng(ctx.config.seed() * 31 + std::hash<std::string>{}(variant) % 1000003);
    if (variant == "kh") {
        const fs::path pruned = ctx.root / "prune";
        const std::string st = status_of(pruned);
        if (st == "rejected") {
            ctx.log << "  kh: rejected by the convergence check, not trained\n";
            return std::nullopt;
        }
        if (st != "done") throw Error("train-sup: no pruned checkpoint for kh; run prune first");
        const SynapseMatrix s = load_synapses(pruned / "synapses.json");
        EncoderDecoderModel m = make_model(lebesgue_weights(s.S, s.config.p), classes,
                                           ctx.config.real("train.kh_act_power"), rng);
        m.frozen_encoder = true;
        return m;
    }
    const long hidden_cfg = ctx.config.integer("train.bp_hidden");
    const Eigen::Index hidden = hidden_cfg > 0 ? hidden_cfg : ctx.config.integer("rule.hidden_units");
    const Eigen::Index dim = cifar10_shape.pixels();
    Mat w(hidden, dim);
    const double scale = 1.0 / std::sqrt(static_cast<double>(dim));
    for (Eigen::Index i = 0; i < hidden; ++i)
        for (Eigen::Index j = 0; j < dim; ++j) w(i, j) = scale * rng.normal();
    return make_model(std::move(w), classes, ctx.config.real("train.bp_act_power"), rng);
}

void train_one(Context& ctx, const std::string& variant, const std::string& name, TrainConfig tc) {
    const fs::path dir = ctx.root / "models" / name;
    if (!should_run(ctx, dir, "train-sup " + name)) return;
    const auto start = std::chrono::steady_clock::now();
    const auto model = initial_model(ctx, variant);
    if (!model) {
        finish(ctx, dir, "train-sup", "rejected");
        return;
    }
    json log_json = {{"config_hash", ctx.hash}, {"variant", variant}, {"train", train_json(tc)}, {"epochs", json::array()}};
    try {
        const TrainResult r = train_supervised(*model, ctx.train(), tc, &ctx.test());
        for (const auto& e : r.history)
            log_json["epochs"].push_back({{"epoch", e.epoch},
                                          {"train_loss", e.train_loss},
                                          {"train_accuracy", e.train_accuracy},
                                          {"test_accuracy", e.test_accuracy}});
        write_json(dir / "log.json", log_json);
        save_model(dir / "model.json", r.model, {{"config_hash", ctx.hash}, {"variant", variant}, {"train", train_json(tc)}});
        ctx.log << "  " << name << ": test accuracy " << r.history.back().test_accuracy << " (" << elapsed(start)
                << " s)\n";
        finish(ctx, dir, "train-sup");
    } catch (const DivergenceError& e) {
        log_json["diverged_at_epoch"] = e.epoch();
        write_json(dir / "log.json", log_json);
        ctx.log << "  " << name << ": diverged at epoch " << e.epoch() << "\n";
        finish(ctx, dir, "train-sup", "diverged");
    }
}

std::vector<std::string> selected_variants(Context& ctx) {
    std::vector<std::string> out;
    for (const auto& v : ctx.config.variants())
        if (ctx.options.only_variants.empty() ||
            std::find(ctx.options.only_variants.begin(), ctx.options.only_variants.end(), v) !=
                ctx.options.only_variants.end())
            out.push_back(v);
    return out;
}

void stage_train_sup(Context& ctx) {
    for (const auto& v : selected_variants(ctx)) {
        train_one(ctx, v, v, ctx.config.train(v));
        if (v == "kh" || v == "bp") continue;
        for (double c : ctx.options.reg_grid) {
            TrainConfig tc = ctx.config.train(v);
            tc.reg_coefficient = c;
            train_one(ctx, v, v + "@" + num(c), tc);
        }
    }
}

// Trained models in variant order (grid models excluded).
std::vector<std::pair<std::string, EncoderDecoderModel>> trained_models(Context& ctx) {
    std::vector<std::pair<std::string, EncoderDecoderModel>> out;
    for (const auto& v : selected_variants(ctx)) {
        const fs::path dir = ctx.root / "models" / v;
        if (status_of(dir) == "done") out.emplace_back(v, load_model(dir / "model.json"));
    }
    return out;
}

// ----------------------------------------------------------------------- eval

void stage_eval(Context& ctx) {
    const fs::path dir = ctx.root / "eval";
    if (!should_run(ctx, dir, "eval")) return;
    std::vector<std::string> names;
    if (fs::is_directory(ctx.root / "models"))
        for (const auto& e : fs::directory_iterator(ctx.root / "models"))
            if (status_of(e.path()) == "done") names.push_back(e.path().filename().string());
    std::sort(names.begin(), names.end());
    Csv csv(dir / "accuracy.csv", ctx.hash, "model,hidden_units,train_accuracy,test_accuracy");
    for (const auto& n : names) {
        const EncoderDecoderModel m = load_model(ctx.root / "models" / n / "model.json");
        const double tr = accuracy(m, ctx.train());
        const double te = accuracy(m, ctx.test());
        csv.row(n, static_cast<long>(m.hidden_dim()), tr, te);
        ctx.log << "  " << n << ": train " << tr << " test " << te << "\n";
    }
    finish(ctx, dir, "eval");
}

// ------------------------------------------------------------------- spectrum

struct SpectrumSource {
    std::string name;
    std::optional<EncoderDecoderModel> model;  // none: raw inputs
    const Dataset* data;
};

void write_spectrum(Context& ctx, const fs::path& dir, const SpectrumSource& src, const Spectrum& spec,
                    const PowerLawFit& fit, const std::vector<ScaleRun>& runs) {
    Csv csv(dir / (src.name + ".csv"), ctx.hash, "n,lambda,lambda_normalized");
    for (Eigen::Index i = 0; i < spec.lambdas.size(); ++i)
        csv.row(static_cast<long>(i + 1), spec.lambdas[i], spec.normalized[i]);
    json scale_runs = json::array();
    for (const auto& r : runs)
        scale_runs.push_back({{"scale", r.scale},
                              {"dim", r.dim},
                              {"alpha", r.fit.alpha},
                              {"alpha_err", r.fit.alpha_err},
                              {"fit_range", {r.fit.n_min, r.fit.n_max}}});
    write_json(dir / (src.name + ".json"), {{"config_hash", ctx.hash},
                                            {"source", src.name},
                                            {"dim", spec.dim},
                                            {"samples", spec.samples},
                                            {"layer", src.model ? ctx.config.get("spectrum.layer") : "input"},
                                            {"alpha", fit.alpha},
                                            {"alpha_err", fit.alpha_err},
                                            {"fit_range", {fit.n_min, fit.n_max}},
                                            {"excluded_points", fit.excluded_points},
                                            {"scale_runs", scale_runs}});
}

void stage_spectrum(Context& ctx) {
    const fs::path dir = ctx.root / "spectrum";
    if (!should_run(ctx, dir, "spectrum")) return;
    const auto start = std::chrono::steady_clock::now();
    const Dataset data = head(ctx.test(), ctx.config.integer("spectrum.data_count"));
    const Dataset noise = gaussian_noise_set(static_cast<int>(data.dim()),
                                             static_cast<int>(ctx.config.integer("spectrum.noise_count")),
                                             ctx.config.seed() * 7 + 3);
    const Layer layer = parse_layer(ctx.config.get("spectrum.layer"));

    std::vector<SpectrumSource> sources;
    if (ctx.config.flag("spectrum.include_raw")) {
        sources.push_back({"raw_cifar10", std::nullopt, &data});
        sources.push_back({"raw_noise", std::nullopt, &noise});
    }
    const auto models = trained_models(ctx);
    for (const auto& [name, m] : models) {
        sources.push_back({name + "_cifar10", m, &data});
        sources.push_back({name + "_noise", m, &noise});
    }
    if (status_of(ctx.root / "prune") == "done") {
        // Untrained encoder of the hybrid model: initial synapses restricted to the surviving units.
        RuleConfig rule = ctx.config.rule();
        const SynapseMatrix init = initial_synapses(rule, data.dim());
        const json report = read_json(ctx.root / "prune" / "report.json");
        const auto pruned = report.at("pruned_rows").get<std::vector<int>>();
        std::vector<Eigen::Index> keep;
        for (Eigen::Index i = 0; i < init.S.rows(); ++i)
            if (std::find(pruned.begin(), pruned.end(), static_cast<int>(i)) == pruned.end()) keep.push_back(i);
        Mat s(static_cast<Eigen::Index>(keep.size()), init.S.cols());
        for (std::size_t r = 0; r < keep.size(); ++r) s.row(static_cast<Eigen::Index>(r)) = init.S.row(keep[r]);
        Rng rng(0);
        EncoderDecoderModel m = make_model(lebesgue_weights(s, rule.p), cifar10_classes,
                                           ctx.config.real("train.kh_act_power"), rng);
        sources.push_back({"kh_init_cifar10", m, &data});
        sources.push_back({"kh_init_noise", m, &noise});
    }

    // One fit window shared by every source.
    Eigen::Index smallest = data.dim();
    for (const auto& s : sources)
        if (s.model) smallest = std::min(smallest, s.model->hidden_dim());
    const int n_min = static_cast<int>(ctx.config.integer("spectrum.n_min"));
    const long n_max_cfg = ctx.config.integer("spectrum.n_max");
    const int n_max = n_max_cfg > 0 ? static_cast<int>(n_max_cfg) : default_fit_window(smallest).second;
    const std::vector<double> scales = ctx.config.reals("spectrum.scales");
    const ScaleMode mode = parse_scale_mode(ctx.config.get("spectrum.model_scale_mode"));

    Csv summary(dir / "fits.csv", ctx.hash, "source,dim,samples,n_min,n_max,alpha,alpha_err");
    for (const auto& src : sources) {
        const Spectrum spec = src.model ? representation_spectrum(*src.model, *src.data, layer)
                                        : spectrum_from_samples(src.data->inputs, src.data->name);
        const PowerLawFit fit = fit_power_exponent(spec, n_min, n_max);
        std::vector<ScaleRun> runs;
        try {
            runs = src.model ? scale_invariance_probe(*src.model, *src.data, scales, mode, ctx.config.seed(), n_min,
                                                      n_max, layer)
                             : input_crop_probe(*src.data, scales, n_min, n_max);
        } catch (const ContractError& e) {
            ctx.log << "  " << src.name << ": scale probe skipped (" << e.what() << ")\n";
        }
        write_spectrum(ctx, dir, src, spec, fit, runs);
        summary.row(src.name, static_cast<long>(spec.dim), static_cast<long>(spec.samples), fit.n_min, fit.n_max,
                    fit.alpha, fit.alpha_err);
        ctx.log << "  " << src.name << ": alpha " << fit.alpha << " on [" << fit.n_min << ", " << fit.n_max << "]\n";
    }
    ctx.log << "  (" << elapsed(start) << " s)\n";
    finish(ctx, dir, "spectrum", "done", {{"fit_range", {n_min, n_max}}});
}

// --------------------------------------------------------------------- attack

void stage_attack(Context& ctx) {
    for (const auto& [name, m] : trained_models(ctx)) {
        const fs::path dir = ctx.root / "attack" / name;
        if (!should_run(ctx, dir, "attack " + name)) continue;
        const auto start = std::chrono::steady_clock::now();
        const Dataset subset = head(correct_subset(m, ctx.test()), ctx.config.integer("attack.images"));
        json summaries = json::object();
        for (AttackKind kind : ctx.config.attack_kinds()) {
            const AttackConfig ac = ctx.config.attack(kind);
            const AttackReport r = run_attack(m, subset, ac);
            const std::string k = to_string(kind);
            Csv curve(dir / (k + "_curve.csv"), ctx.hash, "epsilon,relative_accuracy");
            for (const auto& p : r.curve) curve.row(p.epsilon, p.relative_accuracy);
            Csv dist(dir / (k + "_distances.csv"), ctx.hash, "image_index,critical_distance,censored_flag");
            for (const auto& d : r.distances) dist.row(d.index, d.distance, d.censored ? 1 : 0);
            const json s = {{"config_hash", ctx.hash},
                            {"model", name},
                            {"attack", k},
                            {"ball", to_string(ac.ball)},
                            {"clip", ac.clip},
                            {"images", subset.count()},
                            {"mean", r.summary.mean},
                            {"median", r.summary.median},
                            {"variance", r.summary.variance},
                            {"fooled", r.summary.fooled},
                            {"censored", r.summary.censored},
                            {"eps_max_scanned", r.curve.back().epsilon}};
            write_json(dir / (k + "_summary.json"), s);
            summaries[k] = s;
            ctx.log << "  " << name << " " << k << ": median distance " << r.summary.median << " (" << r.summary.censored
                    << " censored)\n";
        }
        ctx.log << "  (" << elapsed(start) << " s)\n";
        finish(ctx, dir, "attack");
    }
}

// ------------------------------------------------------------------ landscape

template <typename Grid>
void write_grid(Context& ctx, const fs::path& file, const Grid& grid) {
    std::string cols = "i";
    for (Eigen::Index j = 0; j < grid.cols(); ++j) cols += ",j" + std::to_string(j);
    Csv csv(file, ctx.hash, cols);
    for (Eigen::Index i = 0; i < grid.rows(); ++i) {
        std::string line = std::to_string(i);
        for (Eigen::Index j = 0; j < grid.cols(); ++j) {
            if constexpr (std::is_same_v<typename Grid::Scalar, int>)
                line += "," + std::to_string(grid(i, j));
            else
                line += "," + num(grid(i, j));
        }
        csv.line(line);
    }
}

void stage_landscape(Context& ctx) {
    const auto models = trained_models(ctx);
    if (models.empty()) {
        ctx.log << "  landscape: no trained models\n";
        return;
    }
    const Dataset& test = ctx.test();
    const long plane_seed = ctx.config.integer("landscape.plane_seed");
    const Plane plane = random_plane(test.dim(), static_cast<std::uint64_t>(plane_seed));
    long center = ctx.config.integer("landscape.center");
    if (center < 0) {
        // First image classified correctly by the most models, ideally all of them.
        long best = 0;
        for (Eigen::Index i = 0; i < test.count() && best < static_cast<long>(models.size()); ++i) {
            const Vec x = test.inputs.row(i).transpose();
            long right = 0;
            for (const auto& [name, m] : models) right += predict(m, x).label == test.labels[static_cast<std::size_t>(i)];
            if (right > best) {
                best = right;
                center = static_cast<long>(i);
            }
        }
        if (center < 0) throw EmptySubsetError("landscape: no model classifies any test image correctly");
    }
    if (center >= test.count()) throw ConfigError("landscape.center is outside the test set");
    const Vec x0 = test.inputs.row(center).transpose();
    const int label = test.labels[static_cast<std::size_t>(center)];
    const int resolution = static_cast<int>(ctx.config.integer("landscape.resolution"));
    const JacobianNorm norm = parse_jacobian_norm(ctx.config.get("landscape.norm"));

    for (const auto& [name, m] : models) {
        const fs::path dir = ctx.root / "landscape" / name;
        if (!should_run(ctx, dir, "landscape " + name)) continue;
        double extent = ctx.config.real("landscape.extent");
        if (extent == 0.0) {
            const fs::path summary = ctx.root / "attack" / name / "random_summary.json";
            if (!fs::exists(summary))
                throw Error("landscape: extent is automatic but " + summary.string() + " is missing; run the random attack");
            const json s = read_json(summary);
            if (s.at("fooled").get<int>() == 0) {
                extent = ctx.config.real("attack.eps_max");
                ctx.log << "  warning: random attack never fooled " << name << "; extent = attack.eps_max\n";
            } else {
                extent = ctx.config.real("landscape.extent_factor") * real_or_nan(s.at("median"));
            }
        }
        const Prediction p = predict(m, x0);
        if (p.label != label) ctx.log << "  warning: " << name << " misclassifies the center image\n";
        const LandscapeGrid g = landscape(m, x0, plane, extent, resolution, norm, ctx.config.jobs());
        write_grid(ctx, dir / "decisions.csv", g.decisions);
        write_grid(ctx, dir / "confidences.csv", g.confidences);
        write_grid(ctx, dir / "jacobian_norms.csv", g.jacobian_norms);
        std::vector<double> coords;
        for (int i = 0; i < resolution; ++i) coords.push_back(g.coordinate(i));
        write_json(dir / "header.json", {{"config_hash", ctx.hash},
                                         {"model", name},
                                         {"center_index", center},
                                         {"center_label", label},
                                         {"center_prediction", p.label},
                                         {"plane_seed", plane_seed},
                                         {"extent", extent},
                                         {"resolution", resolution},
                                         {"norm", to_string(norm)},
                                         {"coordinates", coords}});
        ctx.log << "  " << name << ": extent " << extent << ", center image " << center << "\n";
        finish(ctx, dir, "landscape");
    }
}

// --------------------------------------------------------------------- report

// Data rows of a CSV written by Csv (hash comment and header skipped).
std::vector<std::vector<std::string>> read_rows(const fs::path& file) {
    std::ifstream in(file);
    if (!in) throw Error("cannot read " + file.string());
    std::vector<std::vector<std::string>> rows;
    std::string line;
    bool header = true;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        if (header) {
            header = false;
            continue;
        }
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string c;
        while (std::getline(ss, c, ',')) cells.push_back(c);
        rows.push_back(std::move(cells));
    }
    return rows;
}

void stage_report(Context& ctx) {
    const fs::path dir = ctx.root / "report";
    if (!should_run(ctx, dir, "report")) return;
    std::map<std::string, std::string> test_acc;
    if (fs::exists(ctx.root / "eval" / "accuracy.csv"))
        for (const auto& r : read_rows(ctx.root / "eval" / "accuracy.csv")) test_acc[r.at(0)] = r.at(3);
    Csv curves(dir / "relative_accuracy.csv", ctx.hash, "model,attack,epsilon,relative_accuracy");
    Csv robust(dir / "robustness.csv", ctx.hash,
               "model,attack,test_accuracy,median_distance,mean_distance,variance,fooled,censored");
    for (const auto& v : selected_variants(ctx)) {
        const fs::path adir = ctx.root / "attack" / v;
        if (status_of(adir) != "done") continue;
        for (AttackKind kind : ctx.config.attack_kinds()) {
            const std::string k = to_string(kind);
            for (const auto& r : read_rows(adir / (k + "_curve.csv"))) curves.row(v, k, r.at(0), r.at(1));
            const json s = read_json(adir / (k + "_summary.json"));
            robust.row(v, k, test_acc.count(v) ? test_acc[v] : std::string("nan"), real_or_nan(s.at("median")),
                       real_or_nan(s.at("mean")), real_or_nan(s.at("variance")), s.at("fooled").get<int>(),
                       s.at("censored").get<int>());
        }
    }
    finish(ctx, dir, "report");
}

void dispatch(Stage stage, Context& ctx) {
    switch (stage) {
        case Stage::train_unsup: stage_train_unsup(ctx); break;
        case Stage::prune: stage_prune(ctx); break;
        case Stage::train_sup: stage_train_sup(ctx); break;
        case Stage::eval: stage_eval(ctx); break;
        case Stage::spectrum: stage_spectrum(ctx); break;
        case Stage::attack: stage_attack(ctx); break;
        case Stage::landscape: stage_landscape(ctx); break;
        case Stage::report: stage_report(ctx); break;
    }
}

// Dry run: the units of a stage and whether their outputs are current.
void plan_stage(Stage stage, Context& ctx) {
    std::vector<std::pair<std::string, fs::path>> units;
    const auto per_variant = [&](const std::string& sub) {
        for (const auto& v : selected_variants(ctx)) units.emplace_back(to_string(stage) + " " + v, ctx.root / sub / v);
    };
    switch (stage) {
        case Stage::train_unsup: units.emplace_back("train-unsup", ctx.root / "unsup"); break;
        case Stage::prune: units.emplace_back("prune", ctx.root / "prune"); break;
        case Stage::train_sup: per_variant("models"); break;
        case Stage::eval: units.emplace_back("eval", ctx.root / "eval"); break;
        case Stage::spectrum: units.emplace_back("spectrum", ctx.root / "spectrum"); break;
        case Stage::attack: per_variant("attack"); break;
        case Stage::landscape: per_variant("landscape"); break;
        case Stage::report: units.emplace_back("report", ctx.root / "report"); break;
    }
    for (const auto& [label, dir] : units) {
        const auto m = read_marker(dir);
        const bool current = m && m->value("config_hash", "") == ctx.hash && !ctx.options.force;
        ctx.log << (current ? "[skip] " : "[plan] ") << label << "\n";
    }
}

void write_resolved(Context& ctx) {
    fs::create_directories(ctx.root);
    std::ofstream(ctx.root / "config.resolved") << "# config_hash=" << ctx.hash << "\n" << ctx.config.resolved_text();
}

}  // namespace

const std::vector<Stage>& pipeline_stages() {
    static const std::vector<Stage> stages = {Stage::train_unsup, Stage::prune,  Stage::train_sup, Stage::eval,
                                              Stage::spectrum,    Stage::attack, Stage::landscape, Stage::report};
    return stages;
}

void run_stage(Stage stage, const ExperimentConfig& config, const RunOptions& options, std::ostream& log) {
    config.validate();
    Context ctx{config, options, log, config.hash(), config.output_dir(), std::nullopt, std::nullopt};
    if (options.dry_run) {
        plan_stage(stage, ctx);
        return;
    }
    write_resolved(ctx);
    dispatch(stage, ctx);
}

void run_pipeline(const ExperimentConfig& config, const RunOptions& options, std::ostream& log) {
    config.validate();
    Context ctx{config, options, log, config.hash(), config.output_dir(), std::nullopt, std::nullopt};
    log << "config hash " << ctx.hash << ", output " << ctx.root.string() << "\n";
    if (options.dry_run) {
        for (Stage s : pipeline_stages()) plan_stage(s, ctx);
        return;
    }
    write_resolved(ctx);
    for (Stage s : pipeline_stages()) {
        const auto start = std::chrono::steady_clock::now();
        dispatch(s, ctx);
        log << "== " << to_string(s) << " " << elapsed(start) << " s\n";
    }
}

std::string to_string(Stage stage) {
    switch (stage) {
        case Stage::train_unsup: return "train-unsup";
        case Stage::prune: return "prune";
        case Stage::train_sup: return "train-sup";
        case Stage::eval: return "eval";
        case Stage::spectrum: return "spectrum";
        case Stage::attack: return "attack";
        case Stage::landscape: return "landscape";
        case Stage::report: return "report";
    }
    return "";
}

}  // namespace hebb::cli
