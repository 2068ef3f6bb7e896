#include "cli.hpp"
#include "hebb/landscape.hpp"
#include "hebb/spectra.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace hebb::cli {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

const std::set<std::string> location_keys = {"output_dir", "data_dir", "jobs"};

}  // namespace

const std::vector<ConfigKey>& config_schema() {
    static const std::vector<ConfigKey> keys = {
        {"output_dir", "runs/default", "artifact directory"},
        {"data_dir", "", "directory with the CIFAR-10 binary batches"},
        {"seed", "1", "global seed"},
        {"jobs", "1", "worker threads per stage"},
        {"data.train_count", "0", "first N training images (0: all)"},
        {"data.test_count", "0", "first N test images (0: all)"},
        {"rule.p", "2", "Lebesgue exponent"},
        {"rule.k", "2", "rank of the inhibited unit"},
        {"rule.delta", "0.4", "inhibition strength"},
        {"rule.eta", "0.02", "initial learning rate"},
        {"rule.radius", "1", "target p-norm^p of each row"},
        {"rule.epochs", "1000", "unsupervised epochs"},
        {"rule.batch_size", "100", "unsupervised minibatch"},
        {"rule.hidden_units", "2000", "hidden units before pruning"},
        {"rule.scaling", "max_abs", "update scaling: max_abs or mean"},
        {"rule.init_std", "1", "std of initial synapses (0: 1/sqrt(dim))"},
        {"convergence.tolerance", "0.01", "row norm tolerance"},
        {"convergence.min_fraction", "0.1", "required fraction of converged rows"},
        {"prune.alpha", "0.01", "LRT significance level"},
        {"prune.threshold", "auto", "variance threshold, or auto"},
        {"train.variants", "kh,bp,l2,jreg,specreg", "supervised model variants"},
        {"train.epochs", "30", "supervised epochs"},
        {"train.batch_size", "1000", "supervised minibatch"},
        {"train.lr", "0.001", "Adam learning rate"},
        {"train.beta1", "0.9", "Adam beta1"},
        {"train.beta2", "0.999", "Adam beta2"},
        {"train.adam_eps", "1e-8", "Adam epsilon"},
        {"train.kh_act_power", "4.5", "activation power of the hybrid model"},
        {"train.kh_normalize_features", "true", "train the hybrid decoder on RMS-normalised features"},
        {"train.bp_act_power", "1", "activation power of the end-to-end models"},
        {"train.bp_hidden", "0", "hidden units of the end-to-end models (0: rule.hidden_units)"},
        {"train.l2_coeff", "1e-3", "L2 coefficient"},
        {"train.jacobian_coeff", "1e-2", "Jacobian penalty coefficient"},
        {"train.spectral_coeff", "1e-2", "spectral penalty coefficient"},
        {"train.n_proj", "3", "projections of the Jacobian estimator"},
        {"train.spectral_alpha", "1", "target exponent of the spectral penalty"},
        {"train.spectral_cutoff", "0", "spectral penalty cutoff (0: automatic)"},
        {"spectrum.n_min", "11", "first index of the fit window"},
        {"spectrum.n_max", "0", "last index of the fit window (0: min(500, smallest dim / 2))"},
        {"spectrum.data_count", "10000", "test images used for spectra"},
        {"spectrum.noise_count", "10000", "Gaussian noise inputs used for spectra"},
        {"spectrum.include_raw", "true", "also fit the raw pixel and raw noise spectra"},
        {"spectrum.scales", "1,0.5,0.25", "scale probe factors"},
        {"spectrum.model_scale_mode", "subsample_hidden", "scale probe of representations"},
        {"spectrum.layer", "pre", "pre (h) or post (ReLU(h)^n)"},
        {"attack.kinds", "random,fgsm,pgd", "attacks to run"},
        {"attack.images", "1000", "first N correctly classified test images"},
        {"attack.eps_min", "1e-3", "smallest epsilon"},
        {"attack.eps_max", "1e2", "largest epsilon"},
        {"attack.eps_count", "50", "log-spaced epsilon count"},
        {"attack.pgd_steps", "10", "PGD iterations"},
        {"attack.pgd_step_fraction", "0.1", "PGD step as a fraction of epsilon"},
        {"attack.ball", "inf", "PGD ball: inf or l2"},
        {"attack.clip", "false", "clip perturbed inputs to [0, 1]"},
        {"attack.random_draws", "5", "random directions per image"},
        {"attack.extend", "true", "extend the grid until accuracy saturates"},
        {"attack.refine", "false", "bisect critical distances"},
        {"attack.refine_iterations", "12", "bisection steps"},
        {"landscape.resolution", "101", "grid points per axis"},
        {"landscape.extent", "0", "half-width of the plane (0: factor x median random critical distance)"},
        {"landscape.extent_factor", "10", "extent multiple of the median random critical distance"},
        {"landscape.plane_seed", "7", "seed of the plane shared by all models"},
        {"landscape.center", "-1", "test index of the center image (-1: first image every model gets right)"},
        {"landscape.norm", "frobenius", "frobenius or spectral"},
    };
    return keys;
}

ExperimentConfig::ExperimentConfig() {
    for (const auto& k : config_schema()) values_[k.name] = k.default_value;
}

ExperimentConfig ExperimentConfig::parse(const std::string& text, const std::string& origin) {
    ExperimentConfig c;
    std::istringstream in(text);
    std::string line;
    int number = 0;
    while (std::getline(in, line)) {
        ++number;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos)
            throw ConfigError(origin + ":" + std::to_string(number) + ": expected key = value");
        try {
            c.set(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
        } catch (const ConfigError& e) {
            throw ConfigError(origin + ":" + std::to_string(number) + ": " + e.what());
        }
    }
    return c;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw ConfigError("cannot read config " + file.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str(), file.string());
}

void ExperimentConfig::set(const std::string& key, const std::string& value) {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
    it->second = value;
}

void ExperimentConfig::apply_override(const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) throw ConfigError("override '" + assignment + "' is not key=value");
    set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

const std::string& ExperimentConfig::get(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
    return it->second;
}

double ExperimentConfig::real(const std::string& key) const {
    const std::string& v = get(key);
    double out = 0.0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size())
        throw ConfigError(key + ": '" + v + "' is not a number");
    return out;
}

long ExperimentConfig::integer(const std::string& key) const {
    const std::string& v = get(key);
    long out = 0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size())
        throw ConfigError(key + ": '" + v + "' is not an integer");
    return out;
}

bool ExperimentConfig::flag(const std::string& key) const {
    const std::string& v = get(key);
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError(key + ": '" + v + "' is not a boolean");
}

std::vector<std::string> ExperimentConfig::list(const std::string& key) const {
    std::vector<std::string> out;
    std::stringstream ss(get(key));
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

std::vector<double> ExperimentConfig::reals(const std::string& key) const {
    std::vector<double> out;
    for (const auto& item : list(key)) {
        double v = 0.0;
        const auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
        if (ec != std::errc() || ptr != item.data() + item.size())
            throw ConfigError(key + ": '" + item + "' is not a number");
        out.push_back(v);
    }
    return out;
}

std::string ExperimentConfig::resolved_text() const {
    std::string out;
    for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
    return out;
}

std::string ExperimentConfig::hash() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& [k, v] : values_) {
        if (location_keys.count(k)) continue;
        for (char c : k + "=" + v + "\n") {
            h ^= static_cast<unsigned char>(c);
            h *= 0x100000001b3ULL;
        }
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::uint64_t ExperimentConfig::seed() const {
    const long s = integer("seed");
    if (s < 0) throw ConfigError("seed must be >= 0");
    return static_cast<std::uint64_t>(s);
}

int ExperimentConfig::jobs() const {
    const long j = integer("jobs");
    if (j < 1) throw ConfigError("jobs must be >= 1");
    return static_cast<int>(j);
}

RuleConfig ExperimentConfig::rule() const {
    RuleConfig r;
    r.p = real("rule.p");
    r.k = static_cast<int>(integer("rule.k"));
    r.delta = real("rule.delta");
    r.eta = real("rule.eta");
    r.radius = real("rule.radius");
    r.epochs = static_cast<int>(integer("rule.epochs"));
    r.batch_size = static_cast<int>(integer("rule.batch_size"));
    r.hidden_units = static_cast<int>(integer("rule.hidden_units"));
    const std::string& scaling = get("rule.scaling");
    if (scaling == "max_abs") r.scaling = UpdateScaling::max_abs;
    else if (scaling == "mean") r.scaling = UpdateScaling::mean;
    else throw ConfigError("rule.scaling: unknown value '" + scaling + "'");
    r.init_std = real("rule.init_std");
    r.seed = seed();
    try {
        r.validate();
    } catch (const ContractError& e) {
        throw ConfigError(std::string("rule: ") + e.what());
    }
    return r;
}

std::string variant_for(TrainMode mode, Regularizer reg) {
    if (mode == TrainMode::decoder_only) {
        if (reg != Regularizer::none) throw ConfigError("the hybrid (decoder-only) variant takes no regularizer");
        return "kh";
    }
    switch (reg) {
        case Regularizer::none: return "bp";
        case Regularizer::l2: return "l2";
        case Regularizer::jacobian: return "jreg";
        case Regularizer::spectral: return "specreg";
    }
    return "bp";
}

TrainConfig ExperimentConfig::train(const std::string& variant) const {
    TrainConfig t;
    t.batch_size = static_cast<int>(integer("train.batch_size"));
    t.epochs = static_cast<int>(integer("train.epochs"));
    t.adam.lr = real("train.lr");
    t.adam.beta1 = real("train.beta1");
    t.adam.beta2 = real("train.beta2");
    t.adam.eps = real("train.adam_eps");
    t.n_proj = static_cast<int>(integer("train.n_proj"));
    t.spectral_target_alpha = real("train.spectral_alpha");
    t.spectral_cutoff = static_cast<int>(integer("train.spectral_cutoff"));
    const auto pos = std::find(variant_names.begin(), variant_names.end(), variant);
    if (pos == variant_names.end()) throw ConfigError("unknown model variant '" + variant + "'");
    t.seed = seed() * 16 + static_cast<std::uint64_t>(pos - variant_names.begin());
    if (variant == "kh") {
        t.mode = TrainMode::decoder_only;
        t.normalize_features = flag("train.kh_normalize_features");
    } else {
        t.mode = TrainMode::end_to_end;
        if (variant == "l2") {
            t.reg = Regularizer::l2;
            t.reg_coefficient = real("train.l2_coeff");
        } else if (variant == "jreg") {
            t.reg = Regularizer::jacobian;
            t.reg_coefficient = real("train.jacobian_coeff");
        } else if (variant == "specreg") {
            t.reg = Regularizer::spectral;
            t.reg_coefficient = real("train.spectral_coeff");
        }
    }
    try {
        t.validate();
    } catch (const ContractError& e) {
        throw ConfigError(std::string("train: ") + e.what());
    }
    return t;
}

AttackConfig ExperimentConfig::attack(AttackKind kind) const {
    AttackConfig a;
    a.kind = kind;
    a.grid.min = real("attack.eps_min");
    a.grid.max = real("attack.eps_max");
    a.grid.count = static_cast<int>(integer("attack.eps_count"));
    a.pgd_steps = static_cast<int>(integer("attack.pgd_steps"));
    a.pgd_step_fraction = real("attack.pgd_step_fraction");
    a.ball = parse_ball_norm(get("attack.ball"));
    a.clip = flag("attack.clip");
    a.random_draws = static_cast<int>(integer("attack.random_draws"));
    a.extend_until_saturated = flag("attack.extend");
    a.refine = flag("attack.refine");
    a.refine_iterations = static_cast<int>(integer("attack.refine_iterations"));
    a.seed = seed() * 8 + static_cast<std::uint64_t>(kind);
    a.jobs = jobs();
    try {
        a.validate();
    } catch (const ContractError& e) {
        throw ConfigError(std::string("attack: ") + e.what());
    }
    return a;
}

std::vector<std::string> ExperimentConfig::variants() const {
    std::vector<std::string> out = list("train.variants");
    for (const auto& v : out)
        if (std::find(variant_names.begin(), variant_names.end(), v) == variant_names.end())
            throw ConfigError("train.variants: unknown variant '" + v + "'");
    return out;
}

std::vector<AttackKind> ExperimentConfig::attack_kinds() const {
    std::vector<AttackKind> out;
    for (const auto& k : list("attack.kinds")) out.push_back(parse_attack_kind(k));
    return out;
}

void ExperimentConfig::validate() const {
    seed();
    jobs();
    if (integer("data.train_count") < 0 || integer("data.test_count") < 0)
        throw ConfigError("data counts must be >= 0");
    rule();
    real("convergence.tolerance");
    real("convergence.min_fraction");
    const double alpha = real("prune.alpha");
    if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("prune.alpha must be in (0, 1)");
    if (get("prune.threshold") != "auto" && !(real("prune.threshold") > 0.0))
        throw ConfigError("prune.threshold must be auto or positive");
    for (const auto& v : variants()) train(v);
    if (!(real("train.kh_act_power") >= 1.0) || !(real("train.bp_act_power") >= 1.0))
        throw ConfigError("activation powers must be >= 1");
    if (integer("train.bp_hidden") < 0) throw ConfigError("train.bp_hidden must be >= 0");
    if (integer("spectrum.n_min") < 1 || integer("spectrum.n_max") < 0) throw ConfigError("bad spectrum window");
    if (integer("spectrum.data_count") < 2 || integer("spectrum.noise_count") < 2)
        throw ConfigError("spectra need at least 2 samples");
    for (double s : reals("spectrum.scales"))
        if (!(s > 0.0 && s <= 1.0)) throw ConfigError("spectrum.scales must lie in (0, 1]");
    flag("spectrum.include_raw");
    parse_scale_mode(get("spectrum.model_scale_mode"));
    parse_layer(get("spectrum.layer"));
    for (AttackKind k : attack_kinds()) attack(k);
    if (integer("attack.images") < 1) throw ConfigError("attack.images must be >= 1");
    if (integer("landscape.resolution") < 1) throw ConfigError("landscape.resolution must be >= 1");
    if (!(real("landscape.extent") >= 0.0) || !(real("landscape.extent_factor") > 0.0))
        throw ConfigError("bad landscape extent");
    if (integer("landscape.plane_seed") < 0) throw ConfigError("landscape.plane_seed must be >= 0");
    integer("landscape.center");
    parse_jacobian_norm(get("landscape.norm"));
}

}  // namespace hebb::cli
