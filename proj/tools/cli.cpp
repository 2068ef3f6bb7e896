#include "cli.hpp"

#include <CLI11.hpp>

#include <ostream>
#include <sstream>

namespace hebb::cli {

namespace {

struct Common {
    std::string config_file;
    std::vector<std::string> overrides;
    std::string data_dir;
    std::string output_dir;
    int jobs = 0;
    bool force = false;
    bool dry_run = false;
};

// Subcommand flags translated to config keys; applied after the file and before --set.
using Mapped = std::vector<std::pair<std::string, std::string>>;

void add_common(CLI::App* cmd, Common& c) {
    cmd->add_option("-c,--config", c.config_file, "config file (key = value)");
    cmd->add_option("--set", c.overrides, "override, key=value (repeatable)");
    cmd->add_option("--data-dir", c.data_dir, "CIFAR-10 batch directory");
    cmd->add_option("-o,--output-dir", c.output_dir, "artifact directory");
    cmd->add_option("-j,--jobs", c.jobs, "worker threads")->check(CLI::PositiveNumber);
    cmd->add_flag("--force", c.force, "recompute stages whose outputs exist");
    cmd->add_flag("--dry-run", c.dry_run, "print the stage plan only");
}

template <typename T>
void map_option(CLI::App* cmd, const std::string& flag, const std::string& key, Mapped& mapped, const std::string& help) {
    cmd->add_option_function<T>(
        flag, [&mapped, key](const T& v) {
            std::ostringstream os;
            os.precision(17);
            os << v;
            mapped.emplace_back(key, os.str());
        },
        help);
}

void map_list(CLI::App* cmd, const std::string& flag, const std::string& key, Mapped& mapped, const std::string& help) {
    cmd->add_option_function<std::vector<std::string>>(
           flag,
           [&mapped, key](const std::vector<std::string>& v) {
               std::string joined;
               for (const auto& s : v) joined += (joined.empty() ? "" : ",") + s;
               mapped.emplace_back(key, joined);
           },
           help)
        ->delimiter(',');
}

ExperimentConfig build_config(const Common& c, const Mapped& mapped) {
    ExperimentConfig cfg = c.config_file.empty() ? ExperimentConfig() : ExperimentConfig::load(c.config_file);
    for (const auto& [k, v] : mapped) cfg.set(k, v);
    for (const auto& o : c.overrides) cfg.apply_override(o);
    if (!c.data_dir.empty()) cfg.set("data_dir", c.data_dir);
    if (!c.output_dir.empty()) cfg.set("output_dir", c.output_dir);
    if (c.jobs > 0) cfg.set("jobs", std::to_string(c.jobs));
    cfg.validate();
    return cfg;
}

}  // namespace

int run(int argc, char** argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Hebbian encoder experiments: local-rule training, pruning, decoding, spectra and robustness"};
    app.require_subcommand(1);

    struct Command {
        CLI::App* app;
        std::optional<Stage> stage;
        Common common;
        Mapped mapped;
    };
    std::vector<std::unique_ptr<Command>> commands;
    const auto add = [&](const std::string& name, const std::string& help, std::optional<Stage> stage) -> Command& {
        auto cmd = std::make_unique<Command>();
        cmd->app = app.add_subcommand(name, help);
        cmd->stage = stage;
        add_common(cmd->app, cmd->common);
        commands.push_back(std::move(cmd));
        return *commands.back();
    };

    std::vector<std::string> variants;
    std::string mode_text, reg_text;
    std::vector<double> reg_grid;
    double reg_coeff = -1.0;

    add("train-unsup", "train the encoder with the local rule and check convergence", Stage::train_unsup);
    Command& prune_cmd = add("prune", "fit the variance mixture and remove high-variance units", Stage::prune);
    map_option<double>(prune_cmd.app, "--threshold", "prune.threshold", prune_cmd.mapped, "manual variance threshold");
    map_option<double>(prune_cmd.app, "--alpha", "prune.alpha", prune_cmd.mapped, "LRT significance level");

    Command& sup = add("train-sup", "train the supervised model variants", Stage::train_sup);
    sup.app->add_option("--variant", variants, "kh, bp, l2, jreg or specreg (default: train.variants)")->delimiter(',');
    sup.app->add_option("--mode", mode_text, "decoder_only or end_to_end (with --reg selects a variant)");
    sup.app->add_option("--reg", reg_text, "none, l2, jacobian or spectral");
    sup.app->add_option("--reg-coeff", reg_coeff, "coefficient of the selected regularizer");
    sup.app->add_option("--reg-grid", reg_grid, "extra coefficients, one model each")->delimiter(',');
    map_option<int>(sup.app, "--epochs", "train.epochs", sup.mapped, "supervised epochs");
    map_option<long>(sup.app, "--seed", "seed", sup.mapped, "global seed");

    add("eval", "report train and test accuracy of every trained model", Stage::eval);

    Command& spec = add("spectrum", "covariance spectra and power-law fits", Stage::spectrum);
    map_option<int>(spec.app, "--n-min", "spectrum.n_min", spec.mapped, "first fit index");
    map_option<int>(spec.app, "--n-max", "spectrum.n_max", spec.mapped, "last fit index");
    map_option<std::string>(spec.app, "--layer", "spectrum.layer", spec.mapped, "pre or post");

    Command& atk = add("attack", "relative-accuracy curves and critical distances", Stage::attack);
    map_list(atk.app, "--kind", "attack.kinds", atk.mapped, "random, fgsm, pgd");
    map_option<double>(atk.app, "--eps-min", "attack.eps_min", atk.mapped, "smallest epsilon");
    map_option<double>(atk.app, "--eps-max", "attack.eps_max", atk.mapped, "largest epsilon");
    map_option<int>(atk.app, "--eps-count", "attack.eps_count", atk.mapped, "epsilon count");
    map_option<std::string>(atk.app, "--ball", "attack.ball", atk.mapped, "PGD ball: inf or l2");
    map_option<std::string>(atk.app, "--clip", "attack.clip", atk.mapped, "clip to [0, 1]: true or false");
    map_option<std::string>(atk.app, "--refine", "attack.refine", atk.mapped, "bisect distances: true or false");
    map_option<int>(atk.app, "--images", "attack.images", atk.mapped, "images per model");

    Command& land = add("landscape", "decision, confidence and Jacobian-norm grids on a random plane", Stage::landscape);
    map_option<long>(land.app, "--plane-seed", "landscape.plane_seed", land.mapped, "seed of the shared plane");
    map_option<double>(land.app, "--extent", "landscape.extent", land.mapped, "half-width (0: automatic)");
    map_option<int>(land.app, "--resolution", "landscape.resolution", land.mapped, "grid points per axis");
    map_option<std::string>(land.app, "--norm", "landscape.norm", land.mapped, "frobenius or spectral");

    add("report", "aggregate relative-accuracy curves and robustness tables", Stage::report);
    Command& pipe = add("pipeline", "run every stage in order", std::nullopt);

    bool show_schema = false;
    Common cfg_common;
    CLI::App* cfg_cmd = app.add_subcommand("config", "print the resolved config and its hash");
    add_common(cfg_cmd, cfg_common);
    cfg_cmd->add_flag("--schema", show_schema, "list every key with its default");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {
            out << app.help(e.get_name() == "CallForHelp" ? "" : e.get_name());
            return 0;
        }
        err << "error: " << e.what() << "\n";
        return 2;
    }

    try {
        if (cfg_cmd->parsed()) {
            if (show_schema) {
                for (const auto& k : config_schema()) out << k.name << " = " << k.default_value << "    # " << k.help << "\n";
                return 0;
            }
            const ExperimentConfig cfg = build_config(cfg_common, {});
            out << "# config_hash=" << cfg.hash() << "\n" << cfg.resolved_text();
            return 0;
        }
        for (auto& cmd : commands) {
            if (!cmd->app->parsed()) continue;
            Mapped mapped = cmd->mapped;
            RunOptions opts;
            opts.force = cmd->common.force;
            opts.dry_run = cmd->common.dry_run;
            if (cmd.get() == &sup) {
                opts.only_variants = variants;
                if (!mode_text.empty() || !reg_text.empty()) {
                    const std::string v = variant_for(parse_train_mode(mode_text.empty() ? "end_to_end" : mode_text),
                                                      parse_regularizer(reg_text.empty() ? "none" : reg_text));
                    opts.only_variants = {v};
                }
                if (reg_coeff >= 0.0) {
                    if (opts.only_variants.size() != 1)
                        throw ConfigError("--reg-coeff needs exactly one regularised variant (--variant or --reg)");
                    const std::string& v = opts.only_variants.front();
                    const std::string key = v == "l2" ? "train.l2_coeff"
                                            : v == "jreg" ? "train.jacobian_coeff"
                                            : v == "specreg" ? "train.spectral_coeff"
                                                             : "";
                    if (key.empty()) throw ConfigError("--reg-coeff: variant '" + v + "' has no regularizer");
                    std::ostringstream os;
                    os.precision(17);
                    os << reg_coeff;
                    mapped.emplace_back(key, os.str());
                }
                opts.reg_grid = reg_grid;
            }
            const ExperimentConfig cfg = build_config(cmd->common, mapped);
            if (cmd.get() == &pipe)
                run_pipeline(cfg, opts, out);
            else
                run_stage(*cmd->stage, cfg, opts, out);
            return 0;
        }
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

}  // namespace hebb::cli
