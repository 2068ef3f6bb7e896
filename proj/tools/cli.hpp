#pragma once

#include "hebb/localrule.hpp"
#include "hebb/robustness.hpp"
#include "hebb/train.hpp"

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace hebb::cli {

struct ConfigKey {
    std::string name;
    std::string default_value;
    std::string help;
};

/// Every accepted key with its default.
const std::vector<ConfigKey>& config_schema();

/// Flat `key = value` document. Lines starting with '#' are comments; lists are comma separated.
class ExperimentConfig {
public:
    ExperimentConfig();

    static ExperimentConfig parse(const std::string& text, const std::string& origin = "<text>");
    static ExperimentConfig load(const std::filesystem::path& file);

    /// Throws ConfigError for unknown keys.
    void set(const std::string& key, const std::string& value);
    /// "key=value".
    void apply_override(const std::string& assignment);
    const std::string& get(const std::string& key) const;

    double real(const std::string& key) const;
    long integer(const std::string& key) const;
    bool flag(const std::string& key) const;
    std::vector<std::string> list(const std::string& key) const;
    std::vector<double> reals(const std::string& key) const;

    /// All keys, sorted, defaults filled in.
    std::string resolved_text() const;
    /// FNV-1a 64 over the resolved text without the location keys (output_dir, data_dir, jobs).
    std::string hash() const;

    /// Parses every typed value; throws ConfigError on the first bad one.
    void validate() const;

    std::filesystem::path output_dir() const { return get("output_dir"); }
    std::uint64_t seed() const;
    int jobs() const;

    RuleConfig rule() const;
    TrainConfig train(const std::string& variant) const;
    AttackConfig attack(AttackKind kind) const;
    std::vector<std::string> variants() const;
    std::vector<AttackKind> attack_kinds() const;

private:
    std::map<std::string, std::string> values_;
};

inline const std::vector<std::string> variant_names = {"kh", "bp", "l2", "jreg", "specreg"};

/// Variant implied by a (mode, regularizer) pair; throws ConfigError for unsupported pairs.
std::string variant_for(TrainMode mode, Regularizer reg);

enum class Stage { train_unsup, prune, train_sup, eval, spectrum, attack, landscape, report };

const std::vector<Stage>& pipeline_stages();
std::string to_string(Stage stage);

struct RunOptions {
    bool force = false;
    bool dry_run = false;
    std::vector<std::string> only_variants;  // empty: all configured variants
    std::vector<double> reg_grid;           // train-sup: extra coefficients for regularised variants
};

/// Runs one stage, skipping it when its outputs exist for the same config hash (unless forced).
void run_stage(Stage stage, const ExperimentConfig& config, const RunOptions& options, std::ostream& log);

/// Runs every stage in order.
void run_pipeline(const ExperimentConfig& config, const RunOptions& options, std::ostream& log);

/// Entry point of the `hebbctl` command; returns the process exit code.
int run(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace hebb::cli
