#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "modforge/agm.hpp"
#include "modforge/data.hpp"
#include "modforge/model.hpp"

namespace modforge {

// Where the experiment's dataset comes from: a named builtin benchmark, a
// .mmds file, or an inline synthetic spec.
struct DatasetSource {
    enum class Kind { Builtin, File, Synthetic } kind = Kind::Builtin;
    std::string builtin_name = "imbalanced";
    std::uint64_t builtin_seed = 16;
    std::string path;
    SyntheticSpec synthetic;

    Dataset load() const;
    std::string describe() const;
};

struct ModelConfig {
    FusionKind fusion = FusionKind::LateSum;
    // Hidden widths applied to every modality's encoder unless overridden.
    std::vector<std::size_t> encoder_hidden = {32};
    // Optional per-modality override, keyed by modality name.
    std::vector<std::pair<std::string, std::vector<std::size_t>>> encoder_hidden_overrides;
    std::size_t fusion_hidden_dim = 16;
    std::size_t maxout_pieces = 2;

    std::vector<ModalitySpec> resolve(const Dataset& ds) const;
    FusionSpec fusion_spec() const;
};

struct ExperimentConfig {
    DatasetSource dataset;
    ModelConfig model;
    TrainMethod method = TrainMethod::JointTrain;
    double alpha = 1.0;
    std::size_t epochs = 30;
    std::size_t batch_size = 64;
    SgdConfig sgd;
    double lambda = 120.0;  // probe regularization
    std::vector<std::uint64_t> seeds = {1};
    std::string output_dir;
    std::size_t probe_every = 0;  // per-epoch probe cadence; 0 = final probe only
    SplitFractions splits;
    std::uint64_t split_seed = 1;
    bool save_checkpoints = true;

    void validate() const;
};

// Parses and schema-validates a config JSON text. Unknown keys, wrong types
// and bad values raise ConfigError naming the offending key.
ExperimentConfig parse_experiment_config(const std::string& json_text);
ExperimentConfig load_experiment_config(const std::string& path);

// Standalone synthetic dataset spec (the `generate --spec` file format; same
// schema as the config's dataset.synthetic block).
SyntheticSpec parse_synthetic_spec(const std::string& json_text);
SyntheticSpec load_synthetic_spec(const std::string& path);

// JSON echo of the config (used in manifests; stable key order).
std::string experiment_config_to_json(const ExperimentConfig& cfg);

// Parses the MODFORGE_SEED environment variable value: a comma-separated list
// of unsigned seeds that replaces cfg.seeds.
std::vector<std::uint64_t> parse_seed_list(const std::string& text);

}  // namespace modforge
