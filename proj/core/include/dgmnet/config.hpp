#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dgmnet/architectures.hpp"
#include "dgmnet/losses.hpp"
#include "dgmnet/phantoms.hpp"
#include "dgmnet/preprocess.hpp"
#include "dgmnet/shape_generator.hpp"
#include "dgmnet/trainer.hpp"

namespace dgmnet {

struct PathsConfig {
    std::string data = "data";              // dataset root (manifest.csv inside)
    std::string generator;                  // generator checkpoint directory
    std::string out = "runs";
};

/// Everything a CLI command may read. Desk-scale defaults.
struct ExperimentConfig {
    PhantomConfig phantom;
    PreprocessConfig preprocess;
    ModelSpec model;
    GeneratorSpec generator;
    GeneratorTrainConfig generator_train;
    TrainConfig train;
    PathsConfig paths;

    ExperimentConfig();
    void validate() const;
};

/// Commands that read a key (bit flags), used to build per-command help.
enum CommandMask : unsigned {
    kCmdGenerateData = 1u << 0,
    kCmdTrainGenerator = 1u << 1,
    kCmdTrain = 1u << 2,
    kCmdEvaluate = 1u << 3,
    kCmdAblate = 1u << 4,
};

struct ConfigKeyInfo {
    std::string key;
    std::string description;
    unsigned commands = 0;
};

const std::vector<ConfigKeyInfo>& config_keys();

/// Parse `section.key = value` lines over the defaults. `#` starts a comment.
/// Unknown keys and malformed values raise ConfigError naming the key.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Every key with its current value, one per line, in table order.
std::string serialize_config(const ExperimentConfig& config);

/// Apply one assignment (same rules as the file format).
void set_config_value(ExperimentConfig& config, const std::string& key, const std::string& value);

}  // namespace dgmnet
