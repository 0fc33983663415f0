#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "nomos/corpus.hpp"
#include "nomos/masking.hpp"
#include "nomos/model.hpp"
#include "nomos/textnorm.hpp"
#include "nomos/training.hpp"

namespace nomos::config {

/// Parse or validation failure; `key` is the dotted path of the offending
/// entry when there is one.
class ConfigError : public std::runtime_error {
public:
    ConfigError(const std::string& key, const std::string& message)
        : std::runtime_error(key.empty() ? message : key + ": " + message), key_(key) {}
    const std::string& key() const noexcept { return key_; }

private:
    std::string key_;
};

struct DataConfig {
    std::filesystem::path manifest;
    std::filesystem::path ner;
    std::filesystem::path classification;
    std::filesystem::path hierarchy;
    corpus::SplitSpec split;
    bool repair_iob = true;
    corpus::EntityTypeSet entity_types;
};

struct PretrainSection {
    std::optional<std::string> preset;
    training::PretrainConfig config;
    std::size_t max_len = 64;
};

struct FinetuneSection {
    training::Task task = training::Task::Ner;
    training::FinetuneConfig config;
    std::size_t max_len = 64;
    std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
    std::string model_name = "nomos-tiny";
};

struct RunConfig {
    std::uint64_t seed = 0;
    std::filesystem::path output_dir;  // empty: use the default root
    textnorm::NormConfig normalization;
    double corruption_threshold = textnorm::kDefaultCorruptionThreshold;
    std::size_t vocab_size = 500;
    model::ModelConfig model;  // vocab_size is filled from the tokenizer
    masking::MaskingPolicy masking;
    PretrainSection pretrain;
    FinetuneSection finetune;
    training::GridSpec grid;
    DataConfig data;

    RunConfig();
    /// Checks every section; throws ConfigError naming the key.
    void validate() const;
};

/// Strict parse: unknown keys and wrong types raise ConfigError. Relative
/// paths resolve against `base_dir`. `seed` propagates to the pretrain and
/// finetune sections unless they set their own.
RunConfig parse_run_config(const nlohmann::ordered_json& j, const std::filesystem::path& base_dir);
RunConfig load_run_config(const std::filesystem::path& file);

/// Every field with its resolved value (absolute paths).
nlohmann::ordered_json to_json(const RunConfig& config);

}  // namespace nomos::config
