#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>

#include "json.hpp"
#include "nomos/model.hpp"

namespace nomos::checkpoint {

inline constexpr std::uint32_t kFormatVersion = 1;

class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Descriptor stored next to the tensors in config.json.
struct Descriptor {
    model::ModelConfig config;
    std::string tokenizer_fingerprint;
    std::string task = "mlm";       // mlm | ner | volume | chapter | subject
    nlohmann::ordered_json optimizer = nlohmann::ordered_json::object();
    nlohmann::ordered_json extra = nlohmann::ordered_json::object();
};

nlohmann::ordered_json to_json(const model::ModelConfig& config);
/// Strict: unknown keys throw CheckpointError naming the key. Missing keys
/// keep their defaults.
model::ModelConfig model_config_from_json(const nlohmann::ordered_json& j);

/// Writes <dir>/config.json and <dir>/tensors.bin, creating `dir`.
void save(const std::filesystem::path& dir, const model::Model<float>& model,
          const Descriptor& descriptor);

struct Loaded {
    model::Model<float> model;
    Descriptor descriptor;
};

Loaded load(const std::filesystem::path& dir);

/// Tensor container alone: "NOMOSTNS", u32 version, u32 count, then per
/// tensor u32 name length, name bytes, u8 dtype (0 = f32), u32 ndim,
/// u64 dims, raw little-endian data.
void write_tensors(const std::filesystem::path& file, const model::ModelParams<float>& params);
/// Fills `params` (already shaped) by name; any missing, extra or misshaped
/// tensor throws CheckpointError.
void read_tensors(const std::filesystem::path& file, model::ModelParams<float>& params);

}  // namespace nomos::checkpoint
