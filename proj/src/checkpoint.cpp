#include "nomos/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <map>

namespace nomos::checkpoint {

using nlohmann::ordered_json;

namespace {

constexpr char kMagic[8] = {'N', 'O', 'M', 'O', 'S', 'T', 'N', 'S'};

template <class T>
void put(std::ostream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <class T>
T get(std::istream& is, const std::filesystem::path& file) {
    T v{};
    if (!is.read(reinterpret_cast<char*>(&v), sizeof v)) {
        throw CheckpointError(file.string() + ": truncated tensor file");
    }
    return v;
}

ordered_json read_json(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw CheckpointError("cannot open " + file.string());
    try {
        return ordered_json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError(file.string() + ": " + e.what());
    }
}

}  // namespace

ordered_json to_json(const model::ModelConfig& c) {
    ordered_json j;
    j["num_layers"] = c.num_layers;
    j["hidden_dim"] = c.hidden_dim;
    j["num_heads"] = c.num_heads;
    j["ffn_dim"] = c.ffn_dim;
    j["vocab_size"] = c.vocab_size;
    j["max_positions"] = c.max_positions;
    j["dropout"] = c.dropout;
    j["num_tags"] = c.num_tags;
    j["num_labels"] = c.num_labels;
    j["init_std"] = c.init_std;
    j["layer_norm_eps"] = c.layer_norm_eps;
    j["mixed_precision"] = c.mixed_precision;
    return j;
}

model::ModelConfig model_config_from_json(const ordered_json& j) {
    if (!j.is_object()) throw CheckpointError("model config must be an object");
    model::ModelConfig c;
    for (const auto& [key, value] : j.items()) {
        try {
            if (key == "num_layers") c.num_layers = value.get<std::size_t>();
            else if (key == "hidden_dim") c.hidden_dim = value.get<std::size_t>();
            else if (key == "num_heads") c.num_heads = value.get<std::size_t>();
            else if (key == "ffn_dim") c.ffn_dim = value.get<std::size_t>();
            else if (key == "vocab_size") c.vocab_size = value.get<std::size_t>();
            else if (key == "max_positions") c.max_positions = value.get<std::size_t>();
            else if (key == "dropout") c.dropout = value.get<double>();
            else if (key == "num_tags") c.num_tags = value.get<std::size_t>();
            else if (key == "num_labels") c.num_labels = value.get<std::size_t>();
            else if (key == "init_std") c.init_std = value.get<double>();
            else if (key == "layer_norm_eps") c.layer_norm_eps = value.get<double>();
            else if (key == "mixed_precision") c.mixed_precision = value.get<bool>();
            else throw CheckpointError("unknown model key '" + key + "'");
        } catch (const nlohmann::json::exception&) {
            throw CheckpointError("model key '" + key + "' has the wrong type");
        }
    }
    return c;
}

void write_tensors(const std::filesystem::path& file, const model::ModelParams<float>& params) {
    std::ofstream os(file, std::ios::binary);
    if (!os) throw CheckpointError("cannot write " + file.string());
    std::uint32_t count = 0;
    params.for_each([&](const std::string&, const model::Tensor<float>&) { ++count; });
    os.write(kMagic, sizeof kMagic);
    put<std::uint32_t>(os, kFormatVersion);
    put<std::uint32_t>(os, count);
    params.for_each([&](const std::string& name, const model::Tensor<float>& t) {
        put<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        put<std::uint8_t>(os, 0);
        put<std::uint32_t>(os, static_cast<std::uint32_t>(t.shape.size()));
        for (auto d : t.shape) put<std::uint64_t>(os, d);
        os.write(reinterpret_cast<const char*>(t.ptr()),
                 static_cast<std::streamsize>(t.size() * sizeof(float)));
    });
    if (!os) throw CheckpointError("write failed: " + file.string());
}

void read_tensors(const std::filesystem::path& file, model::ModelParams<float>& params) {
    std::ifstream is(file, std::ios::binary);
    if (!is) throw CheckpointError("cannot open " + file.string());
    char magic[8];
    if (!is.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
        throw CheckpointError(file.string() + ": not a tensor file");
    }
    const auto version = get<std::uint32_t>(is, file);
    if (version != kFormatVersion) {
        throw CheckpointError(file.string() + ": unsupported version " + std::to_string(version));
    }
    std::map<std::string, model::Tensor<float>*> slots;
    params.for_each([&](const std::string& name, model::Tensor<float>& t) { slots[name] = &t; });
    const auto count = get<std::uint32_t>(is, file);
    if (count != slots.size()) {
        throw CheckpointError(file.string() + ": expected " + std::to_string(slots.size()) +
                              " tensors, found " + std::to_string(count));
    }
    for (std::uint32_t i = 0; i < count; ++i) {
        const auto len = get<std::uint32_t>(is, file);
        if (len > 4096) throw CheckpointError(file.string() + ": corrupt tensor name");
        std::string name(len, '\0');
        if (!is.read(name.data(), len)) throw CheckpointError(file.string() + ": truncated");
        auto it = slots.find(name);
        if (it == slots.end()) throw CheckpointError(file.string() + ": unexpected tensor " + name);
        if (get<std::uint8_t>(is, file) != 0) throw CheckpointError(name + ": unsupported dtype");
        const auto ndim = get<std::uint32_t>(is, file);
        std::vector<std::size_t> shape(ndim);
        for (auto& d : shape) d = static_cast<std::size_t>(get<std::uint64_t>(is, file));
        model::Tensor<float>& t = *it->second;
        if (shape != t.shape) throw CheckpointError(name + ": shape does not match the config");
        if (!is.read(reinterpret_cast<char*>(t.ptr()),
                     static_cast<std::streamsize>(t.size() * sizeof(float)))) {
            throw CheckpointError(file.string() + ": truncated data for " + name);
        }
        slots.erase(it);
    }
}

void save(const std::filesystem::path& dir, const model::Model<float>& model,
          const Descriptor& d) {
    std::filesystem::create_directories(dir);
    ordered_json j;
    j["format_version"] = kFormatVersion;
    j["dtype"] = "float32";
    j["task"] = d.task;
    j["tokenizer_fingerprint"] = d.tokenizer_fingerprint;
    j["model"] = to_json(model.config);
    j["optimizer"] = d.optimizer;
    j["extra"] = d.extra;
    std::ofstream out(dir / "config.json");
    if (!out) throw CheckpointError("cannot write " + (dir / "config.json").string());
    out << j.dump(2) << '\n';
    out.close();
    write_tensors(dir / "tensors.bin", model.params);
}

Loaded load(const std::filesystem::path& dir) {
    const ordered_json j = read_json(dir / "config.json");
    if (j.value("format_version", 0u) != kFormatVersion) {
        throw CheckpointError((dir / "config.json").string() + ": unsupported format_version");
    }
    if (j.value("dtype", std::string()) != "float32") {
        throw CheckpointError((dir / "config.json").string() + ": unsupported dtype");
    }
    Loaded out;
    out.descriptor.config = model_config_from_json(j.at("model"));
    out.descriptor.tokenizer_fingerprint = j.value("tokenizer_fingerprint", std::string());
    out.descriptor.task = j.value("task", std::string("mlm"));
    out.descriptor.optimizer = j.value("optimizer", ordered_json::object());
    out.descriptor.extra = j.value("extra", ordered_json::object());
    try {
        out.model.config = out.descriptor.config;
        out.model.params = model::ModelParams<float>::zeros(out.model.config);
    } catch (const model::ModelError& e) {
        throw CheckpointError((dir / "config.json").string() + ": " + e.what());
    }
    read_tensors(dir / "tensors.bin", out.model.params);
    return out;
}

}  // namespace nomos::checkpoint
