#include "nomos/config.hpp"

#include <cstdint>
#include <fstream>
#include <set>

#include "nomos/checkpoint.hpp"

namespace nomos::config {

using nlohmann::ordered_json;

namespace {

class Section {
public:
    Section(const ordered_json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError(path_, "expected an object");
    }

    bool has(const char* key) const { return j_.contains(key); }

    std::string key_path(const char* key) const {
        return path_.empty() ? key : path_ + "." + key;
    }

    template <class T>
    bool field(const char* key, T& out) {
        known_.insert(key);
        auto it = j_.find(key);
        if (it == j_.end()) return false;
        read(*it, key_path(key), out);
        return true;
    }

    template <class F>
    bool custom(const char* key, F&& f) {
        known_.insert(key);
        auto it = j_.find(key);
        if (it == j_.end()) return false;
        f(*it, key_path(key));
        return true;
    }

    void finish() const {
        for (const auto& [key, value] : j_.items()) {
            if (!known_.contains(key)) throw ConfigError(key_path(key.c_str()), "unknown key");
        }
    }

    static void read(const ordered_json& v, const std::string& path, bool& out) {
        if (!v.is_boolean()) throw ConfigError(path, "expected true or false");
        out = v.get<bool>();
    }
    static void read(const ordered_json& v, const std::string& path, double& out) {
        if (!v.is_number()) throw ConfigError(path, "expected a number");
        out = v.get<double>();
    }
    static void read(const ordered_json& v, const std::string& path, std::size_t& out) {
        if (!v.is_number_integer() || (!v.is_number_unsigned() && v.get<std::int64_t>() < 0)) {
            throw ConfigError(path, "expected a non-negative integer");
        }
        out = v.get<std::size_t>();
    }
    static void read(const ordered_json& v, const std::string& path, std::string& out) {
        if (!v.is_string()) throw ConfigError(path, "expected a string");
        out = v.get<std::string>();
    }
    template <class T>
    static void read(const ordered_json& v, const std::string& path, std::vector<T>& out) {
        if (!v.is_array()) throw ConfigError(path, "expected an array");
        out.clear();
        for (std::size_t i = 0; i < v.size(); ++i) {
            T x{};
            read(v[i], path + "[" + std::to_string(i) + "]", x);
            out.push_back(x);
        }
    }

private:
    const ordered_json& j_;
    std::string path_;
    std::set<std::string, std::less<>> known_;
};

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
    if (p.empty()) return {};
    std::filesystem::path path(p);
    return path.is_absolute() ? path : (base / path).lexically_normal();
}

template <class F>
void guarded(const std::string& key, F&& f) {
    try {
        f();
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        throw ConfigError(key, e.what());
    }
}

}  // namespace

RunConfig::RunConfig() {
    model.num_layers = 2;
    model.hidden_dim = 64;
    model.num_heads = 4;
    model.ffn_dim = 256;
    model.max_positions = 128;
    grid.epochs = {3, 6};
    grid.learning_rates = {2e-5, 3e-5, 5e-5};
    grid.batch_sizes = {8, 16};
}

void RunConfig::validate() const {
    guarded("normalization", [&] { normalization.validate(); });
    if (!(corruption_threshold >= 0 && corruption_threshold <= 1)) {
        throw ConfigError("normalization.corruption_threshold", "must be in [0, 1]");
    }
    if (vocab_size < tokenizer::kMinVocabSize) {
        throw ConfigError("tokenizer.vocab_size",
                          "must be at least " + std::to_string(tokenizer::kMinVocabSize));
    }
    guarded("model", [&] {
        model::ModelConfig m = model;
        m.vocab_size = vocab_size;
        m.validate();
    });
    guarded("masking", [&] { masking.validate(); });
    guarded("pretrain", [&] { pretrain.config.validate(); });
    if (pretrain.max_len < 3 || pretrain.max_len > model.max_positions) {
        throw ConfigError("pretrain.max_len", "must be in [3, model.max_positions]");
    }
    guarded("finetune", [&] { finetune.config.validate(); });
    if (finetune.max_len < 3 || finetune.max_len > model.max_positions) {
        throw ConfigError("finetune.max_len", "must be in [3, model.max_positions]");
    }
    if (finetune.seeds.empty()) throw ConfigError("finetune.seeds", "must not be empty");
    guarded("grid", [&] { grid.validate(); });
    guarded("data.split", [&] { data.split.validate(); });
    guarded("data.entity_types", [&] { data.entity_types.validate(); });
}

RunConfig parse_run_config(const ordered_json& j, const std::filesystem::path& base_dir) {
    RunConfig c;
    Section top(j, "");
    top.field("seed", c.seed);
    std::string out;
    if (top.field("output_dir", out)) c.output_dir = resolve(base_dir, out);

    bool pretrain_seed = false;
    bool finetune_seed = false;
    bool seeds_given = false;
    bool split_seed = false;

    top.custom("normalization", [&](const ordered_json& v, const std::string& path) {
        Section s(v, path);
        s.field("apply_nfkd", c.normalization.apply_nfkd);
        s.field("strip_accents", c.normalization.strip_accents);
        s.field("lowercase", c.normalization.lowercase);
        s.field("collapse_whitespace", c.normalization.collapse_whitespace);
        s.field("corruption_threshold", c.corruption_threshold);
        s.finish();
    });
    top.custom("tokenizer", [&](const ordered_json& v, const std::string& path) {
        Section s(v, path);
        s.field("vocab_size", c.vocab_size);
        s.finish();
    });
    top.custom("model", [&](const ordered_json& v, const std::string& path) {
        Section s(v, path);
        auto& m = c.model;
        s.field("num_layers", m.num_layers);
        s.field("hidden_dim", m.hidden_dim);
        s.field("num_heads", m.num_heads);
        s.field("ffn_dim", m.ffn_dim);
        s.field("max_positions", m.max_positions);
        s.field("dropout", m.dropout);
        s.field("init_std", m.init_std);
        s.field("layer_norm_eps", m.layer_norm_eps);
        s.field("mixed_precision", m.mixed_precision);
        s.finish();
    });
    top.custom("masking", [&](const ordered_json& v, const std::string& path) {
        Section s(v, path);
        s.field("select_prob", c.masking.select_prob);
        s.field("mask_frac", c.masking.mask_frac);
        s.field("random_frac", c.masking.random_frac);
        s.field("keep_frac", c.masking.keep_frac);
        s.finish();
    });
    top.custom("pretrain", [&](const ordered_json& v, const std::string& path) {
        Section s(v, path);
        std::string preset;
        if (s.field("preset", preset)) {
            guarded(s.key_path("preset"),
                    [&] { c.pretrain.config = training::PretrainConfig::preset(preset); });
            c.pretrain.preset = preset;
        }
        auto& p = c.pretrain.config;
        s.field("steps", p.steps);
        s.field("batch_size", p.batch_size);
        s.field("peak_lr", p.peak_lr);
        s.field("warmup_steps", p.warmup_steps);
        s.field("weight_decay", p.weight_decay);
        pretrain_seed = s.field("seed", p.seed);
        s.field("log_every", p.log_every);
        s.field("clip_norm", p.clip_norm);
        s.field("max_len", c.pretrain.max_len);
        s.finish();
    });
    top.custom("finetune", [&](const ordered_json& v, const std::string& path) {
        Section s(v, path);
        std::string task;
        if (s.field("task", task)) {
            guarded(s.key_path("task"), [&] { c.finetune.task = training::parse_task(task); });
        }
        auto& f = c.finetune.config;
        s.field("epochs", f.epochs);
        s.field("learning_rate", f.learning_rate);
        s.field("batch_size", f.batch_size);
        finetune_seed = s.field("seed", f.seed);
        s.field("warmup_ratio", f.warmup_ratio);
        s.field("weight_decay", f.weight_decay);
        s.field("clip_norm", f.clip_norm);
        s.field("max_len", c.finetune.max_len);
        std::vector<std::size_t> seeds;
        if (s.field("seeds", seeds)) {
            c.finetune.seeds.assign(seeds.begin(), seeds.end());
            seeds_given = true;
        }
        s.field("model_name", c.finetune.model_name);
        s.finish();
    });
    top.custom("grid", [&](const ordered_json& v, const std::string& path) {
        Section s(v, path);
        s.field("epochs", c.grid.epochs);
        s.field("learning_rates", c.grid.learning_rates);
        s.field("batch_sizes", c.grid.batch_sizes);
        s.finish();
    });
    top.custom("data", [&](const ordered_json& v, const std::string& path) {
        Section s(v, path);
        std::string p;
        if (s.field("manifest", p)) c.data.manifest = resolve(base_dir, p);
        if (s.field("ner", p)) c.data.ner = resolve(base_dir, p);
        if (s.field("classification", p)) c.data.classification = resolve(base_dir, p);
        if (s.field("hierarchy", p)) c.data.hierarchy = resolve(base_dir, p);
        s.field("repair_iob", c.data.repair_iob);
        s.field("entity_types", c.data.entity_types.types);
        s.custom("split", [&](const ordered_json& sv, const std::string& sp) {
            Section ss(sv, sp);
            ss.field("train", c.data.split.train_frac);
            ss.field("val", c.data.split.val_frac);
            ss.field("test", c.data.split.test_frac);
            std::size_t seed = 0;
            if (ss.field("seed", seed)) {
                c.data.split.seed = seed;
                split_seed = true;
            }
            ss.finish();
        });
        s.finish();
    });
    top.finish();

    if (!pretrain_seed) c.pretrain.config.seed = c.seed;
    if (!finetune_seed) c.finetune.config.seed = c.seed;
    if (!split_seed) c.data.split.seed = c.seed;
    if (!seeds_given) {
        c.finetune.seeds.clear();
        for (std::uint64_t i = 0; i < 5; ++i) c.finetune.seeds.push_back(c.seed + i);
    }
    c.validate();
    return c;
}

RunConfig load_run_config(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw ConfigError("", "cannot open config " + file.string());
    ordered_json j;
    try {
        j = ordered_json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("", file.string() + ": " + e.what());
    }
    return parse_run_config(j, std::filesystem::absolute(file).parent_path());
}

ordered_json to_json(const RunConfig& c) {
    ordered_json j;
    j["seed"] = c.seed;
    j["output_dir"] = c.output_dir.string();
    j["normalization"] = {{"apply_nfkd", c.normalization.apply_nfkd},
                          {"strip_accents", c.normalization.strip_accents},
                          {"lowercase", c.normalization.lowercase},
                          {"collapse_whitespace", c.normalization.collapse_whitespace},
                          {"corruption_threshold", c.corruption_threshold}};
    j["tokenizer"] = {{"vocab_size", c.vocab_size}};
    ordered_json m = checkpoint::to_json(c.model);
    m.erase("vocab_size");
    m.erase("num_tags");
    m.erase("num_labels");
    j["model"] = m;
    j["masking"] = {{"select_prob", c.masking.select_prob},
                    {"mask_frac", c.masking.mask_frac},
                    {"random_frac", c.masking.random_frac},
                    {"keep_frac", c.masking.keep_frac}};
    ordered_json p;
    if (c.pretrain.preset) p["preset"] = *c.pretrain.preset;
    const ordered_json pc = c.pretrain.config.to_json();
    for (const auto& [k, v] : pc.items()) p[k] = v;
    p["max_len"] = c.pretrain.max_len;
    j["pretrain"] = p;
    ordered_json f;
    f["task"] = std::string(training::to_string(c.finetune.task));
    const ordered_json fc = c.finetune.config.to_json();
    for (const auto& [k, v] : fc.items()) f[k] = v;
    f["max_len"] = c.finetune.max_len;
    f["seeds"] = c.finetune.seeds;
    f["model_name"] = c.finetune.model_name;
    j["finetune"] = f;
    j["grid"] = {{"epochs", c.grid.epochs},
                 {"learning_rates", c.grid.learning_rates},
                 {"batch_sizes", c.grid.batch_sizes}};
    ordered_json split;
    split["train"] = c.data.split.train_frac;
    split["val"] = c.data.split.val_frac;
    split["test"] = c.data.split.test_frac;
    split["seed"] = c.data.split.seed;
    ordered_json data;
    data["manifest"] = c.data.manifest.string();
    data["ner"] = c.data.ner.string();
    data["classification"] = c.data.classification.string();
    data["hierarchy"] = c.data.hierarchy.string();
    data["repair_iob"] = c.data.repair_iob;
    data["entity_types"] = c.data.entity_types.types;
    data["split"] = split;
    j["data"] = data;
    return j;
}

}  // namespace nomos::config
