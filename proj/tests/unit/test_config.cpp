#include <filesystem>

#include "doctest.h"
#include "nomos/config.hpp"

using namespace nomos;
using namespace nomos::config;
using nlohmann::ordered_json;
namespace fs = std::filesystem;

namespace {

std::string error_key(const ordered_json& j) {
    try {
        parse_run_config(j, "/base");
    } catch (const ConfigError& e) {
        return e.key();
    }
    return "<none>";
}

}  // namespace

TEST_CASE("defaults validate") {
    const auto c = parse_run_config(ordered_json::object(), "/base");
    CHECK(c.vocab_size == 500);
    CHECK(c.corruption_threshold == textnorm::kDefaultCorruptionThreshold);
    CHECK(c.masking.select_prob == 0.15);
    CHECK(c.finetune.task == training::Task::Ner);
    CHECK(c.finetune.seeds == std::vector<std::uint64_t>{0, 1, 2, 3, 4});
    CHECK(c.output_dir.empty());
}

TEST_CASE("unknown keys and wrong types name the dotted path") {
    CHECK(error_key({{"finetune", {{"learnig_rate", 1e-3}}}}) == "finetune.learnig_rate");
    CHECK(error_key({{"data", {{"split", {{"trian", 0.5}}}}}}) == "data.split.trian");
    CHECK(error_key({{"bogus", 1}}) == "bogus");
    CHECK(error_key({{"model", {{"num_layers", -1}}}}) == "model.num_layers");
    CHECK(error_key({{"model", {{"dropout", "high"}}}}) == "model.dropout");
    CHECK(error_key({{"grid", {{"epochs", {1, "two"}}}}}) == "grid.epochs[1]");
    CHECK(error_key({{"tokenizer", {{"vocab_size", 10}}}}) == "tokenizer.vocab_size");
    CHECK(error_key({{"finetune", {{"task", "pos"}}}}) == "finetune.task");
    CHECK(error_key({{"pretrain", {{"preset", "v9"}}}}) == "pretrain.preset");
    CHECK(error_key({{"masking", {{"mask_frac", 0.9}}}}) == "masking");
}

TEST_CASE("seed propagates unless a section sets its own") {
    const auto c = parse_run_config({{"seed", 11}, {"finetune", {{"seed", 3}}}}, "/base");
    CHECK(c.pretrain.config.seed == 11);
    CHECK(c.finetune.config.seed == 3);
    CHECK(c.data.split.seed == 11);
    CHECK(c.finetune.seeds == std::vector<std::uint64_t>{11, 12, 13, 14, 15});
    const auto d = parse_run_config({{"seed", 11}, {"finetune", {{"seeds", {4, 2}}}}}, "/base");
    CHECK(d.finetune.seeds == std::vector<std::uint64_t>{4, 2});
}

TEST_CASE("presets fill the pretrain section") {
    const auto c = parse_run_config(
        {{"pretrain", {{"preset", "v2"}, {"steps", 50}, {"warmup_steps", 5}}}}, "/base");
    CHECK(c.pretrain.preset == "v2");
    CHECK(c.pretrain.config.batch_size == 4096);
    CHECK(c.pretrain.config.steps == 50);
}

TEST_CASE("relative paths resolve against the config directory") {
    const auto c = load_run_config(fs::path(NOMOS_FIXTURES) / "smoke.json");
    CHECK(c.data.manifest == fs::path(NOMOS_FIXTURES) / "corpus" / "manifest.tsv");
    CHECK(c.data.ner.is_absolute());
    CHECK(c.seed == 7);
    CHECK(c.grid.size() == 4);
    const auto abs = parse_run_config({{"data", {{"ner", "/x/y.iob"}}}}, "/base");
    CHECK(abs.data.ner == fs::path("/x/y.iob"));
    CHECK(parse_run_config({{"output_dir", "runs"}}, "/base").output_dir == fs::path("/base/runs"));
}

TEST_CASE("resolved json reparses to the same config") {
    const auto c = load_run_config(fs::path(NOMOS_FIXTURES) / "smoke.json");
    const auto j = to_json(c);
    CHECK(j["data"]["manifest"] == c.data.manifest.string());
    CHECK(j["pretrain"]["seed"] == 7);
    const auto back = parse_run_config(j, "/elsewhere");
    CHECK(to_json(back) == j);
    CHECK_THROWS_AS(load_run_config("/nonexistent/config.json"), ConfigError);
}
