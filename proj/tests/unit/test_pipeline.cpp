#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "nomos/pipeline.hpp"

using namespace nomos;
using namespace nomos::pipeline;
using nlohmann::ordered_json;
namespace fs = std::filesystem;

namespace {

const fs::path kFixtures = NOMOS_FIXTURES;

struct TempRoot {
    fs::path path;
    explicit TempRoot(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
    }
    ~TempRoot() { fs::remove_all(path); }
};

Context make_context(const fs::path& root) {
    Context ctx;
    ctx.config = config::load_run_config(kFixtures / "smoke.json");
    ctx.layout.root = root;
    ctx.jobs = 1;
    return ctx;
}

ordered_json read_json(const fs::path& p) {
    std::ifstream in(p);
    return ordered_json::parse(in);
}

}  // namespace

TEST_CASE("layout paths") {
    const Layout l{"/r"};
    CHECK(l.normalized_manifest() == fs::path("/r/normalized/manifest.tsv"));
    CHECK(l.pretrained_checkpoint() == fs::path("/r/pretrain/checkpoint"));
    CHECK(l.finetuned_checkpoint(training::Task::Ner, 3) ==
          fs::path("/r/finetune/ner/seed-3/checkpoint"));
    CHECK(l.grid(training::Task::Chapter) == fs::path("/r/grid/chapter"));
    CHECK(l.results(training::Task::Subject) == fs::path("/r/evaluate/subject/results.tsv"));
    CHECK(l.report() == fs::path("/r/report"));
}

TEST_CASE("output root follows the environment") {
    ::setenv(kOutputRootEnv, "/tmp/somewhere", 1);
    CHECK(default_output_root() == fs::path("/tmp/somewhere"));
    ::setenv(kOutputRootEnv, "", 1);
    CHECK(default_output_root() == fs::path("nomos-runs"));
    ::unsetenv(kOutputRootEnv);
    CHECK(default_output_root() == fs::path("nomos-runs"));
}

TEST_CASE("normalize writes text, reports and a descriptor") {
    TempRoot root("nomos-test-pipeline");
    auto ctx = make_context(root.path);
    std::ostringstream log;
    ctx.log = &log;
    CHECK(normalize(ctx, ctx.config.data.manifest) == kOk);
    const auto& l = ctx.layout;
    CHECK(fs::exists(l.normalized() / "gazette.txt"));
    CHECK(fs::exists(l.normalized() / "report.jsonl"));
    const auto m = corpus::load_manifest(l.normalized_manifest());
    REQUIRE(m.entries.size() == 4);
    for (const auto& e : m.entries) CHECK(e.declared_encoding == textnorm::Encoding::Utf8);
    CHECK(corpus_manifest(ctx) == l.normalized_manifest());

    const auto run = read_json(l.normalized() / "run.json");
    CHECK(run["stage"] == "normalize");
    CHECK(run["config"]["seed"] == 7);
    CHECK(run["inputs"]["manifest"] == file_fingerprint(ctx.config.data.manifest));
    CHECK(log.str().find("normalized 4 of 4 documents") != std::string::npos);

    const auto lines = load_corpus_lines(ctx, l.normalized_manifest());
    CHECK_FALSE(lines.empty());
    for (const auto& line : lines) CHECK_FALSE(line.empty());
}

TEST_CASE("corrupted documents are held back") {
    TempRoot root("nomos-test-pipeline-corrupt");
    const auto ctx = make_context(root.path);
    const fs::path manifest = kFixtures / "corrupt" / "manifest.tsv";
    CHECK(normalize(ctx, manifest) == kCorrupted);
    CHECK(fs::exists(ctx.layout.normalized() / "clean.txt"));
    CHECK_FALSE(fs::exists(ctx.layout.normalized() / "damaged.txt"));
    try {
        load_corpus_lines(ctx, manifest);
        FAIL("expected CorruptionError");
    } catch (const CorruptionError& e) {
        CHECK(e.sources() == std::vector<std::string>{"damaged"});
    }
}

TEST_CASE("tokenizer stage writes a loadable model") {
    TempRoot root("nomos-test-pipeline-tok");
    const auto ctx = make_context(root.path);
    tokenizer_train(ctx, ctx.config.data.manifest, 300, ctx.layout.tokenizer());
    const auto tok = tokenizer::TokenizerModel::load(ctx.layout.tokenizer());
    CHECK(tok.size() <= 300);
    const auto run = read_json(ctx.layout.tokenizer() / "run.json");
    CHECK(run["stage"] == "tokenizer-train");
    CHECK(run["inputs"]["tokenizer"] == tok.fingerprint());
}
