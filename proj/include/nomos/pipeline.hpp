#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "nomos/config.hpp"
#include "nomos/training.hpp"

namespace nomos::pipeline {

namespace fs = std::filesystem;

enum ExitCode : int { kOk = 0, kFailure = 1, kCorrupted = 2, kTaskMismatch = 3 };

/// Documents over the corruption threshold.
class CorruptionError : public std::runtime_error {
public:
    explicit CorruptionError(std::vector<std::string> sources);
    const std::vector<std::string>& sources() const noexcept { return sources_; }

private:
    std::vector<std::string> sources_;
};

/// Environment variable naming the default output root.
inline constexpr const char* kOutputRootEnv = "NOMOS_OUTPUT_ROOT";

/// $NOMOS_OUTPUT_ROOT, or ./nomos-runs when unset.
fs::path default_output_root();

/// Where each stage reads and writes under one output root.
struct Layout {
    fs::path root;

    fs::path normalized() const { return root / "normalized"; }
    fs::path normalized_manifest() const { return normalized() / "manifest.tsv"; }
    fs::path tokenizer() const { return root / "tokenizer"; }
    fs::path pretrain() const { return root / "pretrain"; }
    fs::path pretrained_checkpoint() const { return pretrain() / "checkpoint"; }
    fs::path finetune(training::Task t) const;
    fs::path finetuned_checkpoint(training::Task t, std::uint64_t seed) const;
    fs::path grid(training::Task t) const;
    fs::path evaluate(training::Task t) const;
    fs::path results(training::Task t) const { return evaluate(t) / "results.tsv"; }
    fs::path report() const { return root / "report"; }
};

struct Context {
    config::RunConfig config;
    Layout layout;
    int jobs = 0;
    std::ostream* log = nullptr;  // progress lines; null for silence
};

/// Corpus manifest for tokenizer-train and pretrain: the normalized one when
/// the normalize stage has run, else the configured manifest.
fs::path corpus_manifest(const Context& ctx);

/// Normalized non-empty lines of every manifest document, in manifest order.
/// Throws CorruptionError when any document is over the threshold.
std::vector<std::string> load_corpus_lines(const Context& ctx, const fs::path& manifest);

/// Writes <root>/normalized/<name>.txt, report.jsonl and a UTF-8 manifest.
/// Returns kCorrupted when any document is over the threshold (its text is
/// not written), else kOk.
int normalize(const Context& ctx, const fs::path& manifest);

void tokenizer_train(const Context& ctx, const fs::path& manifest, std::size_t vocab_size,
                     const fs::path& out_dir);

struct PretrainOptions {
    std::ostream* dump_batch = nullptr;  // aligned dump of the step-0 batch
    std::size_t dump_rows = 1;
};

training::PretrainResult pretrain(const Context& ctx, const fs::path& manifest,
                                  const PretrainOptions& options = {});

training::TaskData load_task_data(const Context& ctx, training::Task task,
                                  const tokenizer::TokenizerModel& tok);

/// One fine-tuning run per configured seed.
void finetune(const Context& ctx, training::Task task);

training::GridResult grid_search(const Context& ctx, training::Task task);

/// Scores fine-tuned checkpoints on validation and test and writes
/// results.tsv. With `checkpoint` set, scores only that directory.
std::vector<training::RunResult> evaluate(const Context& ctx, training::Task task,
                                          const std::optional<fs::path>& checkpoint = {});

/// Renders the stored results table and writes report.txt.
std::string report(const Context& ctx, const fs::path& results, const fs::path& out_file);

/// Writes <dir>/run.json: stage, resolved config and input fingerprints.
void write_run_descriptor(const fs::path& dir, const std::string& stage, const Context& ctx,
                          const std::map<std::string, std::string>& inputs);

/// FNV-1a of a file's bytes.
std::string file_fingerprint(const fs::path& file);

}  // namespace nomos::pipeline
