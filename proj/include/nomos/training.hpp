#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "nomos/corpus.hpp"
#include "nomos/masking.hpp"
#include "nomos/metrics.hpp"
#include "nomos/model.hpp"
#include "nomos/textnorm.hpp"
#include "nomos/tokenizer.hpp"

namespace nomos::training {

class TrainingError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raised when the loss stops being finite.
class NonFiniteLoss : public TrainingError {
public:
    NonFiniteLoss(std::size_t step, std::string batch_fingerprint);
    std::size_t step() const noexcept { return step_; }
    const std::string& batch_fingerprint() const noexcept { return fingerprint_; }

private:
    std::size_t step_;
    std::string fingerprint_;
};

/// Checkpoint task or head width does not fit the dataset.
class TaskMismatch : public TrainingError {
public:
    using TrainingError::TrainingError;
};

// ---------------------------------------------------------------- optimizer

struct OptimizerConfig {
    double beta1 = 0.9;
    double beta2 = 0.98;
    double eps = 1e-6;
    double weight_decay = 0.01;  // applied to matrices only
    double clip_norm = 1.0;      // <= 0 disables clipping

    nlohmann::ordered_json to_json() const;
};

/// Linear warmup over `warmup` steps to `peak`, then linear decay to zero
/// at `total`. `step` is 0-based.
double learning_rate(std::size_t step, std::size_t total, std::size_t warmup, double peak);

class AdamW {
public:
    AdamW(const model::ModelConfig& config, const OptimizerConfig& options);

    /// Clips `grads` to the global norm bound, then updates `params`.
    /// Returns the norm before clipping.
    double step(model::ModelParams<float>& params, model::ModelParams<float>& grads, double lr);
    std::size_t steps_taken() const noexcept { return t_; }

private:
    OptimizerConfig options_;
    model::ModelParams<float> m_;
    model::ModelParams<float> v_;
    std::size_t t_ = 0;
};

void zero(model::ModelParams<float>& params);
double global_norm(const model::ModelParams<float>& params);

// -------------------------------------------------------------- pretraining

struct PretrainConfig {
    std::size_t steps = 200;
    std::size_t batch_size = 8;
    double peak_lr = 1e-3;
    std::size_t warmup_steps = 20;
    double weight_decay = 0.01;
    std::uint64_t seed = 0;
    std::size_t log_every = 10;
    double clip_norm = 1.0;

    /// "v1", "v2" or "bert-style"; other fields keep their defaults.
    static PretrainConfig preset(std::string_view name);
    void validate() const;
    OptimizerConfig optimizer() const;
    nlohmann::ordered_json to_json() const;
};

struct PackedCorpus {
    std::vector<corpus::PackedSequence> sequences;
    std::string tokenizer_fingerprint;
};

struct LossPoint {
    std::size_t step = 0;  // 1-based step that closed the window
    double loss = 0;       // mean over the window
};

struct PretrainResult {
    model::Model<float> model;
    std::vector<LossPoint> curve;  // steps / log_every points
    double smoothed_loss = 0;      // mean of the last log_every step losses
    std::size_t steps = 0;
};

using LossCallback = std::function<void(const LossPoint&)>;

/// The masked batch consumed at `step` (0-based): rows come from a seeded
/// per-epoch shuffle of the corpus, masks from per-row streams keyed by step.
masking::MaskedBatch pretrain_batch(const PackedCorpus& data, const masking::MaskingPolicy& policy,
                                    std::size_t vocab_size, const PretrainConfig& config,
                                    std::size_t step, int jobs = 0);

/// Runs exactly config.steps AdamW steps with a fresh masking pattern per
/// batch (see pretrain_batch).
PretrainResult pretrain(model::Model<float> model, std::string_view model_tokenizer_fingerprint,
                        const PackedCorpus& data, const masking::MaskingPolicy& policy,
                        const PretrainConfig& config, int jobs = 0,
                        const LossCallback& on_log = {});

// --------------------------------------------------------------- finetuning

enum class Task { Ner, Volume, Chapter, Subject };

std::string_view to_string(Task t) noexcept;
/// "ner", "volume", "chapter", "subject"; throws std::invalid_argument.
Task parse_task(std::string_view s);
bool is_classification(Task t) noexcept;

struct FinetuneConfig {
    std::size_t epochs = 3;
    double learning_rate = 5e-5;
    std::size_t batch_size = 8;
    std::uint64_t seed = 0;
    double warmup_ratio = 0.1;
    double weight_decay = 0.01;
    double clip_norm = 1.0;

    void validate() const;
    OptimizerConfig optimizer() const;
    nlohmann::ordered_json to_json() const;
    /// Same grid coordinates (epochs, learning rate, batch size).
    bool same_point(const FinetuneConfig& o) const noexcept {
        return epochs == o.epochs && learning_rate == o.learning_rate &&
               batch_size == o.batch_size;
    }
};

struct Example {
    std::vector<tokenizer::TokenId> ids;  // bos ... eos
    std::vector<int> labels;              // per position (NER) or one entry
    std::vector<std::size_t> word_starts; // NER: first-subword position per kept word
    std::vector<std::string> gold_tags;   // NER: one per word of the source sentence
};

struct TaskData {
    Task task = Task::Ner;
    std::size_t num_classes = 0;
    std::vector<std::string> class_names;  // tag set for NER
    corpus::EntityTypeSet types;
    std::vector<Example> train;
    std::vector<Example> validation;
    std::vector<Example> test;

    std::string fingerprint() const;
};

/// Words are normalized, the first encoded bare and the rest with a leading
/// space; only each word's first subword carries its tag. Sentences longer
/// than `max_len` keep their leading words.
TaskData make_ner_data(const tokenizer::TokenizerModel& tok, const textnorm::NormConfig& norm,
                       const corpus::Split<corpus::NerSentence>& split,
                       const corpus::EntityTypeSet& types, std::size_t max_len);

TaskData make_cls_data(const tokenizer::TokenizerModel& tok, const textnorm::NormConfig& norm,
                       const corpus::Split<corpus::ClassificationRecord>& split,
                       const corpus::LabelHierarchy& hierarchy, corpus::Level level,
                       std::size_t max_len);

struct Evaluation {
    metrics::MetricRow row;      // percent
    double micro_f1 = 0;         // percent; the selection metric
    std::optional<metrics::NerReport> ner;
    std::optional<metrics::ClsReport> cls;
    std::vector<std::vector<std::string>> predicted_tags;  // NER
    std::vector<int> predicted_labels;                     // classification
};

/// Inference-mode scoring. Throws TaskMismatch when the head width differs
/// from the dataset's class count.
Evaluation evaluate(const model::Model<float>& model, const TaskData& data,
                    std::span<const Example> examples);

struct EpochRecord {
    std::size_t epoch = 0;  // 1-based
    double train_loss = 0;  // mean step loss
    Evaluation validation;
};

struct FinetuneResult {
    model::Model<float> model;
    std::vector<EpochRecord> epochs;
};

/// Copies the encoder, attaches a freshly initialized head sized for the
/// task, and trains for config.epochs with validation after each epoch.
FinetuneResult finetune(const model::Model<float>& pretrained, const TaskData& data,
                        const FinetuneConfig& config);

// ------------------------------------------------------------- grid search

struct GridSpec {
    std::vector<std::size_t> epochs;
    std::vector<double> learning_rates;
    std::vector<std::size_t> batch_sizes;

    static GridSpec ner_default();             // 1..20 x {2e-5, 3e-5, 5e-5} x {8, 16}
    static GridSpec classification_default();  // 1..20 x {1e-5, 2e-5, 3e-5, 5e-5} x {8, 16}
    void validate() const;
    std::size_t size() const noexcept {
        return epochs.size() * learning_rates.size() * batch_sizes.size();
    }
    /// Grid points in (epochs, learning rate, batch size) nesting order.
    std::vector<FinetuneConfig> points(const FinetuneConfig& base) const;
};

struct GridRow {
    FinetuneConfig config;
    double validation_micro_f1 = 0;
    metrics::MetricRow validation;
};

struct GridResult {
    FinetuneConfig best;
    std::size_t best_index = 0;
    std::vector<GridRow> table;
};

/// Argmax of validation micro F1; ties go to fewer epochs, then the lower
/// learning rate, then the smaller batch.
std::size_t select_best(std::span<const GridRow> rows);

using GridEvaluator = std::function<GridRow(const FinetuneConfig&)>;

/// Evaluates every point with `evaluator` and selects the best.
GridResult grid_search(const GridSpec& grid, const FinetuneConfig& base,
                       const GridEvaluator& evaluator);
/// Fine-tunes `pretrained` at every point, scoring the last epoch.
GridResult grid_search(const model::Model<float>& pretrained, const TaskData& data,
                       const GridSpec& grid, const FinetuneConfig& base);

std::string format_grid_table(const GridResult& result);

// ------------------------------------------------------------- aggregation

struct RunResult {
    std::string model_name;
    Task task = Task::Ner;
    FinetuneConfig config;
    std::uint64_t seed = 0;
    metrics::MetricRow validation;
    metrics::MetricRow test;
};

struct SeedAggregate {
    std::vector<std::uint64_t> seeds;  // sorted
    std::vector<std::string> names;
    std::vector<double> mean;
    std::vector<double> std;  // sample (n - 1) standard deviation
};

struct MeanStd {
    double mean = 0;
    double std = 0;
};

/// Mean and sample standard deviation; needs at least two values.
MeanStd mean_std(std::span<const double> values);

/// Aggregates test metrics. Requires >= 2 runs sharing model, task, grid
/// point and metric names; reduces in sorted seed order.
SeedAggregate aggregate_seeds(std::span<const RunResult> runs);

/// "75.0 (7.1%)"
std::string format_cell(double mean, double std, int decimals = 1);

/// One row per (config, seed): model, task, epochs, learning_rate,
/// batch_size, seed, then val.<metric> and test.<metric> columns.
std::string results_tsv(std::span<const RunResult> runs);
std::vector<RunResult> parse_results_tsv(std::string_view text);

/// Seed-aggregated rows grouped by (model, task, grid point): NER cells as
/// "mean (std%)", classification cells as the mean.
std::string render_report(std::span<const RunResult> runs);

}  // namespace nomos::training
