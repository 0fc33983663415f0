#include "nomos/training.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <sstream>

#include "nomos/hash.hpp"

namespace nomos::training {

using model::Model;
using model::ModelParams;
using model::Tensor;
using nlohmann::ordered_json;
using tokenizer::TokenId;

namespace {

// Stream keys for Rng::derive.
constexpr std::uint64_t kOrderStream = 0x6f72646572;
constexpr std::uint64_t kMaskStream = 0x6d61736b;
constexpr std::uint64_t kDropoutStream = 0x64726f70;
constexpr std::uint64_t kShuffleStream = 0x73687566;
constexpr std::uint64_t kHeadStream = 0x68656164;

std::vector<Tensor<float>*> tensors(ModelParams<float>& p) {
    std::vector<Tensor<float>*> out;
    p.for_each([&](const std::string&, Tensor<float>& t) { out.push_back(&t); });
    return out;
}

std::string number(double v) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, end);
}

double parse_number(std::string_view s, std::size_t line) {
    double v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) {
        throw TrainingError("results line " + std::to_string(line) + ": bad number '" +
                            std::string(s) + "'");
    }
    return v;
}

std::uint64_t parse_uint(std::string_view s, std::size_t line) {
    std::uint64_t v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) {
        throw TrainingError("results line " + std::to_string(line) + ": bad integer '" +
                            std::string(s) + "'");
    }
    return v;
}

std::vector<std::string_view> split_tabs(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t pos = 0;
    while (true) {
        const std::size_t tab = line.find('\t', pos);
        out.push_back(line.substr(pos, tab == std::string_view::npos ? tab : tab - pos));
        if (tab == std::string_view::npos) break;
        pos = tab + 1;
    }
    return out;
}

std::string batch_fingerprint(const masking::MaskedBatch& b) {
    Fnv1a h;
    h.update_span(std::span<const TokenId>(b.input_ids));
    h.update_span(std::span<const TokenId>(b.labels));
    return h.hex();
}

template <class T>
std::size_t argmax(const T* row, std::size_t n) {
    return static_cast<std::size_t>(std::max_element(row, row + n) - row);
}

}  // namespace

NonFiniteLoss::NonFiniteLoss(std::size_t step, std::string fp)
    : TrainingError("non-finite loss at step " + std::to_string(step) + " (batch " + fp + ")"),
      step_(step),
      fingerprint_(std::move(fp)) {}

// ---------------------------------------------------------------- optimizer

ordered_json OptimizerConfig::to_json() const {
    return {{"name", "adamw"},          {"beta1", beta1},   {"beta2", beta2},
            {"eps", eps},               {"weight_decay", weight_decay},
            {"clip_norm", clip_norm},   {"schedule", "linear-warmup-linear-decay"}};
}

double learning_rate(std::size_t step, std::size_t total, std::size_t warmup, double peak) {
    if (step < warmup) return peak * static_cast<double>(step + 1) / static_cast<double>(warmup);
    if (step >= total) return 0.0;
    return peak * static_cast<double>(total - step) / static_cast<double>(total - warmup);
}

void zero(ModelParams<float>& params) {
    params.for_each([](const std::string&, Tensor<float>& t) {
        std::fill(t.data.begin(), t.data.end(), 0.0f);
    });
}

double global_norm(const ModelParams<float>& params) {
    double sq = 0;
    params.for_each([&](const std::string&, const Tensor<float>& t) {
        for (float g : t.data) sq += static_cast<double>(g) * g;
    });
    return std::sqrt(sq);
}

AdamW::AdamW(const model::ModelConfig& config, const OptimizerConfig& options)
    : options_(options),
      m_(ModelParams<float>::zeros(config)),
      v_(ModelParams<float>::zeros(config)) {}

double AdamW::step(ModelParams<float>& params, ModelParams<float>& grads, double lr) {
    const double norm = global_norm(grads);
    auto p = tensors(params);
    auto g = tensors(grads);
    auto m = tensors(m_);
    auto v = tensors(v_);
    if (p.size() != m.size() || g.size() != m.size()) {
        throw TrainingError("optimizer state does not match the parameters");
    }
    const float scale = options_.clip_norm > 0 && norm > options_.clip_norm
                            ? static_cast<float>(options_.clip_norm / norm)
                            : 1.0f;
    ++t_;
    const double bc1 = 1.0 - std::pow(options_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(options_.beta2, static_cast<double>(t_));
    const auto b1 = static_cast<float>(options_.beta1);
    const auto b2 = static_cast<float>(options_.beta2);
    const auto step_size = static_cast<float>(lr / bc1);
    const auto inv_bc2 = static_cast<float>(1.0 / bc2);
    const auto eps = static_cast<float>(options_.eps);
    for (std::size_t i = 0; i < p.size(); ++i) {
        const float decay =
            p[i]->shape.size() == 2 ? static_cast<float>(lr * options_.weight_decay) : 0.0f;
        float* pp = p[i]->ptr();
        float* gg = g[i]->ptr();
        float* mm = m[i]->ptr();
        float* vv = v[i]->ptr();
        const std::size_t n = p[i]->size();
        for (std::size_t k = 0; k < n; ++k) {
            const float grad = gg[k] * scale;
            gg[k] = grad;
            mm[k] = b1 * mm[k] + (1.0f - b1) * grad;
            vv[k] = b2 * vv[k] + (1.0f - b2) * grad * grad;
            pp[k] -= decay * pp[k];
            pp[k] -= step_size * mm[k] / (std::sqrt(vv[k] * inv_bc2) + eps);
        }
    }
    return norm;
}

// -------------------------------------------------------------- pretraining

PretrainConfig PretrainConfig::preset(std::string_view name) {
    PretrainConfig c;
    if (name == "v1") {
        c.steps = 100000;
        c.batch_size = 1024;
    } else if (name == "v2") {
        c.steps = 100000;
        c.batch_size = 4096;
    } else if (name == "bert-style") {
        c.steps = 1000000;
        c.batch_size = 256;
    } else {
        throw std::invalid_argument("unknown pretraining preset '" + std::string(name) + "'");
    }
    c.warmup_steps = c.steps / 16;
    c.log_every = 1000;
    return c;
}

void PretrainConfig::validate() const {
    if (steps == 0) throw std::invalid_argument("pretrain steps must be positive");
    if (batch_size == 0) throw std::invalid_argument("pretrain batch_size must be positive");
    if (warmup_steps > steps) throw std::invalid_argument("warmup_steps exceeds steps");
    if (log_every == 0) throw std::invalid_argument("log_every must be positive");
    if (!(peak_lr > 0)) throw std::invalid_argument("peak_lr must be positive");
    if (weight_decay < 0) throw std::invalid_argument("weight_decay must be non-negative");
}

OptimizerConfig PretrainConfig::optimizer() const {
    OptimizerConfig o;
    o.weight_decay = weight_decay;
    o.clip_norm = clip_norm;
    return o;
}

ordered_json PretrainConfig::to_json() const {
    return {{"steps", steps},         {"batch_size", batch_size},
            {"peak_lr", peak_lr},     {"warmup_steps", warmup_steps},
            {"weight_decay", weight_decay}, {"seed", seed},
            {"log_every", log_every}, {"clip_norm", clip_norm}};
}

masking::MaskedBatch pretrain_batch(const PackedCorpus& data, const masking::MaskingPolicy& policy,
                                    std::size_t vocab_size, const PretrainConfig& config,
                                    std::size_t step, int jobs) {
    const auto& seqs = data.sequences;
    if (seqs.empty()) throw TrainingError("pretraining corpus is empty");
    const std::size_t n = seqs.size();
    std::vector<std::size_t> order(n);
    std::size_t order_epoch = static_cast<std::size_t>(-1);
    std::vector<corpus::PackedSequence> rows(config.batch_size);
    for (std::size_t r = 0; r < config.batch_size; ++r) {
        const std::size_t k = step * config.batch_size + r;
        if (k / n != order_epoch) {
            order_epoch = k / n;
            std::iota(order.begin(), order.end(), std::size_t{0});
            Rng rr = Rng::derive(config.seed, kOrderStream, order_epoch);
            shuffle(order, rr);
        }
        rows[r] = seqs[order[k % n]];
    }
    const std::uint64_t mask_seed = Rng::derive(config.seed, kMaskStream).next();
    return masking::collate_epoch_parallel(rows, policy, masking::MaskingVocab{vocab_size},
                                           mask_seed, step, 0, jobs);
}

PretrainResult pretrain(Model<float> model, std::string_view model_fp, const PackedCorpus& data,
                        const masking::MaskingPolicy& policy, const PretrainConfig& config,
                        int jobs, const LossCallback& on_log) {
    config.validate();
    policy.validate();
    model.config.validate();
    if (model_fp != data.tokenizer_fingerprint) {
        throw TrainingError("corpus was tokenized with " + data.tokenizer_fingerprint +
                            " but the model expects " + std::string(model_fp));
    }
    const auto& seqs = data.sequences;
    if (seqs.empty()) throw TrainingError("pretraining corpus is empty");
    const std::size_t cols = seqs.front().ids.size();
    if (cols > model.config.max_positions) {
        throw TrainingError("packed length " + std::to_string(cols) + " exceeds max_positions");
    }
    AdamW opt(model.config, config.optimizer());
    ModelParams<float> grads = ModelParams<float>::zeros(model.config);

    PretrainResult result;
    std::vector<double> window;
    window.reserve(config.log_every);
    std::vector<double> last;

    for (std::size_t step = 0; step < config.steps; ++step) {
        const masking::MaskedBatch mb =
            pretrain_batch(data, policy, model.config.vocab_size, config, step, jobs);
        zero(grads);
        Rng drop = Rng::derive(config.seed, kDropoutStream, step);
        const model::BatchView view{mb.rows, mb.cols, mb.input_ids, mb.attention_mask};
        const auto loss =
            model::mlm_loss<float>(model, view, mb.labels, &grads, model::Mode::Train, &drop);
        if (!std::isfinite(loss.loss)) throw NonFiniteLoss(step, batch_fingerprint(mb));
        if (!loss.empty_warning) {
            const double norm = opt.step(model.params, grads,
                                         learning_rate(step, config.steps, config.warmup_steps,
                                                       config.peak_lr));
            if (!std::isfinite(norm)) throw NonFiniteLoss(step, batch_fingerprint(mb));
        }
        window.push_back(loss.loss);
        if (window.size() == config.log_every) {
            const LossPoint pt{step + 1, std::accumulate(window.begin(), window.end(), 0.0) /
                                             static_cast<double>(window.size())};
            result.curve.push_back(pt);
            if (on_log) on_log(pt);
            last = window;
            window.clear();
        }
    }
    // Trailing partial window plus the tail of the previous full one.
    std::vector<double> tail = last;
    tail.insert(tail.end(), window.begin(), window.end());
    const std::size_t keep = std::min(config.log_every, tail.size());
    result.smoothed_loss =
        std::accumulate(tail.end() - static_cast<std::ptrdiff_t>(keep), tail.end(), 0.0) /
        static_cast<double>(keep);
    result.steps = config.steps;
    result.model = std::move(model);
    return result;
}

// --------------------------------------------------------------- finetuning

std::string_view to_string(Task t) noexcept {
    switch (t) {
        case Task::Ner: return "ner";
        case Task::Volume: return "volume";
        case Task::Chapter: return "chapter";
        case Task::Subject: return "subject";
    }
    return "ner";
}

Task parse_task(std::string_view s) {
    if (s == "ner") return Task::Ner;
    if (s == "volume") return Task::Volume;
    if (s == "chapter") return Task::Chapter;
    if (s == "subject") return Task::Subject;
    throw std::invalid_argument("unknown task '" + std::string(s) + "'");
}

bool is_classification(Task t) noexcept { return t != Task::Ner; }

void FinetuneConfig::validate() const {
    if (epochs == 0) throw std::invalid_argument("epochs must be at least 1");
    if (batch_size == 0) throw std::invalid_argument("batch_size must be positive");
    if (!(learning_rate > 0)) throw std::invalid_argument("learning_rate must be positive");
    if (warmup_ratio < 0 || warmup_ratio > 1) {
        throw std::invalid_argument("warmup_ratio must be in [0, 1]");
    }
}

OptimizerConfig FinetuneConfig::optimizer() const {
    OptimizerConfig o;
    o.weight_decay = weight_decay;
    o.clip_norm = clip_norm;
    return o;
}

ordered_json FinetuneConfig::to_json() const {
    return {{"epochs", epochs},         {"learning_rate", learning_rate},
            {"batch_size", batch_size}, {"seed", seed},
            {"warmup_ratio", warmup_ratio}, {"weight_decay", weight_decay},
            {"clip_norm", clip_norm}};
}

std::string TaskData::fingerprint() const {
    Fnv1a h;
    h.update(to_string(task));
    h.update_pod(static_cast<std::uint64_t>(num_classes));
    for (const auto* part : {&train, &validation, &test}) {
        h.update_pod(static_cast<std::uint64_t>(part->size()));
        for (const auto& e : *part) {
            h.update_span(std::span<const TokenId>(e.ids));
            h.update_span(std::span<const int>(e.labels));
        }
    }
    return h.hex();
}

TaskData make_ner_data(const tokenizer::TokenizerModel& tok, const textnorm::NormConfig& norm,
                       const corpus::Split<corpus::NerSentence>& split,
                       const corpus::EntityTypeSet& types, std::size_t max_len) {
    if (max_len < 3) throw std::invalid_argument("max_len must allow bos, one word and eos");
    TaskData data;
    data.task = Task::Ner;
    data.types = types;
    data.class_names = types.tag_set();
    data.num_classes = data.class_names.size();
    std::map<std::string, int> tag_id;
    for (std::size_t i = 0; i < data.class_names.size(); ++i) {
        tag_id[data.class_names[i]] = static_cast<int>(i);
    }
    auto convert = [&](const std::vector<corpus::NerSentence>& in, std::vector<Example>& out) {
        for (const auto& s : in) {
            Example e;
            e.ids.push_back(tokenizer::kBos);
            e.labels.push_back(model::kIgnore);
            for (std::size_t w = 0; w < s.tokens.size(); ++w) {
                const std::string word = textnorm::normalize(s.tokens[w], norm);
                std::vector<TokenId> pieces =
                    word.empty() ? std::vector<TokenId>{tokenizer::kUnk}
                                 : tok.encode_ids(w == 0 ? word : " " + word);
                if (e.ids.size() + pieces.size() + 1 > max_len) break;
                auto it = tag_id.find(s.tags[w]);
                if (it == tag_id.end()) throw TrainingError("tag '" + s.tags[w] + "' is not in the tag set");
                e.word_starts.push_back(e.ids.size());
                for (std::size_t p = 0; p < pieces.size(); ++p) {
                    e.ids.push_back(pieces[p]);
                    e.labels.push_back(p == 0 ? it->second : model::kIgnore);
                }
            }
            e.ids.push_back(tokenizer::kEos);
            e.labels.push_back(model::kIgnore);
            e.gold_tags = s.tags;
            out.push_back(std::move(e));
        }
    };
    convert(split.train, data.train);
    convert(split.val, data.validation);
    convert(split.test, data.test);
    return data;
}

TaskData make_cls_data(const tokenizer::TokenizerModel& tok, const textnorm::NormConfig& norm,
                       const corpus::Split<corpus::ClassificationRecord>& split,
                       const corpus::LabelHierarchy& hierarchy, corpus::Level level,
                       std::size_t max_len) {
    if (max_len < 3) throw std::invalid_argument("max_len must be at least 3");
    TaskData data;
    data.task = level == corpus::Level::Volume    ? Task::Volume
                : level == corpus::Level::Chapter ? Task::Chapter
                                                  : Task::Subject;
    data.class_names = hierarchy.names(level);
    data.num_classes = data.class_names.size();
    auto convert = [&](const std::vector<corpus::ClassificationRecord>& in,
                       std::vector<Example>& out) {
        for (const auto& r : in) {
            Example e;
            std::vector<TokenId> body = tok.encode_ids(textnorm::normalize(r.text, norm));
            if (body.size() > max_len - 2) body.resize(max_len - 2);
            e.ids.push_back(tokenizer::kBos);
            e.ids.insert(e.ids.end(), body.begin(), body.end());
            e.ids.push_back(tokenizer::kEos);
            e.labels.push_back(r.label(level));
            out.push_back(std::move(e));
        }
    };
    convert(split.train, data.train);
    convert(split.val, data.validation);
    convert(split.test, data.test);
    return data;
}

namespace {

struct Batch {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<TokenId> ids;
    std::vector<std::uint8_t> mask;
    std::vector<int> labels;
    model::BatchView view() const { return {rows, cols, ids, mask}; }
};

Batch make_batch(const TaskData& data, std::span<const Example* const> examples) {
    Batch b;
    b.rows = examples.size();
    for (const Example* e : examples) b.cols = std::max(b.cols, e->ids.size());
    b.ids.assign(b.rows * b.cols, tokenizer::kPad);
    b.mask.assign(b.rows * b.cols, 0);
    const bool ner = data.task == Task::Ner;
    b.labels.assign(ner ? b.rows * b.cols : b.rows, model::kIgnore);
    for (std::size_t r = 0; r < b.rows; ++r) {
        const Example& e = *examples[r];
        std::copy(e.ids.begin(), e.ids.end(), b.ids.begin() + static_cast<std::ptrdiff_t>(r * b.cols));
        std::fill_n(b.mask.begin() + static_cast<std::ptrdiff_t>(r * b.cols), e.ids.size(), 1);
        if (ner) {
            std::copy(e.labels.begin(), e.labels.end(),
                      b.labels.begin() + static_cast<std::ptrdiff_t>(r * b.cols));
        } else {
            b.labels[r] = e.labels.at(0);
        }
    }
    return b;
}

void check_head(const Model<float>& m, const TaskData& data) {
    const std::size_t width = data.task == Task::Ner ? m.config.num_tags : m.config.num_labels;
    if (width != data.num_classes) {
        throw TaskMismatch(std::string(to_string(data.task)) + " data has " +
                           std::to_string(data.num_classes) + " classes but the head has " +
                           std::to_string(width));
    }
}

}  // namespace

Evaluation evaluate(const Model<float>& model, const TaskData& data,
                    std::span<const Example> examples) {
    check_head(model, data);
    Evaluation ev;
    constexpr std::size_t kEvalBatch = 32;
    const std::size_t K = data.num_classes;
    std::vector<std::vector<std::string>> gold;
    for (std::size_t start = 0; start < examples.size(); start += kEvalBatch) {
        std::vector<const Example*> part;
        for (std::size_t i = start; i < std::min(examples.size(), start + kEvalBatch); ++i) {
            part.push_back(&examples[i]);
        }
        const Batch b = make_batch(data, part);
        if (data.task == Task::Ner) {
            const auto logits = model::forward_token_cls<float>(model, b.view(), K);
            for (std::size_t r = 0; r < part.size(); ++r) {
                const Example& e = *part[r];
                std::vector<std::string> tags(e.gold_tags.size(), "O");
                for (std::size_t w = 0; w < e.word_starts.size(); ++w) {
                    const float* row = logits.data() + (r * b.cols + e.word_starts[w]) * K;
                    tags[w] = data.class_names[argmax(row, K)];
                }
                ev.predicted_tags.push_back(std::move(tags));
                gold.push_back(e.gold_tags);
            }
        } else {
            const auto logits = model::forward_seq_cls<float>(model, b.view(), K);
            for (std::size_t r = 0; r < part.size(); ++r) {
                ev.predicted_labels.push_back(static_cast<int>(argmax(logits.data() + r * K, K)));
            }
        }
    }
    if (data.task == Task::Ner) {
        ev.ner = metrics::score_ner(gold, ev.predicted_tags, data.types);
        ev.row = metrics::to_row(*ev.ner);
        ev.micro_f1 = 100.0 * ev.ner->micro.f1;
    } else {
        std::vector<int> labels;
        for (const auto& e : examples) labels.push_back(e.labels.at(0));
        ev.cls = metrics::score_classification(labels, ev.predicted_labels, K,
                                               std::string(to_string(data.task)));
        ev.row = metrics::to_row(*ev.cls);
        ev.micro_f1 = 100.0 * ev.cls->f1;
    }
    return ev;
}

FinetuneResult finetune(const Model<float>& pretrained, const TaskData& data,
                        const FinetuneConfig& config) {
    config.validate();
    if (data.train.empty()) throw TrainingError("training split is empty");
    if (data.validation.empty()) throw TrainingError("validation split is empty");
    for (const auto* part : {&data.train, &data.validation, &data.test}) {
        for (const auto& e : *part) {
            if (e.ids.size() > pretrained.config.max_positions) {
                throw TrainingError("example longer than max_positions");
            }
        }
    }
    FinetuneResult result;
    Model<float>& m = result.model;
    m.config = pretrained.config;
    m.params = pretrained.params;
    {
        Rng head = Rng::derive(config.seed, kHeadStream);
        const std::size_t H = m.config.hidden_dim;
        Tensor<float>& w = data.task == Task::Ner ? m.params.tok_cls_w : m.params.seq_cls_w;
        Tensor<float>& b = data.task == Task::Ner ? m.params.tok_cls_b : m.params.seq_cls_b;
        (data.task == Task::Ner ? m.config.num_tags : m.config.num_labels) = data.num_classes;
        w = Tensor<float>({H, data.num_classes});
        b = Tensor<float>({data.num_classes});
        for (auto& x : w.data) x = static_cast<float>(head.normal() * m.config.init_std);
    }
    m.config.validate();

    const std::size_t n = data.train.size();
    const std::size_t per_epoch = (n + config.batch_size - 1) / config.batch_size;
    const std::size_t total = per_epoch * config.epochs;
    const auto warmup = static_cast<std::size_t>(config.warmup_ratio * static_cast<double>(total));
    AdamW opt(m.config, config.optimizer());
    ModelParams<float> grads = ModelParams<float>::zeros(m.config);
    std::size_t step = 0;
    std::vector<std::size_t> order(n);
    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng rr = Rng::derive(config.seed, kShuffleStream, epoch);
        shuffle(order, rr);
        double loss_sum = 0;
        for (std::size_t start = 0; start < n; start += config.batch_size, ++step) {
            std::vector<const Example*> part;
            for (std::size_t i = start; i < std::min(n, start + config.batch_size); ++i) {
                part.push_back(&data.train[order[i]]);
            }
            const Batch b = make_batch(data, part);
            zero(grads);
            Rng drop = Rng::derive(config.seed, kDropoutStream, step);
            const auto loss =
                data.task == Task::Ner
                    ? model::token_cls_loss<float>(m, b.view(), b.labels, &grads, model::Mode::Train, &drop)
                    : model::seq_cls_loss<float>(m, b.view(), b.labels, &grads, model::Mode::Train, &drop);
            if (!std::isfinite(loss.loss)) {
                Fnv1a h;
                h.update_span(std::span<const TokenId>(b.ids));
                throw NonFiniteLoss(step, h.hex());
            }
            loss_sum += loss.loss;
            if (!loss.empty_warning) {
                opt.step(m.params, grads,
                         learning_rate(step, total, warmup, config.learning_rate));
            }
        }
        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_loss = loss_sum / static_cast<double>(per_epoch);
        rec.validation = evaluate(m, data, data.validation);
        result.epochs.push_back(std::move(rec));
    }
    return result;
}

// ------------------------------------------------------------- grid search

GridSpec GridSpec::ner_default() {
    GridSpec g;
    for (std::size_t e = 1; e <= 20; ++e) g.epochs.push_back(e);
    g.learning_rates = {2e-5, 3e-5, 5e-5};
    g.batch_sizes = {8, 16};
    return g;
}

GridSpec GridSpec::classification_default() {
    GridSpec g = ner_default();
    g.learning_rates = {1e-5, 2e-5, 3e-5, 5e-5};
    return g;
}

void GridSpec::validate() const {
    if (epochs.empty() || learning_rates.empty() || batch_sizes.empty()) {
        throw std::invalid_argument("grid sets must be non-empty");
    }
}

std::vector<FinetuneConfig> GridSpec::points(const FinetuneConfig& base) const {
    validate();
    std::vector<FinetuneConfig> out;
    for (auto e : epochs) {
        for (auto lr : learning_rates) {
            for (auto bs : batch_sizes) {
                FinetuneConfig c = base;
                c.epochs = e;
                c.learning_rate = lr;
                c.batch_size = bs;
                c.validate();
                out.push_back(c);
            }
        }
    }
    return out;
}

std::size_t select_best(std::span<const GridRow> rows) {
    if (rows.empty()) throw std::invalid_argument("empty grid table");
    auto better = [](const GridRow& a, const GridRow& b) {
        if (a.validation_micro_f1 != b.validation_micro_f1) {
            return a.validation_micro_f1 > b.validation_micro_f1;
        }
        if (a.config.epochs != b.config.epochs) return a.config.epochs < b.config.epochs;
        if (a.config.learning_rate != b.config.learning_rate) {
            return a.config.learning_rate < b.config.learning_rate;
        }
        return a.config.batch_size < b.config.batch_size;
    };
    std::size_t best = 0;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        if (better(rows[i], rows[best])) best = i;
    }
    return best;
}

GridResult grid_search(const GridSpec& grid, const FinetuneConfig& base,
                       const GridEvaluator& evaluator) {
    GridResult r;
    for (const auto& point : grid.points(base)) r.table.push_back(evaluator(point));
    r.best_index = select_best(r.table);
    r.best = r.table[r.best_index].config;
    return r;
}

GridResult grid_search(const Model<float>& pretrained, const TaskData& data, const GridSpec& grid,
                       const FinetuneConfig& base) {
    return grid_search(grid, base, [&](const FinetuneConfig& c) {
        auto run = finetune(pretrained, data, c);
        const Evaluation& last = run.epochs.back().validation;
        return GridRow{c, last.micro_f1, last.row};
    });
}

std::string format_grid_table(const GridResult& r) {
    std::string out = "epochs\tlearning_rate\tbatch_size\tval_micro_f1\tbest\n";
    for (std::size_t i = 0; i < r.table.size(); ++i) {
        const auto& row = r.table[i];
        out += std::to_string(row.config.epochs) + '\t' + number(row.config.learning_rate) + '\t' +
               std::to_string(row.config.batch_size) + '\t' + number(row.validation_micro_f1) +
               '\t' + (i == r.best_index ? "*" : "") + '\n';
    }
    return out;
}

// ------------------------------------------------------------- aggregation

MeanStd mean_std(std::span<const double> values) {
    if (values.size() < 2) throw std::invalid_argument("need at least two values");
    double sum = 0;
    for (double v : values) sum += v;
    const double mean = sum / static_cast<double>(values.size());
    double sq = 0;
    for (double v : values) sq += (v - mean) * (v - mean);
    return {mean, std::sqrt(sq / static_cast<double>(values.size() - 1))};
}

SeedAggregate aggregate_seeds(std::span<const RunResult> runs) {
    if (runs.size() < 2) throw TrainingError("aggregation needs at least two runs");
    std::vector<const RunResult*> sorted;
    for (const auto& r : runs) sorted.push_back(&r);
    std::sort(sorted.begin(), sorted.end(),
              [](const RunResult* a, const RunResult* b) { return a->seed < b->seed; });
    const RunResult& first = *sorted.front();
    SeedAggregate agg;
    agg.names = first.test.names;
    for (std::size_t i = 0; i < sorted.size(); ++i) {
        const RunResult& r = *sorted[i];
        if (r.model_name != first.model_name || r.task != first.task ||
            !r.config.same_point(first.config) || r.test.names != first.test.names) {
            throw TrainingError("runs for seeds " + std::to_string(first.seed) + " and " +
                                std::to_string(r.seed) + " have different configurations");
        }
        if (i > 0 && r.seed == sorted[i - 1]->seed) {
            throw TrainingError("seed " + std::to_string(r.seed) + " appears twice");
        }
        agg.seeds.push_back(r.seed);
    }
    std::vector<double> column(sorted.size());
    for (std::size_t k = 0; k < agg.names.size(); ++k) {
        for (std::size_t i = 0; i < sorted.size(); ++i) column[i] = sorted[i]->test.values[k];
        const MeanStd ms = mean_std(column);
        agg.mean.push_back(ms.mean);
        agg.std.push_back(ms.std);
    }
    return agg;
}

std::string format_cell(double mean, double std, int decimals) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "%.*f (%.*f%%)", decimals, mean, decimals, std);
    return buf;
}

std::string results_tsv(std::span<const RunResult> runs) {
    if (runs.empty()) return {};
    const auto& names = runs.front().test.names;
    std::string out = "model\ttask\tepochs\tlearning_rate\tbatch_size\tseed";
    for (const auto& n : runs.front().validation.names) out += "\tval." + n;
    for (const auto& n : names) out += "\ttest." + n;
    out += '\n';
    for (const auto& r : runs) {
        if (r.test.names != names || r.validation.names != runs.front().validation.names) {
            throw TrainingError("runs with different metric columns cannot share a table");
        }
        out += r.model_name + '\t' + std::string(to_string(r.task)) + '\t' +
               std::to_string(r.config.epochs) + '\t' + number(r.config.learning_rate) + '\t' +
               std::to_string(r.config.batch_size) + '\t' + std::to_string(r.seed);
        for (double v : r.validation.values) out += '\t' + number(v);
        for (double v : r.test.values) out += '\t' + number(v);
        out += '\n';
    }
    return out;
}

std::vector<RunResult> parse_results_tsv(std::string_view text) {
    std::vector<RunResult> runs;
    std::istringstream in{std::string(text)};
    std::string line;
    std::vector<std::string> val_names;
    std::vector<std::string> test_names;
    std::vector<char> kinds;  // 'v' or 't' per metric column
    std::size_t lineno = 0;
    bool header = false;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        const auto cols = split_tabs(line);
        if (!header) {
            static const char* fixed[] = {"model", "task", "epochs", "learning_rate", "batch_size", "seed"};
            if (cols.size() < 6) throw TrainingError("results header is too short");
            for (std::size_t i = 0; i < 6; ++i) {
                if (cols[i] != fixed[i]) {
                    throw TrainingError("results header column " + std::to_string(i + 1) +
                                        " should be '" + fixed[i] + "'");
                }
            }
            for (std::size_t i = 6; i < cols.size(); ++i) {
                if (cols[i].starts_with("val.")) {
                    val_names.emplace_back(cols[i].substr(4));
                    kinds.push_back('v');
                } else if (cols[i].starts_with("test.")) {
                    test_names.emplace_back(cols[i].substr(5));
                    kinds.push_back('t');
                } else {
                    throw TrainingError("unknown results column '" + std::string(cols[i]) + "'");
                }
            }
            header = true;
            continue;
        }
        if (cols.size() != 6 + kinds.size()) {
            throw TrainingError("results line " + std::to_string(lineno) + " has " +
                                std::to_string(cols.size()) + " columns");
        }
        RunResult r;
        r.model_name = std::string(cols[0]);
        r.task = parse_task(cols[1]);
        r.config.epochs = parse_uint(cols[2], lineno);
        r.config.learning_rate = parse_number(cols[3], lineno);
        r.config.batch_size = parse_uint(cols[4], lineno);
        r.seed = parse_uint(cols[5], lineno);
        r.config.seed = r.seed;
        r.validation.names = val_names;
        r.test.names = test_names;
        for (std::size_t i = 0; i < kinds.size(); ++i) {
            const double v = parse_number(cols[6 + i], lineno);
            (kinds[i] == 'v' ? r.validation.values : r.test.values).push_back(v);
        }
        runs.push_back(std::move(r));
    }
    if (!header) throw TrainingError("results table has no header");
    return runs;
}

std::string render_report(std::span<const RunResult> runs) {
    // Group by (model, task, grid point) in first-appearance order.
    std::vector<std::vector<RunResult>> groups;
    for (const auto& r : runs) {
        auto it = std::find_if(groups.begin(), groups.end(), [&](const auto& g) {
            return g.front().model_name == r.model_name && g.front().task == r.task &&
                   g.front().config.same_point(r.config);
        });
        if (it == groups.end()) {
            groups.push_back({r});
        } else {
            it->push_back(r);
        }
    }
    std::string out;
    std::string last_header;
    for (const auto& g : groups) {
        const SeedAggregate agg = aggregate_seeds(g);
        const bool ner = g.front().task == Task::Ner;
        std::string header = ner ? "model" : "model\ttask";
        for (const auto& n : agg.names) header += '\t' + n;
        if (header != last_header) {
            if (!out.empty()) out += '\n';
            out += header + '\n';
            last_header = header;
        }
        out += g.front().model_name;
        if (!ner) out += '\t' + std::string(to_string(g.front().task));
        for (std::size_t k = 0; k < agg.names.size(); ++k) {
            if (ner) {
                out += '\t' + format_cell(agg.mean[k], agg.std[k], 1);
            } else {
                char buf[32];
                std::snprintf(buf, sizeof buf, "%.2f", agg.mean[k]);
                out += '\t';
                out += buf;
            }
        }
        out += '\n';
    }
    return out;
}

}  // namespace nomos::training
