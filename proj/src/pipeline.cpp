#include "nomos/pipeline.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "nomos/checkpoint.hpp"
#include "nomos/corpus.hpp"
#include "nomos/hash.hpp"

namespace nomos::pipeline {

using nlohmann::ordered_json;
using training::Task;

namespace {

std::string join(const std::vector<std::string>& v) {
    std::string out;
    for (const auto& s : v) out += (out.empty() ? "" : ", ") + s;
    return out;
}

void write_text(const fs::path& file, const std::string& text) {
    fs::create_directories(file.parent_path());
    std::ofstream out(file, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + file.string());
    out << text;
    if (!out) throw std::runtime_error("write failed: " + file.string());
}

std::string read_text(const fs::path& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + file.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void say(const Context& ctx, const std::string& line) {
    if (ctx.log != nullptr) *ctx.log << line << '\n' << std::flush;
}

std::string number(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

corpus::Level level_of(Task t) {
    switch (t) {
        case Task::Volume: return corpus::Level::Volume;
        case Task::Chapter: return corpus::Level::Chapter;
        default: return corpus::Level::Subject;
    }
}

tokenizer::TokenizerModel load_tokenizer(const Context& ctx) {
    if (!fs::exists(ctx.layout.tokenizer() / "vocab.txt")) {
        throw std::runtime_error("missing tokenizer: " + ctx.layout.tokenizer().string() +
                                 " (run tokenizer-train first)");
    }
    return tokenizer::TokenizerModel::load(ctx.layout.tokenizer());
}

checkpoint::Loaded load_checkpoint(const fs::path& dir) {
    if (!fs::exists(dir / "config.json")) throw std::runtime_error("missing checkpoint: " + dir.string());
    return checkpoint::load(dir);
}

void require_path(const fs::path& p, const char* key) {
    if (p.empty()) throw config::ConfigError(key, "is required for this command");
    if (!fs::exists(p)) throw std::runtime_error("missing file: " + p.string());
}

}  // namespace

CorruptionError::CorruptionError(std::vector<std::string> sources)
    : std::runtime_error("documents over the corruption threshold: " + join(sources)),
      sources_(std::move(sources)) {}

fs::path default_output_root() {
    const char* env = std::getenv(kOutputRootEnv);
    return env != nullptr && *env != '\0' ? fs::path(env) : fs::path("nomos-runs");
}

fs::path Layout::finetune(Task t) const { return root / "finetune" / std::string(training::to_string(t)); }
fs::path Layout::finetuned_checkpoint(Task t, std::uint64_t seed) const {
    return finetune(t) / ("seed-" + std::to_string(seed)) / "checkpoint";
}
fs::path Layout::grid(Task t) const { return root / "grid" / std::string(training::to_string(t)); }
fs::path Layout::evaluate(Task t) const { return root / "evaluate" / std::string(training::to_string(t)); }

std::string file_fingerprint(const fs::path& file) { return fingerprint(read_text(file)); }

void write_run_descriptor(const fs::path& dir, const std::string& stage, const Context& ctx,
                          const std::map<std::string, std::string>& inputs) {
    ordered_json j;
    j["stage"] = stage;
    j["config"] = config::to_json(ctx.config);
    ordered_json in = ordered_json::object();
    for (const auto& [k, v] : inputs) in[k] = v;
    j["inputs"] = in;
    write_text(dir / "run.json", j.dump(2) + "\n");
}

fs::path corpus_manifest(const Context& ctx) {
    if (fs::exists(ctx.layout.normalized_manifest())) return ctx.layout.normalized_manifest();
    if (ctx.config.data.manifest.empty()) {
        throw config::ConfigError("data.manifest", "is required when normalize has not run");
    }
    return ctx.config.data.manifest;
}

std::vector<std::string> load_corpus_lines(const Context& ctx, const fs::path& manifest) {
    const auto m = corpus::load_manifest(manifest);
    const auto docs = corpus::read_documents(m);
    std::vector<textnorm::DocumentReport> reports;
    const auto normalized = textnorm::normalize_documents(docs, ctx.config.normalization, &reports,
                                                          ctx.config.corruption_threshold, ctx.jobs);
    std::vector<std::string> bad;
    for (const auto& r : reports) {
        if (r.corrupted) bad.push_back(r.source_id);
    }
    if (!bad.empty()) throw CorruptionError(bad);
    std::vector<std::string> lines;
    for (const auto& d : normalized) {
        std::istringstream in(d.text);
        std::string line;
        while (std::getline(in, line)) {
            if (!line.empty()) lines.push_back(line);
        }
    }
    return lines;
}

int normalize(const Context& ctx, const fs::path& manifest_path) {
    const auto manifest = corpus::load_manifest(manifest_path);
    const auto docs = corpus::read_documents(manifest);
    std::vector<textnorm::DocumentReport> reports;
    const auto normalized = textnorm::normalize_documents(docs, ctx.config.normalization, &reports,
                                                          ctx.config.corruption_threshold, ctx.jobs);
    const fs::path dir = ctx.layout.normalized();
    fs::create_directories(dir);
    std::string report;
    corpus::CorpusManifest out;
    std::vector<std::string> bad;
    for (std::size_t i = 0; i < normalized.size(); ++i) {
        report += textnorm::report_line(reports[i]) + '\n';
        if (reports[i].corrupted) {
            bad.push_back(reports[i].source_id);
            continue;
        }
        const auto& e = manifest.entries[i];
        const fs::path file = dir / (e.name + ".txt");
        const std::string text = normalized[i].text + '\n';
        write_text(file, text);
        corpus::ManifestEntry oe = e;
        oe.path = file;
        oe.declared_encoding = textnorm::Encoding::Utf8;
        oe.size_bytes = text.size();
        out.entries.push_back(oe);
    }
    write_text(dir / "report.jsonl", report);
    write_text(ctx.layout.normalized_manifest(), corpus::serialize_manifest(out, dir));
    write_run_descriptor(dir, "normalize", ctx, {{"manifest", file_fingerprint(manifest_path)}});
    say(ctx, "normalized " + std::to_string(out.entries.size()) + " of " +
                 std::to_string(docs.size()) + " documents");
    if (!bad.empty()) {
        say(ctx, "over the corruption threshold: " + join(bad));
        return kCorrupted;
    }
    return kOk;
}

void tokenizer_train(const Context& ctx, const fs::path& manifest, std::size_t vocab_size,
                     const fs::path& out_dir) {
    const auto lines = load_corpus_lines(ctx, manifest);
    if (lines.empty()) throw std::runtime_error("tokenizer corpus is empty");
    tokenizer::TrainOptions opts;
    opts.jobs = ctx.jobs;
    const auto result = tokenizer::train_bpe(lines, vocab_size, opts);
    if (result.exhausted) {
        say(ctx, "warning: corpus exhausted at " + std::to_string(result.actual_size) +
                     " tokens (requested " + std::to_string(vocab_size) + ")");
    }
    result.model.save(out_dir);
    write_run_descriptor(out_dir, "tokenizer-train", ctx,
                         {{"manifest", file_fingerprint(manifest)},
                          {"tokenizer", result.model.fingerprint()}});
    say(ctx, "tokenizer: " + std::to_string(result.actual_size) + " tokens, fingerprint " +
                 result.model.fingerprint());
}

training::PretrainResult pretrain(const Context& ctx, const fs::path& manifest,
                                  const PretrainOptions& options) {
    const auto& cfg = ctx.config;
    const auto tok = load_tokenizer(ctx);
    const auto lines = load_corpus_lines(ctx, manifest);
    std::vector<std::vector<tokenizer::TokenId>> docs(lines.size());
    const auto n = static_cast<std::ptrdiff_t>(lines.size());
#pragma omp parallel for schedule(dynamic, 16)
    for (std::ptrdiff_t i = 0; i < n; ++i) docs[i] = tok.encode_ids(lines[i]);

    training::PackedCorpus data;
    data.sequences = corpus::pack_sequences(docs, cfg.pretrain.max_len);
    data.tokenizer_fingerprint = tok.fingerprint();

    model::ModelConfig mc = cfg.model;
    mc.vocab_size = tok.size();
    mc.num_tags = cfg.data.entity_types.tag_set().size();
    auto model = model::init<float>(mc, cfg.pretrain.config.seed);

    if (options.dump_batch != nullptr) {
        const auto batch = training::pretrain_batch(data, cfg.masking, mc.vocab_size,
                                                    cfg.pretrain.config, 0, ctx.jobs);
        *options.dump_batch << masking::format_batch(batch, &tok, options.dump_rows);
    }
    say(ctx, "pretraining on " + std::to_string(data.sequences.size()) + " sequences of " +
                 std::to_string(cfg.pretrain.max_len) + " tokens");
    auto result = training::pretrain(std::move(model), tok.fingerprint(), data, cfg.masking,
                                     cfg.pretrain.config, ctx.jobs,
                                     [&](const training::LossPoint& p) {
                                         say(ctx, "step " + std::to_string(p.step) + " loss " +
                                                      number(p.loss));
                                     });

    checkpoint::Descriptor d;
    d.config = result.model.config;
    d.tokenizer_fingerprint = tok.fingerprint();
    d.task = "mlm";
    d.optimizer = cfg.pretrain.config.optimizer().to_json();
    d.extra = {{"pretrain", cfg.pretrain.config.to_json()},
               {"smoothed_loss", result.smoothed_loss}};
    checkpoint::save(ctx.layout.pretrained_checkpoint(), result.model, d);
    std::string curve = "step\tloss\n";
    for (const auto& p : result.curve) curve += std::to_string(p.step) + '\t' + number(p.loss) + '\n';
    write_text(ctx.layout.pretrain() / "loss.tsv", curve);
    write_run_descriptor(ctx.layout.pretrain(), "pretrain", ctx,
                         {{"manifest", file_fingerprint(manifest)},
                          {"tokenizer", tok.fingerprint()}});
    say(ctx, "smoothed loss " + number(result.smoothed_loss));
    return result;
}

training::TaskData load_task_data(const Context& ctx, Task task,
                                  const tokenizer::TokenizerModel& tok) {
    const auto& cfg = ctx.config;
    if (task == Task::Ner) {
        require_path(cfg.data.ner, "data.ner");
        const auto sentences = corpus::load_iob(cfg.data.ner, cfg.data.entity_types, cfg.data.repair_iob);
        const auto split = corpus::split<corpus::NerSentence>(sentences, cfg.data.split);
        return training::make_ner_data(tok, cfg.normalization, split, cfg.data.entity_types,
                                       cfg.finetune.max_len);
    }
    require_path(cfg.data.hierarchy, "data.hierarchy");
    require_path(cfg.data.classification, "data.classification");
    const auto hierarchy = corpus::load_hierarchy(cfg.data.hierarchy);
    const auto records = corpus::load_classification(cfg.data.classification, hierarchy);
    const auto split = corpus::split<corpus::ClassificationRecord>(records, cfg.data.split);
    return training::make_cls_data(tok, cfg.normalization, split, hierarchy, level_of(task),
                                   cfg.finetune.max_len);
}

namespace {

struct Prepared {
    tokenizer::TokenizerModel tok;
    checkpoint::Loaded pretrained;
    training::TaskData data;
};

Prepared prepare(const Context& ctx, Task task) {
    Prepared p{load_tokenizer(ctx), load_checkpoint(ctx.layout.pretrained_checkpoint()), {}};
    if (p.pretrained.descriptor.tokenizer_fingerprint != p.tok.fingerprint()) {
        throw std::runtime_error("pretrained checkpoint was built with tokenizer " +
                                 p.pretrained.descriptor.tokenizer_fingerprint + ", found " +
                                 p.tok.fingerprint());
    }
    p.data = load_task_data(ctx, task, p.tok);
    return p;
}

std::string epochs_table(const std::vector<training::EpochRecord>& epochs) {
    std::string out = "epoch\ttrain_loss";
    for (const auto& n : epochs.front().validation.row.names) out += "\tval." + n;
    out += '\n';
    for (const auto& e : epochs) {
        out += std::to_string(e.epoch) + '\t' + number(e.train_loss);
        for (double v : e.validation.row.values) out += '\t' + number(v);
        out += '\n';
    }
    return out;
}

}  // namespace

void finetune(const Context& ctx, Task task) {
    const Prepared p = prepare(ctx, task);
    for (std::uint64_t seed : ctx.config.finetune.seeds) {
        training::FinetuneConfig fc = ctx.config.finetune.config;
        fc.seed = seed;
        say(ctx, std::string(training::to_string(task)) + " seed " + std::to_string(seed));
        auto r = training::finetune(p.pretrained.model, p.data, fc);
        checkpoint::Descriptor d;
        d.config = r.model.config;
        d.tokenizer_fingerprint = p.tok.fingerprint();
        d.task = std::string(training::to_string(task));
        d.optimizer = fc.optimizer().to_json();
        d.extra = {{"finetune", fc.to_json()}, {"data", p.data.fingerprint()}};
        const fs::path ck = ctx.layout.finetuned_checkpoint(task, seed);
        checkpoint::save(ck, r.model, d);
        write_text(ck.parent_path() / "epochs.tsv", epochs_table(r.epochs));
        say(ctx, "  validation micro F1 " + number(r.epochs.back().validation.micro_f1));
    }
    write_run_descriptor(ctx.layout.finetune(task), "finetune", ctx,
                         {{"pretrained", file_fingerprint(ctx.layout.pretrained_checkpoint() / "tensors.bin")},
                          {"data", p.data.fingerprint()},
                          {"tokenizer", p.tok.fingerprint()}});
}

training::GridResult grid_search(const Context& ctx, Task task) {
    const Prepared p = prepare(ctx, task);
    const auto points = ctx.config.grid.points(ctx.config.finetune.config);
    std::size_t done = 0;
    auto result = training::grid_search(
        ctx.config.grid, ctx.config.finetune.config, [&](const training::FinetuneConfig& c) {
            auto run = training::finetune(p.pretrained.model, p.data, c);
            const auto& last = run.epochs.back().validation;
            say(ctx, "grid " + std::to_string(++done) + "/" + std::to_string(points.size()) +
                         ": micro F1 " + number(last.micro_f1));
            return training::GridRow{c, last.micro_f1, last.row};
        });
    const fs::path dir = ctx.layout.grid(task);
    write_text(dir / "grid.tsv", training::format_grid_table(result));
    write_text(dir / "best.json", result.best.to_json().dump(2) + "\n");
    write_run_descriptor(dir, "grid-search", ctx,
                         {{"pretrained", file_fingerprint(ctx.layout.pretrained_checkpoint() / "tensors.bin")},
                          {"data", p.data.fingerprint()}});
    return result;
}

std::vector<training::RunResult> evaluate(const Context& ctx, Task task,
                                          const std::optional<fs::path>& single) {
    const auto tok = load_tokenizer(ctx);
    const auto data = load_task_data(ctx, task, tok);
    if (data.test.empty()) throw std::runtime_error("test split is empty");
    std::vector<std::pair<std::uint64_t, fs::path>> targets;
    if (single) {
        targets.emplace_back(ctx.config.finetune.config.seed, *single);
    } else {
        for (auto seed : ctx.config.finetune.seeds) {
            targets.emplace_back(seed, ctx.layout.finetuned_checkpoint(task, seed));
        }
    }
    std::vector<training::RunResult> runs;
    const fs::path dir = ctx.layout.evaluate(task);
    std::map<std::string, std::string> inputs{{"data", data.fingerprint()}};
    for (const auto& [seed, path] : targets) {
        const auto ck = load_checkpoint(path);
        if (ck.descriptor.task != training::to_string(task)) {
            throw training::TaskMismatch("checkpoint " + path.string() + " was fine-tuned for '" +
                                         ck.descriptor.task + "', not '" +
                                         std::string(training::to_string(task)) + "'");
        }
        if (ck.descriptor.tokenizer_fingerprint != tok.fingerprint()) {
            throw std::runtime_error("checkpoint " + path.string() + " uses a different tokenizer");
        }
        std::uint64_t run_seed = seed;
        if (ck.descriptor.extra.contains("finetune")) {
            run_seed = ck.descriptor.extra["finetune"].value("seed", seed);
        }
        const auto val = training::evaluate(ck.model, data, data.validation);
        const auto test = training::evaluate(ck.model, data, data.test);
        training::RunResult r;
        r.model_name = ctx.config.finetune.model_name;
        r.task = task;
        r.config = ctx.config.finetune.config;
        r.config.seed = run_seed;
        r.seed = run_seed;
        r.validation = val.row;
        r.test = test.row;
        runs.push_back(r);
        if (test.ner) {
            write_text(dir / ("seed-" + std::to_string(run_seed) + ".tsv"),
                       metrics::format_ner_table(*test.ner));
        }
        inputs["checkpoint.seed-" + std::to_string(run_seed)] = file_fingerprint(path / "tensors.bin");
        say(ctx, "seed " + std::to_string(run_seed) + ": test micro F1 " + number(test.micro_f1));
    }
    write_text(ctx.layout.results(task), training::results_tsv(runs));
    write_run_descriptor(dir, "evaluate", ctx, inputs);
    return runs;
}

std::string report(const Context& ctx, const fs::path& results, const fs::path& out_file) {
    if (!fs::exists(results)) throw std::runtime_error("missing file: " + results.string());
    const auto runs = training::parse_results_tsv(read_text(results));
    const std::string text = training::render_report(runs);
    write_text(out_file, text);
    write_run_descriptor(out_file.parent_path(), "report", ctx,
                         {{"results", file_fingerprint(results)}});
    return text;
}

}  // namespace nomos::pipeline
