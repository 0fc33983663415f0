// nomos: command-line driver for the normalization, tokenizer, pretraining
// and fine-tuning pipeline.

#include <omp.h>

#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "nomos/checkpoint.hpp"
#include "nomos/config.hpp"
#include "nomos/corpus.hpp"
#include "nomos/pipeline.hpp"

namespace fs = std::filesystem;
using namespace nomos;

namespace {

struct Common {
    std::string config;
    std::string out;
    int jobs = 0;
    bool quiet = false;
};

void add_common(CLI::App* cmd, Common& c) {
    cmd->add_option("-c,--config", c.config, "run configuration (JSON)");
    cmd->add_option("-o,--out", c.out, "output root (default: $NOMOS_OUTPUT_ROOT or ./nomos-runs)");
    cmd->add_option("-j,--jobs", c.jobs, "worker threads (0 = all)")->check(CLI::NonNegativeNumber);
    cmd->add_flag("-q,--quiet", c.quiet, "no progress output");
}

pipeline::Context make_context(const Common& c) {
    pipeline::Context ctx;
    ctx.config = c.config.empty() ? config::RunConfig{} : config::load_run_config(c.config);
    if (c.config.empty()) ctx.config.validate();
    fs::path root = !c.out.empty()                     ? fs::path(c.out)
                    : !ctx.config.output_dir.empty() ? ctx.config.output_dir
                                                       : pipeline::default_output_root();
    ctx.config.output_dir = fs::absolute(root);
    ctx.layout.root = ctx.config.output_dir;
    ctx.jobs = c.jobs;
    ctx.log = c.quiet ? nullptr : &std::cerr;
    if (c.jobs > 0) omp_set_num_threads(c.jobs);
    return ctx;
}

training::Task task_of(const pipeline::Context& ctx, const std::string& flag) {
    return flag.empty() ? ctx.config.finetune.task : training::parse_task(flag);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"nomos: Greek legal text pipeline"};
    app.require_subcommand(1);

    Common common;
    std::string manifest;
    std::size_t vocab_size = 0;
    bool dump_batch = false;
    std::size_t dump_rows = 1;
    std::string task;
    std::string checkpoint_dir;
    std::string results;

    auto* normalize = app.add_subcommand("normalize", "transcode and normalize a corpus manifest");
    add_common(normalize, common);
    normalize->add_option("-m,--manifest", manifest, "corpus manifest (default: data.manifest)");

    auto* tok = app.add_subcommand("tokenizer-train", "train the byte-level BPE tokenizer");
    add_common(tok, common);
    tok->add_option("-i,--input", manifest, "corpus manifest");
    tok->add_option("--vocab-size", vocab_size, "target vocabulary size (specials included)");

    auto* pre = app.add_subcommand("pretrain", "masked-LM pretraining");
    add_common(pre, common);
    pre->add_option("-i,--input", manifest, "corpus manifest");
    pre->add_flag("--dump-masked-batch", dump_batch, "print the first masked batch");
    pre->add_option("--dump-rows", dump_rows, "rows shown by --dump-masked-batch");

    auto* fine = app.add_subcommand("finetune", "fine-tune one model per configured seed");
    add_common(fine, common);
    fine->add_option("-t,--task", task, "ner | volume | chapter | subject");

    auto* grid = app.add_subcommand("grid-search", "fine-tuning hyperparameter grid");
    add_common(grid, common);
    grid->add_option("-t,--task", task, "ner | volume | chapter | subject");

    auto* eval = app.add_subcommand("evaluate", "score fine-tuned checkpoints");
    add_common(eval, common);
    eval->add_option("-t,--task", task, "ner | volume | chapter | subject");
    eval->add_option("--checkpoint", checkpoint_dir, "score this checkpoint only");

    auto* rep = app.add_subcommand("report", "render seed-aggregated result tables");
    add_common(rep, common);
    rep->add_option("-t,--task", task, "task whose results to render");
    rep->add_option("-r,--results", results, "results table (default: evaluate/<task>/results.tsv)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : pipeline::kFailure;
    }

    try {
        pipeline::Context ctx = make_context(common);
        if (normalize->parsed()) {
            const fs::path m = manifest.empty() ? ctx.config.data.manifest : fs::path(manifest);
            if (m.empty()) throw config::ConfigError("data.manifest", "no manifest given");
            return pipeline::normalize(ctx, m);
        }
        if (tok->parsed()) {
            if (vocab_size != 0) ctx.config.vocab_size = vocab_size;
            ctx.config.validate();
            const fs::path m = manifest.empty() ? pipeline::corpus_manifest(ctx) : fs::path(manifest);
            pipeline::tokenizer_train(ctx, m, ctx.config.vocab_size, ctx.layout.tokenizer());
            return pipeline::kOk;
        }
        if (pre->parsed()) {
            const fs::path m = manifest.empty() ? pipeline::corpus_manifest(ctx) : fs::path(manifest);
            pipeline::PretrainOptions opts;
            if (dump_batch) opts.dump_batch = &std::cout;
            opts.dump_rows = dump_rows;
            pipeline::pretrain(ctx, m, opts);
            return pipeline::kOk;
        }
        if (fine->parsed()) {
            pipeline::finetune(ctx, task_of(ctx, task));
            return pipeline::kOk;
        }
        if (grid->parsed()) {
            const auto r = pipeline::grid_search(ctx, task_of(ctx, task));
            std::cout << training::format_grid_table(r);
            return pipeline::kOk;
        }
        if (eval->parsed()) {
            std::optional<fs::path> single;
            if (!checkpoint_dir.empty()) single = fs::path(checkpoint_dir);
            pipeline::evaluate(ctx, task_of(ctx, task), single);
            return pipeline::kOk;
        }
        if (rep->parsed()) {
            const auto t = task_of(ctx, task);
            const fs::path in = results.empty() ? ctx.layout.results(t) : fs::path(results);
            std::cout << pipeline::report(ctx, in, ctx.layout.report() / "report.txt");
            return pipeline::kOk;
        }
    } catch (const pipeline::CorruptionError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return pipeline::kCorrupted;
    } catch (const training::TaskMismatch& e) {
        std::cerr << "error: " << e.what() << '\n';
        return pipeline::kTaskMismatch;
    } catch (const config::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return pipeline::kFailure;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return pipeline::kFailure;
    }
    return pipeline::kFailure;
}
