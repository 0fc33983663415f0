#include <cmath>
#include <limits>

#include "doctest.h"
#include "nomos/training.hpp"

using namespace nomos;
using namespace nomos::training;

namespace {

tokenizer::TokenizerModel tiny_tokenizer() {
    const std::vector<std::string> lines = {
        "ο υπουργος αποφασιζει για την αθηνα", "η εταιρεια εδρευει στην αθηνα",
        "ο νομος 4412 ισχυει", "ο γεωργιος παπαδοπουλος ειναι υπουργος"};
    return tokenizer::train_bpe(lines, 300).model;
}

model::ModelConfig tiny_model(std::size_t vocab) {
    model::ModelConfig c;
    c.num_layers = 1;
    c.hidden_dim = 16;
    c.num_heads = 2;
    c.ffn_dim = 32;
    c.vocab_size = vocab;
    c.max_positions = 24;
    c.dropout = 0.1;
    return c;
}

corpus::NerSentence sentence(std::vector<std::string> tokens, std::vector<std::string> tags) {
    return {std::move(tokens), std::move(tags)};
}

TaskData tiny_ner(const tokenizer::TokenizerModel& tok) {
    corpus::Split<corpus::NerSentence> split;
    split.train = {sentence({"Ο", "Υπουργός", "στην", "Αθήνα"}, {"O", "B-PERSON", "O", "B-GPE"}),
                   sentence({"Η", "εταιρεία", "ΑΒΓ"}, {"O", "O", "B-ORG"}),
                   sentence({"ο", "νόμος", "4412"}, {"O", "B-LEG-REF", "I-LEG-REF"})};
    split.val = split.train;
    split.test = split.train;
    return make_ner_data(tok, {}, split, {}, 24);
}

PackedCorpus tiny_corpus(const tokenizer::TokenizerModel& tok) {
    std::vector<std::vector<tokenizer::TokenId>> docs;
    for (const char* line : {"ο υπουργος αποφασιζει", "η εταιρεια εδρευει στην αθηνα",
                             "ο νομος 4412 ισχυει", "ο γεωργιος ειναι υπουργος"}) {
        docs.push_back(tok.encode(line).ids);
    }
    return {corpus::pack_sequences(docs, 24), tok.fingerprint()};
}

RunResult run(std::string model, Task task, std::uint64_t seed, std::vector<double> values) {
    RunResult r;
    r.model_name = std::move(model);
    r.task = task;
    r.seed = seed;
    r.config.epochs = 3;
    r.config.learning_rate = 5e-5;
    r.config.batch_size = 8;
    r.validation = {{"micro"}, {values.front()}};
    std::vector<std::string> names;
    for (std::size_t i = 0; i < values.size(); ++i) names.push_back("m" + std::to_string(i));
    r.test = {names, values};
    return r;
}

}  // namespace

TEST_CASE("learning rate schedule") {
    CHECK(learning_rate(0, 100, 10, 1.0) == doctest::Approx(0.1));
    CHECK(learning_rate(9, 100, 10, 1.0) == doctest::Approx(1.0));
    CHECK(learning_rate(10, 100, 10, 1.0) == doctest::Approx(1.0));
    CHECK(learning_rate(55, 100, 10, 1.0) == doctest::Approx(0.5));
    CHECK(learning_rate(99, 100, 10, 1.0) == doctest::Approx(1.0 / 90));
    CHECK(learning_rate(100, 100, 10, 1.0) == 0.0);
    CHECK(learning_rate(0, 10, 0, 2.0) == doctest::Approx(2.0));
}

TEST_CASE("norms and clipping") {
    auto c = tiny_model(300);
    auto params = model::init<float>(c, 1).params;
    auto grads = model::ModelParams<float>::zeros(c);
    CHECK(global_norm(grads) == 0.0);
    grads.tok_emb.data[0] = 3.0f;
    grads.tok_emb.data[1] = 4.0f;
    CHECK(global_norm(grads) == doctest::Approx(5.0));

    const auto before = params;
    OptimizerConfig o;
    o.weight_decay = 0;
    AdamW opt(c, o);
    CHECK(opt.step(params, grads, 0.1) == doctest::Approx(5.0));
    CHECK(opt.steps_taken() == 1);
    // The first Adam step moves each non-zero coordinate by about lr.
    CHECK(before.tok_emb.data[0] - params.tok_emb.data[0] == doctest::Approx(0.1).epsilon(1e-3));
    CHECK(before.tok_emb.data[1] - params.tok_emb.data[1] == doctest::Approx(0.1).epsilon(1e-3));
    CHECK(params.tok_emb.data[2] == before.tok_emb.data[2]);
    CHECK(global_norm(grads) == doctest::Approx(1.0));  // clipped in place
    zero(grads);
    CHECK(global_norm(grads) == 0.0);
}

TEST_CASE("presets and validation") {
    const auto v1 = PretrainConfig::preset("v1");
    CHECK(v1.steps == 100000);
    CHECK(v1.batch_size == 1024);
    CHECK(PretrainConfig::preset("v2").batch_size == 4096);
    CHECK(PretrainConfig::preset("bert-style").steps == 1000000);
    CHECK_THROWS(PretrainConfig::preset("v3"));
    PretrainConfig bad;
    bad.warmup_steps = bad.steps + 1;
    CHECK_THROWS(bad.validate());
    CHECK(parse_task("chapter") == Task::Chapter);
    CHECK_THROWS(parse_task("pos"));
    CHECK(GridSpec::ner_default().size() == 120);
    CHECK(GridSpec::classification_default().size() == 160);
}

TEST_CASE("grid selection tie-breaks") {
    auto row = [](std::size_t e, double lr, std::size_t b, double f1) {
        GridRow r;
        r.config.epochs = e;
        r.config.learning_rate = lr;
        r.config.batch_size = b;
        r.validation_micro_f1 = f1;
        return r;
    };
    std::vector<GridRow> rows{row(3, 5e-5, 16, 80), row(2, 5e-5, 16, 80), row(2, 3e-5, 16, 80),
                              row(2, 3e-5, 8, 80), row(5, 2e-5, 8, 79.9)};
    CHECK(select_best(rows) == 3);
    rows.push_back(row(20, 5e-5, 16, 80.1));
    CHECK(select_best(rows) == 5);

    GridSpec g{{1, 2}, {1e-5, 2e-5}, {8}};
    const auto pts = g.points({});
    REQUIRE(pts.size() == 4);
    CHECK(pts[1].epochs == 1);
    CHECK(pts[1].learning_rate == 2e-5);
    CHECK(pts[2].epochs == 2);
    std::size_t calls = 0;
    const auto r = grid_search(g, {}, [&](const FinetuneConfig& c) {
        ++calls;
        return row(c.epochs, c.learning_rate, c.batch_size, c.epochs == 2 ? 50.0 : 40.0);
    });
    CHECK(calls == 4);
    CHECK(r.best_index == 2);
}

TEST_CASE("seed aggregation") {
    const std::vector<double> v{70, 80};
    const auto ms = mean_std(v);
    CHECK(ms.mean == 75.0);
    CHECK(ms.std == doctest::Approx(7.0710678118654755));
    CHECK(format_cell(ms.mean, ms.std) == "75.0 (7.1%)");
    CHECK_THROWS(mean_std(std::vector<double>{1.0}));

    std::vector<RunResult> runs{run("a", Task::Ner, 3, {80, 1}), run("a", Task::Ner, 1, {70, 2})};
    const auto agg = aggregate_seeds(runs);
    CHECK(agg.seeds == std::vector<std::uint64_t>{1, 3});
    CHECK(agg.mean == std::vector<double>{75, 1.5});

    CHECK_THROWS_AS(aggregate_seeds(std::span(runs).first(1)), TrainingError);
    runs.push_back(run("a", Task::Ner, 1, {70, 2}));
    CHECK_THROWS_AS(aggregate_seeds(runs), TrainingError);
    runs.back() = run("b", Task::Ner, 2, {70, 2});
    CHECK_THROWS_AS(aggregate_seeds(runs), TrainingError);
}

TEST_CASE("results table roundtrips and renders") {
    std::vector<RunResult> runs{run("a", Task::Ner, 1, {70, 60}), run("a", Task::Ner, 2, {80, 63}),
                                run("b", Task::Ner, 1, {50, 50}), run("b", Task::Ner, 2, {50, 50})};
    const auto text = results_tsv(runs);
    CHECK(text.rfind("model\ttask\tepochs\tlearning_rate\tbatch_size\tseed\tval.micro\ttest.m0\ttest.m1\n", 0) == 0);
    const auto back = parse_results_tsv(text);
    REQUIRE(back.size() == 4);
    CHECK(back[1].test.values == runs[1].test.values);
    CHECK(back[1].config.same_point(runs[1].config));
    CHECK(results_tsv(back) == text);

    const auto report = render_report(back);
    CHECK(report == "model\tm0\tm1\na\t75.0 (7.1%)\t61.5 (2.1%)\nb\t50.0 (0.0%)\t50.0 (0.0%)\n");
}

TEST_CASE("pretraining is deterministic and logs the curve") {
    const auto tok = tiny_tokenizer();
    const auto data = tiny_corpus(tok);
    PretrainConfig pc;
    pc.steps = 12;
    pc.batch_size = 2;
    pc.warmup_steps = 2;
    pc.log_every = 4;
    pc.seed = 3;
    const auto m = model::init<float>(tiny_model(tok.size()), 3);
    std::size_t logged = 0;
    const auto a = pretrain(m, tok.fingerprint(), data, {}, pc, 1, [&](const LossPoint&) { ++logged; });
    const auto b = pretrain(m, tok.fingerprint(), data, {}, pc, 2);
    CHECK(a.curve.size() == 3);
    CHECK(logged == 3);
    CHECK(a.curve.back().step == 12);
    CHECK(a.model.params == b.model.params);
    CHECK(a.smoothed_loss == b.smoothed_loss);

    const auto b0 = pretrain_batch(data, {}, tok.size(), pc, 5, 1);
    CHECK(pretrain_batch(data, {}, tok.size(), pc, 5, 3) == b0);
    CHECK_FALSE(pretrain_batch(data, {}, tok.size(), pc, 6, 1) == b0);

    CHECK_THROWS_AS(pretrain(m, "other", data, {}, pc), TrainingError);
    auto broken = m;
    std::fill(broken.params.tok_emb.data.begin(), broken.params.tok_emb.data.end(),
              std::numeric_limits<float>::quiet_NaN());
    try {
        pretrain(broken, tok.fingerprint(), data, {}, pc);
        FAIL("expected NonFiniteLoss");
    } catch (const NonFiniteLoss& e) {
        CHECK(e.step() == 0);
        CHECK_FALSE(e.batch_fingerprint().empty());
    }
}

TEST_CASE("ner data labels first subwords only") {
    const auto tok = tiny_tokenizer();
    const auto data = tiny_ner(tok);
    CHECK(data.num_classes == 17);
    REQUIRE(data.train.size() == 3);
    const auto& ex = data.train[0];
    CHECK(ex.ids.front() == tokenizer::kBos);
    CHECK(ex.ids.back() == tokenizer::kEos);
    CHECK(ex.word_starts.size() == 4);
    std::size_t labelled = 0;
    for (int l : ex.labels) labelled += l >= 0;
    CHECK(labelled == 4);
    CHECK(ex.gold_tags == std::vector<std::string>{"O", "B-PERSON", "O", "B-GPE"});
}

TEST_CASE("finetuning is deterministic and checks the head") {
    const auto tok = tiny_tokenizer();
    const auto data = tiny_ner(tok);
    const auto m = model::init<float>(tiny_model(tok.size()), 5);
    FinetuneConfig fc;
    fc.epochs = 2;
    fc.learning_rate = 1e-3;
    fc.batch_size = 2;
    fc.seed = 9;
    const auto a = finetune(m, data, fc);
    const auto b = finetune(m, data, fc);
    CHECK(a.model.params == b.model.params);
    REQUIRE(a.epochs.size() == 2);
    CHECK(a.epochs[1].epoch == 2);
    CHECK(a.epochs[0].validation.micro_f1 == b.epochs[0].validation.micro_f1);
    fc.seed = 10;
    CHECK_FALSE(finetune(m, data, fc).model.params == a.model.params);

    const auto ev = evaluate(a.model, data, data.test);
    CHECK(ev.predicted_tags.size() == 3);
    CHECK(ev.ner.has_value());
    CHECK(ev.micro_f1 >= 0.0);
    CHECK(ev.micro_f1 <= 100.0);

    auto wrong = a.model;
    wrong.config.num_tags = 5;
    wrong.params.tok_cls_w = model::Tensor<float>({16, 5});
    wrong.params.tok_cls_b = model::Tensor<float>({5});
    CHECK_THROWS_AS(evaluate(wrong, data, data.test), TaskMismatch);
}
