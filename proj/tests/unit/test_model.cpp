#include <algorithm>
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "nomos/model.hpp"

using namespace nomos;
using namespace nomos::model;

namespace {

ModelConfig micro_config() {
    ModelConfig c;
    c.num_layers = 1;
    c.hidden_dim = 8;
    c.num_heads = 2;
    c.ffn_dim = 16;
    c.vocab_size = 20;
    c.max_positions = 6;
    c.num_tags = 5;
    c.num_labels = 3;
    c.init_std = 0.5;
    return c;
}

struct MicroBatch {
    std::vector<TokenId> ids{0, 7, 12, 5, 2, 1, 0, 9, 9, 14, 19, 2};
    std::vector<std::uint8_t> mask{1, 1, 1, 1, 1, 0, 1, 1, 1, 1, 1, 1};
    BatchView view() const { return {2, 6, ids, mask}; }
};

// Max relative error of analytic vs central-difference gradients over every
// parameter. `loss` evaluates the scalar loss for the current params.
template <class LossFn, class GradFn>
double gradient_error(Model<double>& m, LossFn loss, GradFn grad) {
    ModelParams<double> g = ModelParams<double>::zeros(m.config);
    grad(g);
    std::vector<double*> values;
    std::vector<double> analytic;
    m.params.for_each([&](const std::string&, Tensor<double>& t) {
        for (auto& x : t.data) values.push_back(&x);
    });
    g.for_each([&](const std::string&, const Tensor<double>& t) {
        analytic.insert(analytic.end(), t.data.begin(), t.data.end());
    });
    REQUIRE(values.size() == analytic.size());
    const double h = 1e-5;
    double worst = 0;
    for (std::size_t i = 0; i < values.size(); ++i) {
        const double saved = *values[i];
        *values[i] = saved + h;
        const double up = loss();
        *values[i] = saved - h;
        const double down = loss();
        *values[i] = saved;
        const double numeric = (up - down) / (2 * h);
        const double denom = std::max({std::abs(numeric), std::abs(analytic[i]), 1e-6});
        worst = std::max(worst, std::abs(numeric - analytic[i]) / denom);
    }
    return worst;
}

}  // namespace

TEST_CASE("config validation") {
    ModelConfig c;
    c.vocab_size = 500;
    CHECK_NOTHROW(c.validate());
    CHECK(c.head_dim() == 64);
    c.hidden_dim = 250;
    CHECK_THROWS_AS(c.validate(), ModelError);
    c.hidden_dim = 256;
    c.vocab_size = 0;
    CHECK_THROWS_AS(c.validate(), ModelError);
}

TEST_CASE("init is deterministic and shaped") {
    ModelConfig c = micro_config();
    c.init_std = 0.02;
    auto a = init<float>(c, 7);
    auto b = init<float>(c, 7);
    auto d = init<float>(c, 8);
    CHECK(a.params == b.params);
    CHECK_FALSE(a.params == d.params);
    CHECK(a.params.tok_emb.shape == std::vector<std::size_t>{20, 8});
    CHECK(std::all_of(a.params.layers[0].bq.data.begin(), a.params.layers[0].bq.data.end(),
                      [](float x) { return x == 0.0f; }));
    CHECK(std::all_of(a.params.emb_ln_g.data.begin(), a.params.emb_ln_g.data.end(),
                      [](float x) { return x == 1.0f; }));
}

TEST_CASE("mlm gradient check in double") {
    Model<double> m = init<double>(micro_config(), 3);
    MicroBatch b;
    std::vector<TokenId> labels(12, kIgnore);
    labels[1] = 4;
    labels[3] = 17;
    labels[8] = 9;
    labels[10] = 11;
    auto loss = [&] { return mlm_loss<double>(m, b.view(), labels, nullptr, Mode::Inference, nullptr).loss; };
    auto grad = [&](ModelParams<double>& g) {
        mlm_loss<double>(m, b.view(), labels, &g, Mode::Inference, nullptr);
    };
    CHECK(gradient_error(m, loss, grad) < 1e-4);
}

TEST_CASE("gradient check with dropout held fixed") {
    ModelConfig c = micro_config();
    c.dropout = 0.2;
    Model<double> m = init<double>(c, 4);
    MicroBatch b;
    std::vector<int> tags{0, 1, 2, 0, 3, kIgnore, 0, 4, 1, 2, 0, kIgnore};
    auto loss = [&] {
        Rng r(99);
        return token_cls_loss<double>(m, b.view(), tags, nullptr, Mode::Train, &r).loss;
    };
    auto grad = [&](ModelParams<double>& g) {
        Rng r(99);
        token_cls_loss<double>(m, b.view(), tags, &g, Mode::Train, &r);
    };
    CHECK(gradient_error(m, loss, grad) < 1e-4);
}

TEST_CASE("sequence classification gradient check") {
    Model<double> m = init<double>(micro_config(), 5);
    MicroBatch b;
    std::vector<int> labels{2, 0};
    auto loss = [&] { return seq_cls_loss<double>(m, b.view(), labels, nullptr, Mode::Inference, nullptr).loss; };
    auto grad = [&](ModelParams<double>& g) {
        seq_cls_loss<double>(m, b.view(), labels, &g, Mode::Inference, nullptr);
    };
    CHECK(gradient_error(m, loss, grad) < 1e-4);
}

TEST_CASE("all-ignore batch gives zero loss and a warning") {
    Model<float> m = init<float>(micro_config(), 1);
    MicroBatch b;
    std::vector<TokenId> labels(12, kIgnore);
    auto r = mlm_loss<float>(m, b.view(), labels, nullptr, Mode::Inference, nullptr);
    CHECK(r.loss == 0.0f);
    CHECK(r.empty_warning);
    auto out = forward_mlm<float>(m, b.view(), labels);
    CHECK(out.empty_warning);
    CHECK(out.logits.size() == 12 * 20);
}

TEST_CASE("batch loss is the count-weighted mean of row losses") {
    Model<double> m = init<double>(micro_config(), 6);
    MicroBatch b;
    std::vector<TokenId> labels(12, kIgnore);
    labels[1] = 4;
    labels[7] = 3;
    labels[8] = 9;
    labels[10] = 11;
    const double whole = mlm_loss<double>(m, b.view(), labels, nullptr, Mode::Inference, nullptr).loss;
    double acc = 0;
    std::size_t total = 0;
    for (std::size_t r = 0; r < 2; ++r) {
        BatchView v{1, 6, std::span(b.ids).subspan(r * 6, 6), std::span(b.mask).subspan(r * 6, 6)};
        auto res = mlm_loss<double>(m, v, std::span<const TokenId>(labels).subspan(r * 6, 6), nullptr,
                                    Mode::Inference, nullptr);
        acc += res.loss * static_cast<double>(res.count);
        total += res.count;
    }
    CHECK(whole == doctest::Approx(acc / static_cast<double>(total)).epsilon(1e-12));
}

TEST_CASE("pad positions do not influence attended outputs") {
    Model<float> m = init<float>(micro_config(), 2);
    MicroBatch b;
    auto before = forward_token_cls<float>(m, b.view(), 5);
    b.ids[5] = 13;  // attention mask is 0 here
    auto after = forward_token_cls<float>(m, b.view(), 5);
    for (std::size_t n = 0; n < 12; ++n) {
        if (n == 5) continue;
        for (std::size_t k = 0; k < 5; ++k) CHECK(before[n * 5 + k] == after[n * 5 + k]);
    }
}

TEST_CASE("row permutation permutes outputs") {
    Model<float> m = init<float>(micro_config(), 2);
    MicroBatch b;
    MicroBatch swapped;
    std::rotate(swapped.ids.begin(), swapped.ids.begin() + 6, swapped.ids.end());
    std::rotate(swapped.mask.begin(), swapped.mask.begin() + 6, swapped.mask.end());
    auto x = forward_token_cls<float>(m, b.view(), 5);
    auto y = forward_token_cls<float>(m, swapped.view(), 5);
    for (std::size_t i = 0; i < 30; ++i) {
        CHECK(x[i] == y[30 + i]);
        CHECK(x[30 + i] == y[i]);
    }
    auto s = forward_seq_cls<float>(m, b.view(), 3);
    auto t = forward_seq_cls<float>(m, swapped.view(), 3);
    for (std::size_t i = 0; i < 3; ++i) CHECK(s[i] == t[3 + i]);
}

TEST_CASE("head width mismatches are rejected") {
    Model<float> m = init<float>(micro_config(), 2);
    MicroBatch b;
    CHECK_THROWS_AS(forward_token_cls<float>(m, b.view(), 17), ModelError);
    CHECK_THROWS_AS(forward_seq_cls<float>(m, b.view(), 47), ModelError);
}

TEST_CASE("sequence classification: duplicated rows, normalized softmax") {
    ModelConfig c = micro_config();
    c.num_labels = 47;
    c.init_std = 0.02;
    Model<float> m = init<float>(c, 2);
    std::vector<TokenId> ids;
    std::vector<std::uint8_t> mask;
    for (int r = 0; r < 8; ++r) {
        ids.insert(ids.end(), {0, 7, 12, 5, 2, 1});
        mask.insert(mask.end(), {1, 1, 1, 1, 1, 0});
    }
    auto logits = forward_seq_cls<float>(m, {8, 6, ids, mask}, 47);
    REQUIRE(logits.size() == 8 * 47);
    for (int r = 1; r < 8; ++r) {
        CHECK(std::equal(logits.begin(), logits.begin() + 47, logits.begin() + r * 47));
    }
    softmax_rows<float>(logits, 47);
    for (int r = 0; r < 8; ++r) {
        const double s = std::accumulate(logits.begin() + r * 47, logits.begin() + (r + 1) * 47, 0.0);
        CHECK(std::abs(s - 1.0) < 1e-6);
    }
}

TEST_CASE("tied head tracks the embedding table") {
    ModelConfig c = micro_config();
    Model<double> m = init<double>(c, 2);
    MicroBatch b;
    std::vector<TokenId> labels(12, kIgnore);
    auto base = forward_mlm<double>(m, b.view(), labels).logits;
    // Perturbing an embedding row used by no input token changes only the
    // logit column for that token.
    const std::size_t row = 3;
    m.params.tok_emb.data[row * 8 + 2] += 0.25;
    auto moved = forward_mlm<double>(m, b.view(), labels).logits;
    for (std::size_t n = 0; n < 12; ++n) {
        for (std::size_t v = 0; v < 20; ++v) {
            if (v == row) {
                CHECK(moved[n * 20 + v] != base[n * 20 + v]);
            } else {
                CHECK(moved[n * 20 + v] == base[n * 20 + v]);
            }
        }
    }
}
