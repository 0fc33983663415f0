#include <omp.h>

#include "doctest.h"
#include "nomos/masking.hpp"
#include "nomos/tokenizer.hpp"

using namespace nomos;
using namespace nomos::masking;
using tokenizer::TokenId;

namespace {

corpus::PackedSequence make_row(std::size_t len, std::size_t pad, std::size_t vocab, Rng& rng) {
    corpus::PackedSequence s;
    s.ids.push_back(tokenizer::kBos);
    while (s.ids.size() + 1 < len - pad) {
        s.ids.push_back(static_cast<TokenId>(tokenizer::kFirstByteId +
                                             rng.below(vocab - 1 - tokenizer::kFirstByteId)));
    }
    s.ids.push_back(tokenizer::kEos);
    s.attention_mask.assign(s.ids.size(), 1);
    s.ids.resize(len, tokenizer::kPad);
    s.attention_mask.resize(len, 0);
    return s;
}

}  // namespace

TEST_CASE("policy validation") {
    CHECK_NOTHROW(MaskingPolicy{}.validate());
    CHECK_THROWS(MaskingPolicy{0.15, 0.8, 0.1, 0.2}.validate());
    CHECK_THROWS(MaskingPolicy{1.5, 0.8, 0.1, 0.1}.validate());
    CHECK_THROWS(MaskingPolicy{0.15, -0.1, 0.6, 0.5}.validate());
}

TEST_CASE("specials and padding are never selected") {
    Rng rng(1);
    const MaskingVocab vocab{300};
    MaskingPolicy all{1.0, 0.0, 1.0, 0.0};  // select everything, replace at random
    for (int t = 0; t < 50; ++t) {
        const auto row = make_row(40, rng.below(10), vocab.vocab_size, rng);
        const auto b = apply_dynamic_mask(row, all, vocab, rng);
        for (std::size_t i = 0; i < row.ids.size(); ++i) {
            const bool eligible = row.attention_mask[i] && !vocab.is_special(row.ids[i]);
            CHECK((b.labels[i] != kIgnoreLabel) == eligible);
            if (!eligible) {
                CHECK(b.input_ids[i] == row.ids[i]);
            } else {
                CHECK(b.labels[i] == row.ids[i]);
                CHECK_FALSE(vocab.is_special(b.input_ids[i]));
            }
            CHECK(b.attention_mask[i] == row.attention_mask[i]);
        }
    }
}

TEST_CASE("mask-only policy writes the mask id") {
    Rng rng(2);
    const MaskingVocab vocab{300};
    const auto row = make_row(30, 0, vocab.vocab_size, rng);
    const auto b = apply_dynamic_mask(row, {1.0, 1.0, 0.0, 0.0}, vocab, rng);
    CHECK(b.selected_count() == 28);
    for (std::size_t i = 1; i + 1 < row.ids.size(); ++i) CHECK(b.input_ids[i] == vocab.mask_id());
}

TEST_CASE("collate stacks rows from one stream") {
    Rng rng(3);
    const MaskingVocab vocab{500};
    std::vector<corpus::PackedSequence> rows;
    for (int i = 0; i < 4; ++i) rows.push_back(make_row(20, i, vocab.vocab_size, rng));
    Rng a(9), b(9);
    const auto batch = collate(rows, {}, vocab, a);
    CHECK(batch.rows == 4);
    CHECK(batch.cols == 20);
    for (std::size_t r = 0; r < 4; ++r) {
        const auto one = apply_dynamic_mask(rows[r], {}, vocab, b);
        CHECK(std::vector<TokenId>(batch.row_ids(r).begin(), batch.row_ids(r).end()) == one.input_ids);
        CHECK(std::vector<TokenId>(batch.row_labels(r).begin(), batch.row_labels(r).end()) == one.labels);
    }
    rows.push_back(make_row(21, 0, vocab.vocab_size, rng));
    CHECK_THROWS_AS(collate(rows, {}, vocab, a), std::invalid_argument);
}

TEST_CASE("epoch collation is identical serial and parallel") {
    Rng rng(4);
    const MaskingVocab vocab{1000};
    std::vector<corpus::PackedSequence> rows;
    for (int i = 0; i < 37; ++i) rows.push_back(make_row(64, i % 5, vocab.vocab_size, rng));
    const auto s = collate_epoch_serial(rows, {}, vocab, 11, 3, 100);
    for (int jobs : {1, 2, 5}) {
        CHECK(collate_epoch_parallel(rows, {}, vocab, 11, 3, 100, jobs) == s);
    }
    CHECK_FALSE(collate_epoch_serial(rows, {}, vocab, 11, 4, 100) == s);
    CHECK_FALSE(collate_epoch_serial(rows, {}, vocab, 12, 3, 100) == s);

    // A row's pattern depends only on (seed, epoch, global row index).
    std::vector<corpus::PackedSequence> tail(rows.begin() + 10, rows.end());
    const auto t = collate_epoch_serial(tail, {}, vocab, 11, 3, 110);
    for (std::size_t r = 0; r < tail.size(); ++r) {
        CHECK(std::equal(t.row_labels(r).begin(), t.row_labels(r).end(),
                         s.row_labels(r + 10).begin()));
    }
}

TEST_CASE("dump shows masked positions") {
    Rng rng(5);
    const MaskingVocab vocab{tokenizer::kMinVocabSize};
    const tokenizer::TokenizerModel tok;
    const auto row = make_row(12, 3, vocab.vocab_size, rng);
    const auto b = apply_dynamic_mask(row, {1.0, 1.0, 0.0, 0.0}, vocab, rng);
    const std::string text = format_batch(b, &tok);
    CHECK(text.find("<mask>") != std::string::npos);
    CHECK(text.find("<s>") != std::string::npos);
    CHECK(text.find("row 0") == 0);
    CHECK(format_batch(b, nullptr).find("<mask>") == std::string::npos);
}
