#include "nomos/masking.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include <omp.h>

#include "nomos/textnorm.hpp"

namespace nomos::masking {
namespace {

void mask_row_into(const corpus::PackedSequence& seq, const MaskingPolicy& policy,
                   const MaskingVocab& vocab, Rng& rng, TokenId* ids, TokenId* labels,
                   std::uint8_t* attn) {
    const std::size_t n = seq.ids.size();
    const auto random_span = static_cast<std::uint64_t>(vocab.vocab_size) - tokenizer::kNumSpecials;
    for (std::size_t j = 0; j < n; ++j) {
        const TokenId original = seq.ids[j];
        ids[j] = original;
        labels[j] = kIgnoreLabel;
        attn[j] = seq.attention_mask[j];
        if (seq.attention_mask[j] == 0 || vocab.is_special(original)) continue;
        if (rng.uniform() >= policy.select_prob) continue;
        labels[j] = original;
        const double v = rng.uniform();
        if (v < policy.mask_frac) {
            ids[j] = vocab.mask_id();
        } else if (v < policy.mask_frac + policy.random_frac) {
            ids[j] = tokenizer::kFirstByteId + static_cast<TokenId>(rng.below(random_span));
        }
    }
}

std::size_t common_length(std::span<const corpus::PackedSequence> sequences) {
    if (sequences.empty()) return 0;
    const std::size_t cols = sequences.front().ids.size();
    for (const auto& s : sequences) {
        if (s.ids.size() != cols || s.attention_mask.size() != cols) {
            throw std::invalid_argument("collate: sequences must share one length");
        }
    }
    return cols;
}

MaskedBatch allocate(std::size_t rows, std::size_t cols) {
    MaskedBatch b;
    b.rows = rows;
    b.cols = cols;
    b.input_ids.resize(rows * cols);
    b.labels.resize(rows * cols);
    b.attention_mask.resize(rows * cols);
    return b;
}

}  // namespace

void MaskingPolicy::validate() const {
    for (double p : {select_prob, mask_frac, random_frac, keep_frac}) {
        if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("masking probability outside [0, 1]");
    }
    if (std::abs(mask_frac + random_frac + keep_frac - 1.0) > 1e-9) {
        throw std::invalid_argument("mask/random/keep fractions must sum to 1");
    }
}

std::size_t MaskedBatch::selected_count() const {
    return static_cast<std::size_t>(
        std::count_if(labels.begin(), labels.end(), [](TokenId l) { return l != kIgnoreLabel; }));
}

MaskedBatch apply_dynamic_mask(const corpus::PackedSequence& sequence, const MaskingPolicy& policy,
                               const MaskingVocab& vocab, Rng& rng) {
    policy.validate();
    if (sequence.ids.size() != sequence.attention_mask.size()) {
        throw std::invalid_argument("sequence ids and attention mask differ in length");
    }
    MaskedBatch b = allocate(1, sequence.ids.size());
    mask_row_into(sequence, policy, vocab, rng, b.input_ids.data(), b.labels.data(),
                  b.attention_mask.data());
    return b;
}

MaskedBatch collate(std::span<const corpus::PackedSequence> sequences, const MaskingPolicy& policy,
                    const MaskingVocab& vocab, Rng& rng) {
    policy.validate();
    const std::size_t cols = common_length(sequences);
    MaskedBatch b = allocate(sequences.size(), cols);
    for (std::size_t r = 0; r < sequences.size(); ++r) {
        mask_row_into(sequences[r], policy, vocab, rng, b.input_ids.data() + r * cols,
                      b.labels.data() + r * cols, b.attention_mask.data() + r * cols);
    }
    return b;
}

MaskedBatch collate_epoch_serial(std::span<const corpus::PackedSequence> sequences,
                                 const MaskingPolicy& policy, const MaskingVocab& vocab,
                                 std::uint64_t seed, std::uint64_t epoch, std::uint64_t first_row) {
    policy.validate();
    const std::size_t cols = common_length(sequences);
    MaskedBatch b = allocate(sequences.size(), cols);
    for (std::size_t r = 0; r < sequences.size(); ++r) {
        Rng rng = Rng::derive(seed, epoch, first_row + r);
        mask_row_into(sequences[r], policy, vocab, rng, b.input_ids.data() + r * cols,
                      b.labels.data() + r * cols, b.attention_mask.data() + r * cols);
    }
    return b;
}

MaskedBatch collate_epoch_parallel(std::span<const corpus::PackedSequence> sequences,
                                   const MaskingPolicy& policy, const MaskingVocab& vocab,
                                   std::uint64_t seed, std::uint64_t epoch,
                                   std::uint64_t first_row, int jobs) {
    policy.validate();
    const std::size_t cols = common_length(sequences);
    MaskedBatch b = allocate(sequences.size(), cols);
    const int threads = jobs > 0 ? jobs : omp_get_max_threads();
    const auto rows = static_cast<std::ptrdiff_t>(sequences.size());
#pragma omp parallel for schedule(static) num_threads(threads)
    for (std::ptrdiff_t r = 0; r < rows; ++r) {
        Rng rng = Rng::derive(seed, epoch, first_row + static_cast<std::uint64_t>(r));
        mask_row_into(sequences[r], policy, vocab, rng, b.input_ids.data() + r * cols,
                      b.labels.data() + r * cols, b.attention_mask.data() + r * cols);
    }
    return b;
}

namespace {

// Valid UTF-8 pieces are shown as text with a leading space marked by '_';
// partial characters fall back to the printable byte form.
std::string token_text(const tokenizer::TokenizerModel& tok, TokenId id) {
    const std::string& raw = tok.token(id);
    if (tok.is_special(id)) return raw;
    if (!textnorm::is_valid_utf8(raw)) return tokenizer::detail::bytes_to_printable(raw);
    std::string out;
    for (char ch : raw) out += ch == ' ' ? '_' : ch;
    return out;
}

std::size_t display_width(std::string_view s) {
    std::size_t w = 0;
    for (unsigned char ch : s) w += (ch & 0xC0) != 0x80;
    return w;
}

void pad(std::string& out, const std::string& cell, std::size_t width) {
    out += cell;
    for (std::size_t w = display_width(cell); w < width; ++w) out += ' ';
}

}  // namespace

std::string format_batch(const MaskedBatch& batch, const tokenizer::TokenizerModel* tok,
                         std::size_t max_rows) {
    auto show = [tok](TokenId id) -> std::string {
        if (id == kIgnoreLabel) return "-";
        std::string s = std::to_string(id);
        if (tok != nullptr && id >= 0 && static_cast<std::size_t>(id) < tok->size()) {
            s += " " + token_text(*tok, id);
        }
        return s;
    };
    std::string out;
    char head[16];
    for (std::size_t r = 0; r < std::min(batch.rows, max_rows); ++r) {
        out += "row " + std::to_string(r) + "\n";
        out += "  pos  ";
        pad(out, "input", 25);
        pad(out, "label", 25);
        out += "attn\n";
        for (std::size_t c = 0; c < batch.cols; ++c) {
            const std::size_t k = r * batch.cols + c;
            if (batch.attention_mask[k] == 0) continue;
            std::snprintf(head, sizeof(head), "%5zu  ", c);
            out += head;
            pad(out, show(batch.input_ids[k]), 25);
            pad(out, show(batch.labels[k]), 25);
            out += std::to_string(static_cast<unsigned>(batch.attention_mask[k])) + "\n";
        }
    }
    return out;
}

}  // namespace nomos::masking
