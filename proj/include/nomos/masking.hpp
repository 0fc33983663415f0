#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "nomos/corpus.hpp"
#include "nomos/rng.hpp"
#include "nomos/tokenizer.hpp"

namespace nomos::masking {

using tokenizer::TokenId;

/// Label value at positions that carry no MLM target.
inline constexpr TokenId kIgnoreLabel = -100;

struct MaskingPolicy {
    double select_prob = 0.15;
    double mask_frac = 0.80;
    double random_frac = 0.10;
    double keep_frac = 0.10;

    void validate() const;
};

/// Row-major batch of masked rows, all of length `cols`.
struct MaskedBatch {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<TokenId> input_ids;
    std::vector<TokenId> labels;
    std::vector<std::uint8_t> attention_mask;

    std::span<const TokenId> row_ids(std::size_t r) const {
        return std::span(input_ids).subspan(r * cols, cols);
    }
    std::span<const TokenId> row_labels(std::size_t r) const {
        return std::span(labels).subspan(r * cols, cols);
    }
    std::size_t selected_count() const;
    friend bool operator==(const MaskedBatch&, const MaskedBatch&) = default;
};

/// Token-id layout needed for masking: specials are the ids below
/// tokenizer::kFirstByteId plus the mask id (vocab_size - 1).
struct MaskingVocab {
    std::size_t vocab_size = tokenizer::kMinVocabSize;

    TokenId mask_id() const noexcept { return static_cast<TokenId>(vocab_size) - 1; }
    bool is_special(TokenId id) const noexcept {
        return id < tokenizer::kFirstByteId || id == mask_id();
    }
};

/// Masks one packed row. Eligible positions (attended, non-special) are
/// selected independently with select_prob; each selected position then
/// becomes the mask token, a uniformly drawn non-special token, or stays as is.
/// Every eligible position consumes one draw, selected ones a second, random
/// replacements a third.
MaskedBatch apply_dynamic_mask(const corpus::PackedSequence& sequence, const MaskingPolicy& policy,
                               const MaskingVocab& vocab, Rng& rng);

/// Stacks rows masked sequentially from one advancing stream. Throws
/// std::invalid_argument on ragged input.
MaskedBatch collate(std::span<const corpus::PackedSequence> sequences, const MaskingPolicy& policy,
                    const MaskingVocab& vocab, Rng& rng);

/// Rows masked with per-row streams Rng::derive(seed, epoch, first_row + i).
/// The result does not depend on worker count; the serial and OpenMP versions
/// are interchangeable and bit-identical.
MaskedBatch collate_epoch_serial(std::span<const corpus::PackedSequence> sequences,
                                 const MaskingPolicy& policy, const MaskingVocab& vocab,
                                 std::uint64_t seed, std::uint64_t epoch, std::uint64_t first_row);
MaskedBatch collate_epoch_parallel(std::span<const corpus::PackedSequence> sequences,
                                   const MaskingPolicy& policy, const MaskingVocab& vocab,
                                   std::uint64_t seed, std::uint64_t epoch,
                                   std::uint64_t first_row, int jobs = 0);

/// Human-readable aligned dump: one block per row with position, input,
/// label and attention columns. `tok` may be null (ids only).
std::string format_batch(const MaskedBatch& batch, const tokenizer::TokenizerModel* tok,
                         std::size_t max_rows = 1);

}  // namespace nomos::masking
