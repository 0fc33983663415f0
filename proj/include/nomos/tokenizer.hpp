#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace nomos::tokenizer {

using TokenId = std::int32_t;

/// Id layout: specials 0..3, then the 256 byte symbols, then one id per
/// merge in priority order, and finally the mask token as the last id.
inline constexpr TokenId kBos = 0;
inline constexpr TokenId kPad = 1;
inline constexpr TokenId kEos = 2;
inline constexpr TokenId kUnk = 3;
inline constexpr TokenId kFirstByteId = 4;
inline constexpr TokenId kFirstMergeId = kFirstByteId + 256;
inline constexpr std::size_t kNumSpecials = 5;
inline constexpr std::size_t kMinVocabSize = 256 + kNumSpecials;

/// Vocabulary size of the production configuration (specials included).
inline constexpr std::size_t kProductionVocabSize = 50264;

struct SpecialToken {
    std::string text;
    TokenId id = 0;
};

struct SpecialTokens {
    SpecialToken bos{"<s>", kBos};
    SpecialToken pad{"<pad>", kPad};
    SpecialToken eos{"</s>", kEos};
    SpecialToken unk{"<unk>", kUnk};
    SpecialToken mask{"<mask>", 0};

    static SpecialTokens for_vocab_size(std::size_t vocab_size);
    /// Distinct ids, all below `vocab_size`, mask at the last id.
    void validate(std::size_t vocab_size) const;
};

struct Offset {
    std::size_t begin = 0;
    std::size_t end = 0;
    friend bool operator==(const Offset&, const Offset&) = default;
};

struct TokenSequence {
    std::vector<TokenId> ids;
    std::vector<Offset> offsets;  // byte ranges into the encoded text
};

class TokenizerError : public std::runtime_error {
public:
    TokenizerError(const std::string& what, std::size_t position = 0)
        : std::runtime_error(what), position_(position) {}
    std::size_t position() const noexcept { return position_; }

private:
    std::size_t position_;
};

/// Splits text into chunks at whitespace boundaries. A chunk is either a
/// single optional space followed by a run of non-whitespace bytes, or a run
/// of whitespace bytes not attached to a following word. Concatenating the
/// chunks reproduces the input.
std::vector<std::string_view> pretokenize(std::string_view text);

class TokenizerModel {
public:
    TokenizerModel();  // byte alphabet + specials, no merges

    std::size_t size() const noexcept { return tokens_.size(); }
    const std::vector<std::pair<TokenId, TokenId>>& merges() const noexcept { return merges_; }
    const SpecialTokens& specials() const noexcept { return specials_; }
    TokenId mask_id() const noexcept { return specials_.mask.id; }

    bool is_special(TokenId id) const noexcept {
        return id < kFirstByteId || id == specials_.mask.id;
    }
    /// Raw bytes of a non-special token, or the literal text of a special.
    const std::string& token(TokenId id) const { return tokens_.at(static_cast<std::size_t>(id)); }

    /// Appends a merge of two existing tokens; returns the new id.
    TokenId add_merge(TokenId left, TokenId right);

    TokenSequence encode(std::string_view text) const;
    std::vector<TokenId> encode_ids(std::string_view text) const { return encode(text).ids; }
    /// Throws TokenizerError carrying the offending position on an id >= size().
    std::string decode(std::span<const TokenId> ids, bool skip_specials = false) const;

    /// Vocabulary file text: header line then `<token>\t<id>` per id.
    std::string vocab_text() const;
    /// Merges file text: header line then `<left> <right>` in priority order.
    std::string merges_text() const;
    void save(const std::filesystem::path& dir) const;
    static TokenizerModel load(const std::filesystem::path& dir);
    static TokenizerModel from_text(std::string_view vocab_text, std::string_view merges_text);

    /// FNV-1a over the serialized vocab and merges.
    std::string fingerprint() const;

    /// Checks every structural invariant; throws TokenizerError on violation.
    void validate() const;

    friend bool operator==(const TokenizerModel& a, const TokenizerModel& b) {
        return a.tokens_ == b.tokens_ && a.merges_ == b.merges_;
    }

private:
    void finalize_mask();
    void encode_chunk(std::string_view chunk, std::vector<TokenId>& ids,
                      std::vector<std::size_t>& ends) const;

    std::vector<std::string> tokens_;
    std::vector<std::pair<TokenId, TokenId>> merges_;
    std::unordered_map<std::uint64_t, TokenId> merge_rank_;  // pair key -> merge index
    SpecialTokens specials_;
};

struct TrainOptions {
    int jobs = 0;  // <= 0: OpenMP default
};

struct TrainResult {
    TokenizerModel model;
    std::size_t requested_size = 0;
    std::size_t actual_size = 0;
    bool exhausted = false;  // ran out of pairs before reaching the target
};

/// Byte-level BPE training. Each round merges the most frequent adjacent
/// pair; ties go to the smallest (left id, right id). Specials count toward
/// `target_vocab_size`.
TrainResult train_bpe(std::span<const std::string> corpus, std::size_t target_vocab_size,
                      const TrainOptions& options = {});

namespace detail {

/// Word frequencies after pre-tokenization, sorted by word bytes.
std::vector<std::pair<std::string, std::int64_t>> count_words(std::span<const std::string> corpus,
                                                              int jobs);

inline std::uint64_t pair_key(TokenId a, TokenId b) noexcept {
    return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 32) |
           static_cast<std::uint32_t>(b);
}

using PairCounts = std::unordered_map<std::uint64_t, std::int64_t>;

struct WordSymbols {
    std::vector<TokenId> symbols;
    std::int64_t count = 0;
};

/// Reference pair counting kernel and its OpenMP twin. Results are identical.
PairCounts count_pairs_serial(std::span<const WordSymbols> words);
PairCounts count_pairs_parallel(std::span<const WordSymbols> words, int jobs);

/// GPT-2 style printable mapping of raw bytes, used in the text formats.
std::string bytes_to_printable(std::string_view bytes);
std::string printable_to_bytes(std::string_view printable);

}  // namespace detail
}  // namespace nomos::tokenizer
