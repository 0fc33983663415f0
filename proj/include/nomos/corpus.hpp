#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "nomos/rng.hpp"
#include "nomos/textnorm.hpp"
#include "nomos/tokenizer.hpp"

namespace nomos::corpus {

/// Parse/validation failure carrying a 1-based line number (0 if not
/// line-oriented) or a 0-based record index.
class CorpusError : public std::runtime_error {
public:
    CorpusError(const std::string& what, std::size_t where = 0)
        : std::runtime_error(what), where_(where) {}
    std::size_t where() const noexcept { return where_; }

private:
    std::size_t where_;
};

// ---------------------------------------------------------------- manifest

enum class Context { Legal, NonLegal };

std::string_view to_string(Context c) noexcept;
Context parse_context(std::string_view s);

struct ManifestEntry {
    std::string name;
    std::filesystem::path path;  // resolved against the manifest's directory
    textnorm::Encoding declared_encoding = textnorm::Encoding::Unknown;
    Context context = Context::Legal;
    std::optional<std::uint64_t> size_bytes;
};

struct CorpusManifest {
    std::vector<ManifestEntry> entries;
};

/// Tab-separated: `name  path  encoding  context  size_bytes` ('-' for an
/// unknown size). Lines starting with '#' are comments.
CorpusManifest load_manifest(const std::filesystem::path& path);
std::string serialize_manifest(const CorpusManifest& manifest,
                               const std::filesystem::path& relative_to = {});

// ---------------------------------------------------------------------- NER

struct EntityTypeSet {
    std::vector<std::string> types{"FACILITY", "GPE",    "LEG-REF", "LOC-NAT",
                                   "LOC-UNK",  "ORG",    "PERSON",  "PUBLIC-DOC"};

    void validate() const;
    bool contains(std::string_view t) const;
    /// "O" followed by B-/I- pairs in type order (2 * |types| + 1 tags).
    std::vector<std::string> tag_set() const;
};

struct NerSentence {
    std::vector<std::string> tokens;
    std::vector<std::string> tags;
};

/// Rewrites an I-X that does not continue a B-X/I-X run into B-X. Returns the
/// number of rewritten tags.
std::size_t repair_iob(std::vector<std::string>& tags);

/// Parses `<token>\t<tag>` lines with blank-line sentence separators.
std::vector<NerSentence> parse_iob(std::string_view text, const EntityTypeSet& types, bool repair);
std::vector<NerSentence> load_iob(const std::filesystem::path& path, const EntityTypeSet& types,
                                  bool repair);
std::string serialize_iob(std::span<const NerSentence> sentences);

// ----------------------------------------------------------- classification

enum class Level { Volume, Chapter, Subject };

std::string_view to_string(Level l) noexcept;

/// volume -> chapter -> subject tree. Label ids are assigned in order of first
/// appearance in the hierarchy file.
class LabelHierarchy {
public:
    /// Adds a valid (volume, chapter, subject) triple.
    void add(const std::string& volume, const std::string& chapter, const std::string& subject);

    std::size_t size(Level level) const noexcept { return names(level).size(); }
    const std::vector<std::string>& names(Level level) const noexcept;
    std::optional<int> id(Level level, std::string_view name) const;
    int chapter_parent(int chapter) const { return chapter_parent_.at(chapter); }
    int subject_parent(int subject) const { return subject_parent_.at(subject); }

private:
    std::vector<std::string> names_[3];
    std::unordered_map<std::string, int> ids_[3];
    std::vector<int> chapter_parent_;
    std::vector<int> subject_parent_;
};

LabelHierarchy parse_hierarchy(std::string_view text);
LabelHierarchy load_hierarchy(const std::filesystem::path& path);

struct ClassificationRecord {
    std::string text;
    int volume = 0;
    int chapter = 0;
    int subject = 0;

    int label(Level level) const noexcept {
        return level == Level::Volume ? volume : level == Level::Chapter ? chapter : subject;
    }
};

/// JSON lines with string fields text, volume, chapter, subject. Orphan or
/// unknown labels raise CorpusError with the 0-based record index.
std::vector<ClassificationRecord> parse_classification(std::string_view text,
                                                       const LabelHierarchy& hierarchy);
std::vector<ClassificationRecord> load_classification(const std::filesystem::path& path,
                                                      const LabelHierarchy& hierarchy);

// ------------------------------------------------------------------- splits

struct SplitSpec {
    double train_frac = 0.675;
    double val_frac = 0.175;
    double test_frac = 0.15;
    std::uint64_t seed = 0;

    void validate() const;
};

struct SplitSizes {
    std::size_t train = 0;
    std::size_t val = 0;
    std::size_t test = 0;
    friend bool operator==(const SplitSizes&, const SplitSizes&) = default;
};

/// val and test take floor(n * frac); the remainder goes to train.
SplitSizes split_sizes(std::size_t n, const SplitSpec& spec);

/// Seeded permutation of 0..n-1 (the shuffle behind split()).
std::vector<std::size_t> split_permutation(std::size_t n, std::uint64_t seed);

template <class T>
struct Split {
    std::vector<T> train;
    std::vector<T> val;
    std::vector<T> test;
};

template <class T>
Split<T> split(std::span<const T> records, const SplitSpec& spec) {
    if (records.size() < 3) throw std::invalid_argument("split needs at least 3 records");
    spec.validate();
    const SplitSizes sz = split_sizes(records.size(), spec);
    const auto perm = split_permutation(records.size(), spec.seed);
    Split<T> out;
    out.train.reserve(sz.train);
    out.val.reserve(sz.val);
    out.test.reserve(sz.test);
    for (std::size_t i = 0; i < perm.size(); ++i) {
        const T& r = records[perm[i]];
        if (i < sz.train) {
            out.train.push_back(r);
        } else if (i < sz.train + sz.val) {
            out.val.push_back(r);
        } else {
            out.test.push_back(r);
        }
    }
    return out;
}

// ------------------------------------------------------------------ packing

struct PackedSequence {
    std::vector<tokenizer::TokenId> ids;
    std::vector<std::uint8_t> attention_mask;  // 1 = real token (incl. bos/eos)
};

struct PackingSpecials {
    tokenizer::TokenId bos = tokenizer::kBos;
    tokenizer::TokenId eos = tokenizer::kEos;
    tokenizer::TokenId pad = tokenizer::kPad;
};

/// Greedy whole-document packing. Each document becomes `bos doc eos`;
/// segments are appended to the current sequence while they fit, otherwise
/// the sequence is padded out and a new one started. A document longer than
/// max_len - 2 is cut into max_len - 2 token chunks, each wrapped the same way.
std::vector<PackedSequence> pack_sequences(std::span<const std::vector<tokenizer::TokenId>> docs,
                                           std::size_t max_len = 512,
                                           const PackingSpecials& specials = {});

/// Reads the raw bytes of every manifest entry, in manifest order. A missing
/// file raises CorpusError naming the path.
std::vector<textnorm::RawDocument> read_documents(const CorpusManifest& manifest);

}  // namespace nomos::corpus
