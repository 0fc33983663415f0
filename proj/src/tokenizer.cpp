#include "nomos/tokenizer.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <limits>
#include <map>
#include <queue>
#include <sstream>
#include <unordered_set>

#include <omp.h>

#include "nomos/hash.hpp"

namespace nomos::tokenizer {
namespace {

constexpr std::string_view kVocabHeader = "#nomos-bpe-vocab v1";
constexpr std::string_view kMergesHeader = "#nomos-bpe-merges v1";

bool is_space_byte(unsigned char c) noexcept {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f';
}

struct ByteMap {
    std::array<char32_t, 256> to_cp{};
    std::unordered_map<char32_t, unsigned char> from_cp;

    ByteMap() {
        std::array<bool, 256> direct{};
        for (int b = '!'; b <= '~'; ++b) direct[b] = true;
        for (int b = 0xA1; b <= 0xAC; ++b) direct[b] = true;
        for (int b = 0xAE; b <= 0xFF; ++b) direct[b] = true;
        char32_t next = 256;
        for (int b = 0; b < 256; ++b) {
            to_cp[b] = direct[b] ? static_cast<char32_t>(b) : next++;
            from_cp[to_cp[b]] = static_cast<unsigned char>(b);
        }
    }
};

const ByteMap& byte_map() {
    static const ByteMap m;
    return m;
}

void put_utf8(std::string& out, char32_t cp) {
    if (cp < 0x80) {
        out.push_back(static_cast<char>(cp));
    } else if (cp < 0x800) {
        out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else {
        out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    }
}

// Applies merge (a, b) -> m left to right, non-overlapping.
bool apply_merge(std::vector<TokenId>& syms, TokenId a, TokenId b, TokenId m) {
    bool changed = false;
    std::size_t w = 0;
    for (std::size_t r = 0; r < syms.size();) {
        if (r + 1 < syms.size() && syms[r] == a && syms[r + 1] == b) {
            syms[w++] = m;
            r += 2;
            changed = true;
        } else {
            syms[w++] = syms[r++];
        }
    }
    syms.resize(w);
    return changed;
}

std::vector<std::string> split_lines(std::string_view text) {
    std::vector<std::string> lines;
    std::size_t start = 0;
    while (start <= text.size()) {
        std::size_t nl = text.find('\n', start);
        if (nl == std::string_view::npos) nl = text.size();
        std::string_view line = text.substr(start, nl - start);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (!line.empty()) lines.emplace_back(line);
        start = nl + 1;
    }
    return lines;
}

std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw TokenizerError("cannot open " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Parses "key=value" fields out of a header line.
std::map<std::string, std::string> header_fields(std::string_view line) {
    std::map<std::string, std::string> out;
    std::istringstream ss{std::string(line)};
    std::string field;
    while (ss >> field) {
        const auto eq = field.find('=');
        if (eq != std::string::npos) out[field.substr(0, eq)] = field.substr(eq + 1);
    }
    return out;
}

}  // namespace

SpecialTokens SpecialTokens::for_vocab_size(std::size_t vocab_size) {
    SpecialTokens s;
    s.mask.id = static_cast<TokenId>(vocab_size) - 1;
    return s;
}

void SpecialTokens::validate(std::size_t vocab_size) const {
    const std::array<TokenId, 5> ids{bos.id, pad.id, eos.id, unk.id, mask.id};
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= vocab_size) {
            throw TokenizerError("special token id out of range");
        }
        for (std::size_t j = i + 1; j < ids.size(); ++j) {
            if (ids[i] == ids[j]) throw TokenizerError("special token ids collide");
        }
    }
    if (static_cast<std::size_t>(mask.id) != vocab_size - 1) {
        throw TokenizerError("mask token must hold the last id");
    }
}

std::vector<std::string_view> pretokenize(std::string_view text) {
    std::vector<std::string_view> chunks;
    std::size_t i = 0;
    const std::size_t n = text.size();
    while (i < n) {
        const std::size_t start = i;
        if (is_space_byte(static_cast<unsigned char>(text[i]))) {
            // Whitespace run; a trailing plain space joins the next word.
            std::size_t j = i;
            while (j < n && is_space_byte(static_cast<unsigned char>(text[j]))) ++j;
            if (j < n && text[j - 1] == ' ') {
                if (j - 1 > i) {
                    chunks.push_back(text.substr(i, j - 1 - i));
                }
                i = j - 1;
                std::size_t k = j;
                while (k < n && !is_space_byte(static_cast<unsigned char>(text[k]))) ++k;
                chunks.push_back(text.substr(i, k - i));
                i = k;
            } else {
                chunks.push_back(text.substr(start, j - start));
                i = j;
            }
        } else {
            std::size_t k = i;
            while (k < n && !is_space_byte(static_cast<unsigned char>(text[k]))) ++k;
            chunks.push_back(text.substr(i, k - i));
            i = k;
        }
    }
    return chunks;
}

TokenizerModel::TokenizerModel() {
    tokens_.reserve(kMinVocabSize);
    tokens_.push_back(specials_.bos.text);
    tokens_.push_back(specials_.pad.text);
    tokens_.push_back(specials_.eos.text);
    tokens_.push_back(specials_.unk.text);
    for (int b = 0; b < 256; ++b) tokens_.emplace_back(1, static_cast<char>(b));
    finalize_mask();
}

void TokenizerModel::finalize_mask() {
    specials_.mask.id = static_cast<TokenId>(tokens_.size());
    tokens_.push_back(specials_.mask.text);
}

TokenId TokenizerModel::add_merge(TokenId left, TokenId right) {
    if (is_special(left) || is_special(right) || left < 0 || right < 0 ||
        static_cast<std::size_t>(left) >= size() || static_cast<std::size_t>(right) >= size()) {
        throw TokenizerError("merge operands must be existing non-special tokens");
    }
    const std::uint64_t key = detail::pair_key(left, right);
    if (merge_rank_.contains(key)) throw TokenizerError("duplicate merge rule");
    // The mask slot moves up to stay last.
    tokens_.pop_back();
    const auto id = static_cast<TokenId>(tokens_.size());
    tokens_.push_back(tokens_[left] + tokens_[right]);
    merge_rank_.emplace(key, static_cast<TokenId>(merges_.size()));
    merges_.emplace_back(left, right);
    finalize_mask();
    return id;
}

void TokenizerModel::encode_chunk(std::string_view chunk, std::vector<TokenId>& ids,
                                  std::vector<std::size_t>& ends) const {
    ids.clear();
    ends.clear();
    for (std::size_t i = 0; i < chunk.size(); ++i) {
        ids.push_back(kFirstByteId + static_cast<unsigned char>(chunk[i]));
        ends.push_back(i + 1);
    }
    while (ids.size() > 1) {
        TokenId best_rank = std::numeric_limits<TokenId>::max();
        for (std::size_t i = 0; i + 1 < ids.size(); ++i) {
            auto it = merge_rank_.find(detail::pair_key(ids[i], ids[i + 1]));
            if (it != merge_rank_.end() && it->second < best_rank) best_rank = it->second;
        }
        if (best_rank == std::numeric_limits<TokenId>::max()) break;
        const auto [a, b] = merges_[static_cast<std::size_t>(best_rank)];
        const TokenId m = kFirstMergeId + best_rank;
        std::size_t w = 0;
        for (std::size_t r = 0; r < ids.size();) {
            if (r + 1 < ids.size() && ids[r] == a && ids[r + 1] == b) {
                ids[w] = m;
                ends[w] = ends[r + 1];
                ++w;
                r += 2;
            } else {
                ids[w] = ids[r];
                ends[w] = ends[r];
                ++w;
                ++r;
            }
        }
        ids.resize(w);
        ends.resize(w);
    }
}

TokenSequence TokenizerModel::encode(std::string_view text) const {
    TokenSequence out;
    std::unordered_map<std::string_view, std::pair<std::vector<TokenId>, std::vector<std::size_t>>>
        cache;
    std::vector<TokenId> ids;
    std::vector<std::size_t> ends;
    std::size_t base = 0;
    for (std::string_view chunk : pretokenize(text)) {
        auto it = cache.find(chunk);
        if (it == cache.end()) {
            encode_chunk(chunk, ids, ends);
            it = cache.emplace(chunk, std::make_pair(ids, ends)).first;
        }
        const auto& [cids, cends] = it->second;
        std::size_t begin = base;
        for (std::size_t i = 0; i < cids.size(); ++i) {
            out.ids.push_back(cids[i]);
            out.offsets.push_back({begin, base + cends[i]});
            begin = base + cends[i];
        }
        base += chunk.size();
    }
    return out;
}

std::string TokenizerModel::decode(std::span<const TokenId> ids, bool skip_specials) const {
    std::string out;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        const TokenId id = ids[i];
        if (id < 0 || static_cast<std::size_t>(id) >= size()) {
            throw TokenizerError("token id " + std::to_string(id) + " out of range at position " +
                                     std::to_string(i),
                                 i);
        }
        if (skip_specials && is_special(id)) continue;
        out += tokens_[static_cast<std::size_t>(id)];
    }
    return out;
}

std::string TokenizerModel::vocab_text() const {
    std::string out(kVocabHeader);
    out += " size=" + std::to_string(size());
    out += " bos=" + std::to_string(specials_.bos.id);
    out += " pad=" + std::to_string(specials_.pad.id);
    out += " eos=" + std::to_string(specials_.eos.id);
    out += " unk=" + std::to_string(specials_.unk.id);
    out += " mask=" + std::to_string(specials_.mask.id);
    out += '\n';
    for (std::size_t id = 0; id < size(); ++id) {
        const auto tid = static_cast<TokenId>(id);
        out += is_special(tid) ? tokens_[id] : detail::bytes_to_printable(tokens_[id]);
        out += '\t';
        out += std::to_string(id);
        out += '\n';
    }
    return out;
}

std::string TokenizerModel::merges_text() const {
    std::string out(kMergesHeader);
    out += " count=" + std::to_string(merges_.size()) + '\n';
    for (const auto& [a, b] : merges_) {
        out += detail::bytes_to_printable(tokens_[a]);
        out += ' ';
        out += detail::bytes_to_printable(tokens_[b]);
        out += '\n';
    }
    return out;
}

void TokenizerModel::save(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    std::ofstream(dir / "vocab.txt", std::ios::binary) << vocab_text();
    std::ofstream(dir / "merges.txt", std::ios::binary) << merges_text();
}

TokenizerModel TokenizerModel::load(const std::filesystem::path& dir) {
    return from_text(read_file(dir / "vocab.txt"), read_file(dir / "merges.txt"));
}

TokenizerModel TokenizerModel::from_text(std::string_view vocab_text,
                                         std::string_view merges_text) {
    const auto vlines = split_lines(vocab_text);
    const auto mlines = split_lines(merges_text);
    if (vlines.empty() || !vlines[0].starts_with(kVocabHeader)) {
        throw TokenizerError("vocab file: missing or unsupported header");
    }
    if (mlines.empty() || !mlines[0].starts_with(kMergesHeader)) {
        throw TokenizerError("merges file: missing or unsupported header");
    }
    const auto vh = header_fields(vlines[0]);
    const std::size_t declared = vh.contains("size") ? std::stoul(vh.at("size")) : 0;

    // Vocab entries keyed by printable form; specials are identified by id.
    std::unordered_map<std::string, TokenId> by_text;
    std::vector<std::string> printable(vlines.size() - 1);
    for (std::size_t i = 1; i < vlines.size(); ++i) {
        const auto tab = vlines[i].rfind('\t');
        if (tab == std::string::npos) {
            throw TokenizerError("vocab file: malformed line " + std::to_string(i + 1), i + 1);
        }
        const auto id = std::stoul(vlines[i].substr(tab + 1));
        if (id != i - 1) {
            throw TokenizerError("vocab file: ids must be dense and ordered (line " +
                                     std::to_string(i + 1) + ")",
                                 i + 1);
        }
        printable[id] = vlines[i].substr(0, tab);
    }
    if (declared != printable.size()) throw TokenizerError("vocab file: size header mismatch");

    TokenizerModel model;
    for (std::size_t b = 0; b < 256; ++b) {
        by_text[detail::bytes_to_printable(model.tokens_[kFirstByteId + b])] =
            static_cast<TokenId>(kFirstByteId + b);
    }
    for (std::size_t i = 1; i < mlines.size(); ++i) {
        const auto sp = mlines[i].find(' ');
        if (sp == std::string::npos) {
            throw TokenizerError("merges file: malformed line " + std::to_string(i + 1), i + 1);
        }
        const std::string left = mlines[i].substr(0, sp);
        const std::string right = mlines[i].substr(sp + 1);
        auto li = by_text.find(left);
        auto ri = by_text.find(right);
        if (li == by_text.end() || ri == by_text.end()) {
            throw TokenizerError("merges file: unknown operand on line " + std::to_string(i + 1),
                                 i + 1);
        }
        const TokenId id = model.add_merge(li->second, ri->second);
        by_text.emplace(left + right, id);
    }
    if (model.size() != printable.size()) {
        throw TokenizerError("vocab/merges disagree on vocabulary size");
    }
    for (std::size_t id = kFirstByteId; id + 1 < model.size(); ++id) {
        if (detail::bytes_to_printable(model.tokens_[id]) != printable[id]) {
            throw TokenizerError("vocab entry " + std::to_string(id) + " disagrees with merges", id);
        }
    }
    const SpecialTokens expected = SpecialTokens::for_vocab_size(model.size());
    if (std::stoi(vh.at("bos")) != expected.bos.id || std::stoi(vh.at("pad")) != expected.pad.id ||
        std::stoi(vh.at("eos")) != expected.eos.id || std::stoi(vh.at("unk")) != expected.unk.id ||
        std::stoi(vh.at("mask")) != expected.mask.id) {
        throw TokenizerError("vocab file: unexpected special token ids");
    }
    model.validate();
    return model;
}

std::string TokenizerModel::fingerprint() const {
    return Fnv1a{}.update(vocab_text()).update(merges_text()).hex();
}

void TokenizerModel::validate() const {
    specials_.validate(size());
    if (size() != kMinVocabSize + merges_.size()) throw TokenizerError("vocab/merge count mismatch");
    for (std::size_t b = 0; b < 256; ++b) {
        const auto& t = tokens_[kFirstByteId + b];
        if (t.size() != 1 || static_cast<unsigned char>(t[0]) != b) {
            throw TokenizerError("byte alphabet corrupted");
        }
    }
    std::unordered_map<std::string, TokenId> seen;
    for (std::size_t r = 0; r < merges_.size(); ++r) {
        const auto [a, b] = merges_[r];
        const auto id = static_cast<std::size_t>(kFirstMergeId) + r;
        if (a < kFirstByteId || b < kFirstByteId || static_cast<std::size_t>(a) >= id ||
            static_cast<std::size_t>(b) >= id) {
            throw TokenizerError("merge operand not an earlier token", r);
        }
        if (tokens_[id] != tokens_[a] + tokens_[b]) throw TokenizerError("merge output mismatch", r);
        if (!seen.emplace(tokens_[id], static_cast<TokenId>(id)).second) {
            throw TokenizerError("token produced by more than one merge", r);
        }
    }
}

namespace detail {

std::string bytes_to_printable(std::string_view bytes) {
    std::string out;
    out.reserve(bytes.size() * 2);
    for (unsigned char c : bytes) put_utf8(out, byte_map().to_cp[c]);
    return out;
}

std::string printable_to_bytes(std::string_view printable) {
    std::string out;
    const auto& m = byte_map().from_cp;
    for (std::size_t i = 0; i < printable.size();) {
        const auto b0 = static_cast<unsigned char>(printable[i]);
        char32_t cp;
        std::size_t len;
        if (b0 < 0x80) {
            cp = b0;
            len = 1;
        } else if ((b0 & 0xE0) == 0xC0 && i + 1 < printable.size()) {
            cp = ((b0 & 0x1F) << 6) | (static_cast<unsigned char>(printable[i + 1]) & 0x3F);
            len = 2;
        } else {
            throw TokenizerError("invalid printable token encoding", i);
        }
        auto it = m.find(cp);
        if (it == m.end()) throw TokenizerError("code point outside the byte map", i);
        out.push_back(static_cast<char>(it->second));
        i += len;
    }
    return out;
}

std::vector<std::pair<std::string, std::int64_t>> count_words(std::span<const std::string> corpus,
                                                              int jobs) {
    const int threads = jobs > 0 ? jobs : omp_get_max_threads();
    std::vector<std::unordered_map<std::string_view, std::int64_t>> partial(
        static_cast<std::size_t>(threads));
    const auto n = static_cast<std::ptrdiff_t>(corpus.size());
#pragma omp parallel num_threads(threads)
    {
        auto& local = partial[static_cast<std::size_t>(omp_get_thread_num())];
#pragma omp for schedule(static)
        for (std::ptrdiff_t d = 0; d < n; ++d) {
            for (std::string_view chunk : pretokenize(corpus[d])) ++local[chunk];
        }
    }
    std::map<std::string_view, std::int64_t> merged;
    for (const auto& p : partial) {
        for (const auto& [w, c] : p) merged[w] += c;
    }
    std::vector<std::pair<std::string, std::int64_t>> out;
    out.reserve(merged.size());
    for (const auto& [w, c] : merged) out.emplace_back(std::string(w), c);
    return out;
}

PairCounts count_pairs_serial(std::span<const WordSymbols> words) {
    PairCounts counts;
    for (const auto& w : words) {
        for (std::size_t i = 0; i + 1 < w.symbols.size(); ++i) {
            counts[pair_key(w.symbols[i], w.symbols[i + 1])] += w.count;
        }
    }
    return counts;
}

PairCounts count_pairs_parallel(std::span<const WordSymbols> words, int jobs) {
    const int threads = jobs > 0 ? jobs : omp_get_max_threads();
    std::vector<PairCounts> partial(static_cast<std::size_t>(threads));
    const auto n = static_cast<std::ptrdiff_t>(words.size());
#pragma omp parallel num_threads(threads)
    {
        auto& local = partial[static_cast<std::size_t>(omp_get_thread_num())];
#pragma omp for schedule(static)
        for (std::ptrdiff_t wi = 0; wi < n; ++wi) {
            const auto& w = words[wi];
            for (std::size_t i = 0; i + 1 < w.symbols.size(); ++i) {
                local[pair_key(w.symbols[i], w.symbols[i + 1])] += w.count;
            }
        }
    }
    // Fixed reduction order: thread 0, 1, ...
    PairCounts counts = std::move(partial[0]);
    for (std::size_t t = 1; t < partial.size(); ++t) {
        for (const auto& [k, c] : partial[t]) counts[k] += c;
    }
    return counts;
}

}  // namespace detail

TrainResult train_bpe(std::span<const std::string> corpus, std::size_t target_vocab_size,
                      const TrainOptions& options) {
    if (target_vocab_size < kMinVocabSize) {
        throw std::invalid_argument("target vocabulary size must be at least " +
                                    std::to_string(kMinVocabSize));
    }
    if (corpus.empty()) throw std::invalid_argument("cannot train a tokenizer on an empty corpus");

    using detail::pair_key;
    using detail::WordSymbols;

    std::vector<WordSymbols> words;
    for (auto& [w, c] : detail::count_words(corpus, options.jobs)) {
        WordSymbols ws;
        ws.count = c;
        ws.symbols.reserve(w.size());
        for (unsigned char ch : w) ws.symbols.push_back(kFirstByteId + ch);
        words.push_back(std::move(ws));
    }

    detail::PairCounts counts = detail::count_pairs_parallel(words, options.jobs);
    std::unordered_map<std::uint64_t, std::vector<std::uint32_t>> where;
    for (std::uint32_t wi = 0; wi < words.size(); ++wi) {
        const auto& s = words[wi].symbols;
        for (std::size_t i = 0; i + 1 < s.size(); ++i) where[pair_key(s[i], s[i + 1])].push_back(wi);
    }

    struct Entry {
        std::int64_t count;
        std::uint64_t key;
    };
    // Highest count first; equal counts prefer the smaller (left, right) key.
    auto worse = [](const Entry& x, const Entry& y) {
        if (x.count != y.count) return x.count < y.count;
        return x.key > y.key;
    };
    std::priority_queue<Entry, std::vector<Entry>, decltype(worse)> heap(worse);
    for (const auto& [k, c] : counts) heap.push({c, k});

    TrainResult result;
    result.requested_size = target_vocab_size;
    TokenizerModel& model = result.model;

    auto add_word_pairs = [&](std::uint32_t wi, std::int64_t sign,
                              std::vector<std::uint64_t>* touched) {
        const auto& w = words[wi];
        for (std::size_t i = 0; i + 1 < w.symbols.size(); ++i) {
            const std::uint64_t k = pair_key(w.symbols[i], w.symbols[i + 1]);
            counts[k] += sign * w.count;
            if (touched != nullptr) {
                where[k].push_back(wi);
                touched->push_back(k);
            }
        }
    };

    std::unordered_set<std::string> known;
    std::unordered_set<std::uint64_t> retired;
    std::vector<std::uint64_t> touched;
    while (model.size() < target_vocab_size) {
        if (heap.empty()) {
            result.exhausted = true;
            break;
        }
        const Entry top = heap.top();
        heap.pop();
        auto cit = counts.find(top.key);
        const std::int64_t current = cit == counts.end() ? 0 : cit->second;
        if (current != top.count) {
            if (current > 0 && !retired.contains(top.key)) heap.push({current, top.key});
            continue;
        }
        if (current <= 0) {
            result.exhausted = true;
            break;
        }
        const auto a = static_cast<TokenId>(top.key >> 32);
        const auto b = static_cast<TokenId>(top.key & 0xffffffffu);
        // A pair whose concatenation already exists as a token (reachable by
        // a different split) is retired so every token has exactly one merge.
        if (!known.insert(model.token(a) + model.token(b)).second) {
            retired.insert(top.key);
            continue;
        }
        const TokenId m = model.add_merge(a, b);

        auto affected = std::move(where[top.key]);
        where.erase(top.key);
        std::sort(affected.begin(), affected.end());
        affected.erase(std::unique(affected.begin(), affected.end()), affected.end());
        touched.clear();
        for (std::uint32_t wi : affected) {
            auto& syms = words[wi].symbols;
            bool present = false;
            for (std::size_t i = 0; i + 1 < syms.size(); ++i) {
                if (syms[i] == a && syms[i + 1] == b) {
                    present = true;
                    break;
                }
            }
            if (!present) continue;
            add_word_pairs(wi, -1, nullptr);
            apply_merge(syms, a, b, m);
            add_word_pairs(wi, +1, &touched);
        }
        counts.erase(top.key);
        std::sort(touched.begin(), touched.end());
        touched.erase(std::unique(touched.begin(), touched.end()), touched.end());
        for (std::uint64_t k : touched) {
            const std::int64_t c = counts[k];
            if (c > 0 && !retired.contains(k)) heap.push({c, k});
        }
    }
    result.actual_size = model.size();
    return result;
}

}  // namespace nomos::tokenizer
