#include "nomos/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

namespace nomos::corpus {
namespace {

std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw CorpusError("cannot open " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<std::string_view> split_tabs(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto tab = line.find('\t', start);
        if (tab == std::string_view::npos) {
            out.push_back(line.substr(start));
            return out;
        }
        out.push_back(line.substr(start, tab - start));
        start = tab + 1;
    }
}

// Calls f(line_number, line) for each line, CR stripped.
template <class F>
void for_each_line(std::string_view text, F&& f) {
    std::size_t start = 0;
    std::size_t lineno = 0;
    while (start < text.size()) {
        std::size_t nl = text.find('\n', start);
        if (nl == std::string_view::npos) nl = text.size();
        std::string_view line = text.substr(start, nl - start);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        f(++lineno, line);
        start = nl + 1;
    }
}

bool is_valid_tag(std::string_view tag, const EntityTypeSet& types) {
    if (tag == "O") return true;
    if (tag.size() < 3 || (tag[0] != 'B' && tag[0] != 'I') || tag[1] != '-') return false;
    return types.contains(tag.substr(2));
}

}  // namespace

std::string_view to_string(Context c) noexcept {
    return c == Context::Legal ? "legal" : "nonlegal";
}

Context parse_context(std::string_view s) {
    if (s == "legal") return Context::Legal;
    if (s == "nonlegal" || s == "non-legal") return Context::NonLegal;
    throw CorpusError("context must be 'legal' or 'nonlegal', got '" + std::string(s) + "'");
}

CorpusManifest load_manifest(const std::filesystem::path& path) {
    const std::string text = read_file(path);
    const auto base = path.parent_path();
    CorpusManifest m;
    std::unordered_set<std::string> seen;
    for_each_line(text, [&](std::size_t lineno, std::string_view line) {
        if (line.empty() || line.front() == '#') return;
        const auto f = split_tabs(line);
        if (f.size() != 5) {
            throw CorpusError("manifest line " + std::to_string(lineno) + ": expected 5 fields",
                              lineno);
        }
        ManifestEntry e;
        e.name = f[0];
        e.path = std::filesystem::path(std::string(f[1]));
        if (e.path.is_relative()) e.path = base / e.path;
        e.path = e.path.lexically_normal();
        try {
            e.declared_encoding = textnorm::parse_encoding(f[2]);
            e.context = parse_context(f[3]);
        } catch (const std::exception& ex) {
            throw CorpusError("manifest line " + std::to_string(lineno) + ": " + ex.what(), lineno);
        }
        if (f[4] != "-") e.size_bytes = std::stoull(std::string(f[4]));
        if (!seen.insert(e.path.string()).second) {
            throw CorpusError("manifest line " + std::to_string(lineno) + ": duplicate path " +
                                  e.path.string(),
                              lineno);
        }
        m.entries.push_back(std::move(e));
    });
    return m;
}

std::string serialize_manifest(const CorpusManifest& manifest,
                               const std::filesystem::path& relative_to) {
    std::string out = "# name\tpath\tencoding\tcontext\tsize_bytes\n";
    for (const auto& e : manifest.entries) {
        const auto p = relative_to.empty() ? e.path : e.path.lexically_relative(relative_to);
        out += e.name + '\t' + p.generic_string() + '\t' +
               std::string(textnorm::to_string(e.declared_encoding)) + '\t' +
               std::string(to_string(e.context)) + '\t' +
               (e.size_bytes ? std::to_string(*e.size_bytes) : std::string("-")) + '\n';
    }
    return out;
}

void EntityTypeSet::validate() const {
    std::unordered_set<std::string> seen;
    if (types.empty()) throw CorpusError("entity type set is empty");
    for (const auto& t : types) {
        if (t.empty()) throw CorpusError("entity type label is empty");
        if (!seen.insert(t).second) throw CorpusError("duplicate entity type " + t);
    }
}

bool EntityTypeSet::contains(std::string_view t) const {
    return std::find(types.begin(), types.end(), t) != types.end();
}

std::vector<std::string> EntityTypeSet::tag_set() const {
    std::vector<std::string> tags{"O"};
    for (const auto& t : types) {
        tags.push_back("B-" + t);
        tags.push_back("I-" + t);
    }
    return tags;
}

std::size_t repair_iob(std::vector<std::string>& tags) {
    std::size_t fixed = 0;
    std::string_view prev_type;
    bool in_entity = false;
    for (auto& tag : tags) {
        if (tag.size() > 2 && tag[0] == 'I' && tag[1] == '-') {
            const std::string_view type = std::string_view(tag).substr(2);
            if (!in_entity || type != prev_type) {
                tag[0] = 'B';
                ++fixed;
            }
            in_entity = true;
            prev_type = std::string_view(tag).substr(2);
        } else if (tag.size() > 2 && tag[0] == 'B' && tag[1] == '-') {
            in_entity = true;
            prev_type = std::string_view(tag).substr(2);
        } else {
            in_entity = false;
        }
    }
    return fixed;
}

std::vector<NerSentence> parse_iob(std::string_view text, const EntityTypeSet& types, bool repair) {
    types.validate();
    std::vector<NerSentence> out;
    NerSentence cur;
    std::vector<std::size_t> cur_lines;
    auto flush = [&]() {
        if (cur.tokens.empty()) return;
        if (repair) {
            repair_iob(cur.tags);
        } else {
            std::vector<std::string> probe = cur.tags;
            repair_iob(probe);
            for (std::size_t i = 0; i < probe.size(); ++i) {
                if (probe[i] != cur.tags[i]) {
                    throw CorpusError("IOB line " + std::to_string(cur_lines[i]) + ": tag " +
                                          cur.tags[i] + " does not continue an entity",
                                      cur_lines[i]);
                }
            }
        }
        out.push_back(std::move(cur));
        cur = {};
        cur_lines.clear();
    };
    for_each_line(text, [&](std::size_t lineno, std::string_view line) {
        if (line.empty()) {
            flush();
            return;
        }
        const auto f = split_tabs(line);
        if (f.size() != 2 || f[0].empty() || f[1].empty()) {
            throw CorpusError("IOB line " + std::to_string(lineno) + ": expected <token>\\t<tag>",
                              lineno);
        }
        if (!is_valid_tag(f[1], types)) {
            const bool shaped = f[1] == "O" || (f[1].size() > 2 && (f[1][0] == 'B' || f[1][0] == 'I') &&
                                                f[1][1] == '-');
            throw CorpusError("IOB line " + std::to_string(lineno) + ": " +
                                  (shaped ? "unknown entity type in tag " : "malformed tag ") +
                                  std::string(f[1]),
                              lineno);
        }
        cur.tokens.emplace_back(f[0]);
        cur.tags.emplace_back(f[1]);
        cur_lines.push_back(lineno);
    });
    flush();
    return out;
}

std::vector<NerSentence> load_iob(const std::filesystem::path& path, const EntityTypeSet& types,
                                  bool repair) {
    return parse_iob(read_file(path), types, repair);
}

std::string serialize_iob(std::span<const NerSentence> sentences) {
    std::string out;
    for (const auto& s : sentences) {
        if (s.tokens.size() != s.tags.size() || s.tokens.empty()) {
            throw CorpusError("sentence token/tag length mismatch");
        }
        for (std::size_t i = 0; i < s.tokens.size(); ++i) {
            out += s.tokens[i];
            out += '\t';
            out += s.tags[i];
            out += '\n';
        }
        out += '\n';
    }
    return out;
}

std::string_view to_string(Level l) noexcept {
    switch (l) {
        case Level::Volume: return "volume";
        case Level::Chapter: return "chapter";
        case Level::Subject: return "subject";
    }
    return "volume";
}

void LabelHierarchy::add(const std::string& volume, const std::string& chapter,
                         const std::string& subject) {
    auto intern = [this](Level level, const std::string& name, bool& created) {
        auto& ids = ids_[static_cast<int>(level)];
        auto it = ids.find(name);
        created = it == ids.end();
        if (!created) return it->second;
        auto& names = names_[static_cast<int>(level)];
        const int id = static_cast<int>(names.size());
        names.push_back(name);
        ids.emplace(name, id);
        return id;
    };
    bool created = false;
    const int v = intern(Level::Volume, volume, created);
    const int c = intern(Level::Chapter, chapter, created);
    if (created) {
        chapter_parent_.push_back(v);
    } else if (chapter_parent_[c] != v) {
        throw CorpusError("chapter '" + chapter + "' listed under two volumes");
    }
    const int s = intern(Level::Subject, subject, created);
    if (created) {
        subject_parent_.push_back(c);
    } else if (subject_parent_[s] != c) {
        throw CorpusError("subject '" + subject + "' listed under two chapters");
    }
}

const std::vector<std::string>& LabelHierarchy::names(Level level) const noexcept {
    return names_[static_cast<int>(level)];
}

std::optional<int> LabelHierarchy::id(Level level, std::string_view name) const {
    const auto& ids = ids_[static_cast<int>(level)];
    auto it = ids.find(std::string(name));
    if (it == ids.end()) return std::nullopt;
    return it->second;
}

LabelHierarchy parse_hierarchy(std::string_view text) {
    LabelHierarchy h;
    for_each_line(text, [&](std::size_t lineno, std::string_view line) {
        if (line.empty() || line.front() == '#') return;
        const auto f = split_tabs(line);
        if (f.size() != 3) {
            throw CorpusError("hierarchy line " + std::to_string(lineno) +
                                  ": expected volume\\tchapter\\tsubject",
                              lineno);
        }
        try {
            h.add(std::string(f[0]), std::string(f[1]), std::string(f[2]));
        } catch (const CorpusError& e) {
            throw CorpusError("hierarchy line " + std::to_string(lineno) + ": " + e.what(), lineno);
        }
    });
    return h;
}

LabelHierarchy load_hierarchy(const std::filesystem::path& path) {
    return parse_hierarchy(read_file(path));
}

std::vector<ClassificationRecord> parse_classification(std::string_view text,
                                                       const LabelHierarchy& hierarchy) {
    std::vector<ClassificationRecord> out;
    std::size_t index = 0;
    for_each_line(text, [&](std::size_t, std::string_view line) {
        if (line.empty()) return;
        const std::size_t rec = index++;
        auto fail = [rec](const std::string& why) -> CorpusError {
            return CorpusError("classification record " + std::to_string(rec) + ": " + why, rec);
        };
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw fail(std::string("invalid JSON: ") + e.what());
        }
        for (const char* key : {"text", "volume", "chapter", "subject"}) {
            if (!j.contains(key) || !j[key].is_string()) {
                throw fail(std::string("missing string field '") + key + "'");
            }
        }
        ClassificationRecord r;
        r.text = j["text"].get<std::string>();
        const auto v = hierarchy.id(Level::Volume, j["volume"].get<std::string>());
        const auto c = hierarchy.id(Level::Chapter, j["chapter"].get<std::string>());
        const auto s = hierarchy.id(Level::Subject, j["subject"].get<std::string>());
        if (!v) throw fail("unknown volume '" + j["volume"].get<std::string>() + "'");
        if (!c) throw fail("unknown chapter '" + j["chapter"].get<std::string>() + "'");
        if (!s) throw fail("unknown subject '" + j["subject"].get<std::string>() + "'");
        if (hierarchy.chapter_parent(*c) != *v) throw fail("chapter is not a child of its volume");
        if (hierarchy.subject_parent(*s) != *c) throw fail("subject is not a child of its chapter");
        r.volume = *v;
        r.chapter = *c;
        r.subject = *s;
        out.push_back(std::move(r));
    });
    return out;
}

std::vector<ClassificationRecord> load_classification(const std::filesystem::path& path,
                                                      const LabelHierarchy& hierarchy) {
    return parse_classification(read_file(path), hierarchy);
}

void SplitSpec::validate() const {
    for (double f : {train_frac, val_frac, test_frac}) {
        if (!(f >= 0.0 && f <= 1.0)) throw std::invalid_argument("split fraction outside [0, 1]");
    }
    if (std::abs(train_frac + val_frac + test_frac - 1.0) > 1e-9) {
        throw std::invalid_argument("split fractions must sum to 1");
    }
}

SplitSizes split_sizes(std::size_t n, const SplitSpec& spec) {
    spec.validate();
    // 1000 * 0.175 evaluates to 174.99999999999997 in binary floating point;
    // the epsilon keeps exact decimal products from flooring one short.
    auto part = [n](double frac) {
        return static_cast<std::size_t>(std::floor(static_cast<double>(n) * frac + 1e-7));
    };
    SplitSizes s;
    s.val = part(spec.val_frac);
    s.test = part(spec.test_frac);
    s.train = n - s.val - s.test;
    return s;
}

std::vector<std::size_t> split_permutation(std::size_t n, std::uint64_t seed) {
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    Rng rng = Rng::derive(seed, 0x73706c6974ULL);  // "split"
    shuffle(perm, rng);
    return perm;
}

std::vector<PackedSequence> pack_sequences(std::span<const std::vector<tokenizer::TokenId>> docs,
                                           std::size_t max_len, const PackingSpecials& specials) {
    if (max_len < 3) throw std::invalid_argument("max_len must be at least 3");
    const std::size_t chunk = max_len - 2;
    std::vector<PackedSequence> out;
    PackedSequence cur;
    auto close = [&]() {
        if (cur.ids.empty()) return;
        cur.attention_mask.assign(cur.ids.size(), 1);
        cur.ids.resize(max_len, specials.pad);
        cur.attention_mask.resize(max_len, 0);
        out.push_back(std::move(cur));
        cur = {};
    };
    for (const auto& doc : docs) {
        for (std::size_t start = 0; start < doc.size(); start += chunk) {
            const std::size_t len = std::min(chunk, doc.size() - start);
            if (cur.ids.size() + len + 2 > max_len) close();
            cur.ids.push_back(specials.bos);
            cur.ids.insert(cur.ids.end(), doc.begin() + static_cast<std::ptrdiff_t>(start),
                           doc.begin() + static_cast<std::ptrdiff_t>(start + len));
            cur.ids.push_back(specials.eos);
        }
    }
    close();
    return out;
}

std::vector<textnorm::RawDocument> read_documents(const CorpusManifest& manifest) {
    std::vector<textnorm::RawDocument> docs;
    docs.reserve(manifest.entries.size());
    for (const auto& e : manifest.entries) {
        if (!std::filesystem::exists(e.path)) throw CorpusError("missing file: " + e.path.string());
        textnorm::RawDocument d;
        d.bytes = read_file(e.path);
        if (d.bytes.empty()) throw CorpusError("empty document: " + e.path.string());
        if (e.declared_encoding != textnorm::Encoding::Unknown) {
            d.declared_encoding = e.declared_encoding;
        }
        d.source_id = e.name;
        docs.push_back(std::move(d));
    }
    return docs;
}

}  // namespace nomos::corpus
