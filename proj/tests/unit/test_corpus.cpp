#include <algorithm>
#include <filesystem>
#include <numeric>
#include <fstream>
#include <set>

#include "doctest.h"
#include "nomos/corpus.hpp"

using namespace nomos;
using namespace nomos::corpus;

namespace fs = std::filesystem;

namespace {
const fs::path kFixtures = NOMOS_FIXTURES;
}

TEST_CASE("fixture manifest loads and resolves paths") {
    const auto m = load_manifest(kFixtures / "corpus" / "manifest.tsv");
    REQUIRE(m.entries.size() == 4);
    CHECK(m.entries[0].name == "gazette");
    CHECK(m.entries[1].declared_encoding == textnorm::Encoding::Windows1253);
    CHECK(m.entries[2].declared_encoding == textnorm::Encoding::Iso8859_7);
    CHECK(m.entries[3].context == Context::NonLegal);
    for (const auto& e : m.entries) {
        CHECK(fs::exists(e.path));
        REQUIRE(e.size_bytes.has_value());
        CHECK(*e.size_bytes == fs::file_size(e.path));
    }
    const auto docs = read_documents(m);
    REQUIRE(docs.size() == 4);
    CHECK(docs[0].source_id == "gazette");
    CHECK(docs[1].declared_encoding == textnorm::Encoding::Windows1253);
}

TEST_CASE("manifest errors name the line") {
    const fs::path dir = fs::temp_directory_path() / "nomos-test-manifest";
    fs::create_directories(dir);
    auto write = [&](const std::string& text) {
        std::ofstream(dir / "m.tsv") << text;
        return dir / "m.tsv";
    };
    try {
        load_manifest(write("# comment\na\ta.txt\tutf-8\tlegal\n"));
        FAIL("expected an error");
    } catch (const CorpusError& e) {
        CHECK(e.where() == 2);
    }
    CHECK_THROWS_AS(load_manifest(write("a\ta.txt\tebcdic\tlegal\t-\n")), CorpusError);
    CHECK_THROWS_AS(load_manifest(write("a\ta.txt\tutf-8\tpoetry\t-\n")), CorpusError);
    CHECK_THROWS_AS(read_documents(load_manifest(kFixtures / "missing" / "manifest.tsv")),
                    CorpusError);
    fs::remove_all(dir);
}

TEST_CASE("manifest serialization roundtrips") {
    const auto m = load_manifest(kFixtures / "corpus" / "manifest.tsv");
    const fs::path dir = fs::temp_directory_path() / "nomos-test-manifest-rt";
    fs::create_directories(dir);
    std::ofstream(dir / "m.tsv") << serialize_manifest(m, dir);
    const auto back = load_manifest(dir / "m.tsv");
    REQUIRE(back.entries.size() == m.entries.size());
    for (std::size_t i = 0; i < m.entries.size(); ++i) {
        CHECK(back.entries[i].name == m.entries[i].name);
        CHECK(fs::equivalent(back.entries[i].path, m.entries[i].path));
        CHECK(back.entries[i].declared_encoding == m.entries[i].declared_encoding);
        CHECK(back.entries[i].context == m.entries[i].context);
        CHECK(back.entries[i].size_bytes == m.entries[i].size_bytes);
    }
    fs::remove_all(dir);
}

TEST_CASE("entity tag set") {
    const EntityTypeSet types;
    const auto tags = types.tag_set();
    REQUIRE(tags.size() == 17);
    CHECK(tags[0] == "O");
    CHECK(tags[1] == "B-FACILITY");
    CHECK(tags[2] == "I-FACILITY");
    CHECK(tags[16] == "I-PUBLIC-DOC");
    CHECK(types.contains("LEG-REF"));
    CHECK_FALSE(types.contains("DATE"));
    CHECK_THROWS(EntityTypeSet{{"GPE", "GPE"}}.validate());
}

TEST_CASE("iob repair rewrites stray inside tags") {
    std::vector<std::string> tags{"I-ORG", "I-ORG", "O", "B-GPE", "I-ORG", "I-GPE"};
    CHECK(repair_iob(tags) == 3);
    CHECK(tags == std::vector<std::string>{"B-ORG", "I-ORG", "O", "B-GPE", "B-ORG", "B-GPE"});
    CHECK(repair_iob(tags) == 0);
}

TEST_CASE("iob parsing") {
    const EntityTypeSet types;
    const std::string text = "Ο\tO\nΓεώργιος\tB-PERSON\nΠαπαδόπουλος\tI-PERSON\n\nστην\tO\nΑθήνα\tI-GPE\n";
    CHECK_THROWS_AS(parse_iob(text, types, false), CorpusError);
    const auto s = parse_iob(text, types, true);
    REQUIRE(s.size() == 2);
    CHECK(s[0].tokens.size() == 3);
    CHECK(s[1].tags[1] == "B-GPE");
    CHECK(parse_iob(serialize_iob(s), types, false).size() == 2);
    CHECK_THROWS_AS(parse_iob("x\tB-DATE\n", types, false), CorpusError);
    CHECK_THROWS_AS(parse_iob("x B-GPE\n", types, false), CorpusError);

    const auto fixture = load_iob(kFixtures / "ner_50.iob", types, false);
    CHECK(fixture.size() == 50);
}

TEST_CASE("hierarchy and classification records") {
    const auto h = load_hierarchy(kFixtures / "hierarchy.tsv");
    CHECK(h.size(Level::Volume) == 3);
    CHECK(h.size(Level::Chapter) == 6);
    CHECK(h.size(Level::Subject) == 12);
    const int ch = *h.id(Level::Chapter, "ΦΟΡΟΛΟΓΙΑ");
    CHECK(h.names(Level::Volume)[h.chapter_parent(ch)] == "ΟΙΚΟΝΟΜΙΚΑ");
    CHECK_FALSE(h.id(Level::Subject, "ΑΓΝΩΣΤΟ").has_value());

    const auto records = load_classification(kFixtures / "cls.jsonl", h);
    CHECK(records.size() == 120);
    for (const auto& r : records) {
        CHECK(h.chapter_parent(r.chapter) == r.volume);
        CHECK(h.subject_parent(r.subject) == r.chapter);
    }

    const std::string orphan =
        R"({"text":"a","volume":"ΥΓΕΙΑ","chapter":"ΝΟΣΟΚΟΜΕΙΑ","subject":"ΕΞΟΠΛΙΣΜΟΣ"})" "\n"
        R"({"text":"b","volume":"ΥΓΕΙΑ","chapter":"ΦΟΡΟΛΟΓΙΑ","subject":"ΦΠΑ"})" "\n";
    try {
        parse_classification(orphan, h);
        FAIL("expected an error");
    } catch (const CorpusError& e) {
        CHECK(e.where() == 1);
    }
    CHECK_THROWS_AS(parse_hierarchy("a\tb\n"), CorpusError);
}

TEST_CASE("split sizes follow floor with remainder to train") {
    CHECK(split_sizes(1000, {}) == SplitSizes{675, 175, 150});
    // 35411 * 0.175 = 6196.9, 35411 * 0.15 = 5311.65.
    CHECK(split_sizes(35411, {}) == SplitSizes{23904, 6196, 5311});
    CHECK(split_sizes(3, {}) == SplitSizes{3, 0, 0});
    CHECK_THROWS(SplitSpec{0.5, 0.5, 0.5, 0}.validate());
}

TEST_CASE("split partitions the input deterministically") {
    std::vector<int> v(237);
    std::iota(v.begin(), v.end(), 0);
    SplitSpec spec;
    spec.seed = 4;
    const auto a = split<int>(v, spec);
    const auto b = split<int>(v, spec);
    CHECK(a.train == b.train);
    CHECK(a.val == b.val);
    CHECK(a.test == b.test);
    const auto sz = split_sizes(v.size(), spec);
    CHECK(a.train.size() == sz.train);
    CHECK(a.val.size() == sz.val);
    CHECK(a.test.size() == sz.test);
    std::set<int> all(a.train.begin(), a.train.end());
    all.insert(a.val.begin(), a.val.end());
    all.insert(a.test.begin(), a.test.end());
    CHECK(all.size() == v.size());
    spec.seed = 5;
    CHECK(split<int>(v, spec).train != a.train);
}

TEST_CASE("packing keeps documents whole and in order") {
    using tokenizer::TokenId;
    std::vector<std::vector<TokenId>> docs;
    for (int d = 0; d < 30; ++d) docs.push_back(std::vector<TokenId>(1 + (d * 7) % 23, 10 + d));
    docs.push_back(std::vector<TokenId>(45, 99));  // longer than max_len - 2
    const std::size_t max_len = 16;
    const auto seqs = pack_sequences(docs, max_len);

    std::vector<TokenId> flat;
    for (const auto& s : seqs) {
        REQUIRE(s.ids.size() == max_len);
        REQUIRE(s.attention_mask.size() == max_len);
        CHECK(s.ids.front() == tokenizer::kBos);
        for (std::size_t i = 0; i < max_len; ++i) {
            CHECK((s.attention_mask[i] == 1) == (s.ids[i] != tokenizer::kPad));
            if (s.attention_mask[i]) flat.push_back(s.ids[i]);
        }
    }
    std::vector<TokenId> expect;
    for (const auto& d : docs) {
        for (std::size_t at = 0; at < d.size(); at += max_len - 2) {
            expect.push_back(tokenizer::kBos);
            const std::size_t end = std::min(d.size(), at + max_len - 2);
            expect.insert(expect.end(), d.begin() + at, d.begin() + end);
            expect.push_back(tokenizer::kEos);
        }
    }
    CHECK(flat == expect);

    // Two short documents share one row.
    const std::vector<std::vector<TokenId>> two{{5, 6}, {7}};
    const auto packed = pack_sequences(two, 8);
    REQUIRE(packed.size() == 1);
    CHECK(packed[0].ids == std::vector<TokenId>{0, 5, 6, 2, 0, 7, 2, 1});
}
