#include <array>
#include <string>

#include "doctest.h"
#include "nomos/textnorm.hpp"

using namespace nomos::textnorm;

namespace {

// Upper halves (0x80..0xFF) of the code tables as decoded by Python's cp1253
// and iso8859_7 codecs; 0xFFFD marks an unassigned byte.
constexpr std::array<char32_t, 128> kCp1253 = {
    0x20AC, 0xFFFD, 0x201A, 0x0192, 0x201E, 0x2026, 0x2020, 0x2021, 0xFFFD, 0x2030, 0xFFFD, 0x2039,
    0xFFFD, 0xFFFD, 0xFFFD, 0xFFFD, 0xFFFD, 0x2018, 0x2019, 0x201C, 0x201D, 0x2022, 0x2013, 0x2014,
    0xFFFD, 0x2122, 0xFFFD, 0x203A, 0xFFFD, 0xFFFD, 0xFFFD, 0xFFFD, 0x00A0, 0x0385, 0x0386, 0x00A3,
    0x00A4, 0x00A5, 0x00A6, 0x00A7, 0x00A8, 0x00A9, 0xFFFD, 0x00AB, 0x00AC, 0x00AD, 0x00AE, 0x2015,
    0x00B0, 0x00B1, 0x00B2, 0x00B3, 0x0384, 0x00B5, 0x00B6, 0x00B7, 0x0388, 0x0389, 0x038A, 0x00BB,
    0x038C, 0x00BD, 0x038E, 0x038F, 0x0390, 0x0391, 0x0392, 0x0393, 0x0394, 0x0395, 0x0396, 0x0397,
    0x0398, 0x0399, 0x039A, 0x039B, 0x039C, 0x039D, 0x039E, 0x039F, 0x03A0, 0x03A1, 0xFFFD, 0x03A3,
    0x03A4, 0x03A5, 0x03A6, 0x03A7, 0x03A8, 0x03A9, 0x03AA, 0x03AB, 0x03AC, 0x03AD, 0x03AE, 0x03AF,
    0x03B0, 0x03B1, 0x03B2, 0x03B3, 0x03B4, 0x03B5, 0x03B6, 0x03B7, 0x03B8, 0x03B9, 0x03BA, 0x03BB,
    0x03BC, 0x03BD, 0x03BE, 0x03BF, 0x03C0, 0x03C1, 0x03C2, 0x03C3, 0x03C4, 0x03C5, 0x03C6, 0x03C7,
    0x03C8, 0x03C9, 0x03CA, 0x03CB, 0x03CC, 0x03CD, 0x03CE, 0xFFFD};

constexpr std::array<char32_t, 128> kIso8859_7 = {
    0x0080, 0x0081, 0x0082, 0x0083, 0x0084, 0x0085, 0x0086, 0x0087, 0x0088, 0x0089, 0x008A, 0x008B,
    0x008C, 0x008D, 0x008E, 0x008F, 0x0090, 0x0091, 0x0092, 0x0093, 0x0094, 0x0095, 0x0096, 0x0097,
    0x0098, 0x0099, 0x009A, 0x009B, 0x009C, 0x009D, 0x009E, 0x009F, 0x00A0, 0x2018, 0x2019, 0x00A3,
    0x20AC, 0x20AF, 0x00A6, 0x00A7, 0x00A8, 0x00A9, 0x037A, 0x00AB, 0x00AC, 0x00AD, 0xFFFD, 0x2015,
    0x00B0, 0x00B1, 0x00B2, 0x00B3, 0x0384, 0x0385, 0x0386, 0x00B7, 0x0388, 0x0389, 0x038A, 0x00BB,
    0x038C, 0x00BD, 0x038E, 0x038F, 0x0390, 0x0391, 0x0392, 0x0393, 0x0394, 0x0395, 0x0396, 0x0397,
    0x0398, 0x0399, 0x039A, 0x039B, 0x039C, 0x039D, 0x039E, 0x039F, 0x03A0, 0x03A1, 0xFFFD, 0x03A3,
    0x03A4, 0x03A5, 0x03A6, 0x03A7, 0x03A8, 0x03A9, 0x03AA, 0x03AB, 0x03AC, 0x03AD, 0x03AE, 0x03AF,
    0x03B0, 0x03B1, 0x03B2, 0x03B3, 0x03B4, 0x03B5, 0x03B6, 0x03B7, 0x03B8, 0x03B9, 0x03BA, 0x03BB,
    0x03BC, 0x03BD, 0x03BE, 0x03BF, 0x03C0, 0x03C1, 0x03C2, 0x03C3, 0x03C4, 0x03C5, 0x03C6, 0x03C7,
    0x03C8, 0x03C9, 0x03CA, 0x03CB, 0x03CC, 0x03CD, 0x03CE, 0xFFFD};

void check_table(Encoding enc, const std::array<char32_t, 128>& table) {
    for (int b = 0; b < 128; ++b) {
        CHECK(legacy_code_point(static_cast<std::uint8_t>(b), enc) == static_cast<char32_t>(b));
    }
    for (int i = 0; i < 128; ++i) {
        const auto got = legacy_code_point(static_cast<std::uint8_t>(0x80 + i), enc);
        INFO("byte " << (0x80 + i));
        if (table[i] == 0xFFFD) {
            CHECK_FALSE(got.has_value());
        } else {
            REQUIRE(got.has_value());
            CHECK(*got == table[i]);
            CHECK(legacy_byte(*got, enc) == static_cast<std::uint8_t>(0x80 + i));
        }
    }
}

}  // namespace

TEST_CASE("legacy tables match the published mappings") {
    check_table(Encoding::Windows1253, kCp1253);
    check_table(Encoding::Iso8859_7, kIso8859_7);
}

TEST_CASE("encoding labels") {
    CHECK(parse_encoding("UTF-8") == Encoding::Utf8);
    CHECK(parse_encoding("cp1253") == Encoding::Windows1253);
    CHECK(parse_encoding("ISO-8859-7") == Encoding::Iso8859_7);
    CHECK(parse_encoding("unknown") == Encoding::Unknown);
    CHECK_THROWS_AS(parse_encoding("latin-1"), std::invalid_argument);
    CHECK(to_string(Encoding::Windows1253) == "windows-1253");
}

TEST_CASE("strict utf-8 validation") {
    CHECK(is_valid_utf8("Αθήνα"));
    CHECK(is_valid_utf8(""));
    CHECK_FALSE(is_valid_utf8("\xC0\xAF"));          // overlong
    CHECK_FALSE(is_valid_utf8("\xED\xA0\x80"));      // surrogate
    CHECK_FALSE(is_valid_utf8("\xF4\x90\x80\x80"));  // above U+10FFFF
    CHECK_FALSE(is_valid_utf8("\xCE"));              // truncated
}

TEST_CASE("detection separates the two legacy tables") {
    const std::string text = "Άρθρο 5. Η απόφαση ισχύει από τη δημοσίευσή της.";
    CHECK(detect_encoding(text) == Encoding::Utf8);
    CHECK(detect_encoding(encode_legacy(text, Encoding::Windows1253)) == Encoding::Windows1253);
    CHECK(detect_encoding(encode_legacy(text, Encoding::Iso8859_7)) == Encoding::Iso8859_7);
    // Bytes outside the disagreement set tie and go to windows-1253.
    CHECK(detect_encoding(encode_legacy("Η απόφαση", Encoding::Iso8859_7)) == Encoding::Windows1253);
}

TEST_CASE("transcode counts replacements") {
    const auto r = transcode("\xC1\x81\xE1", Encoding::Windows1253);
    CHECK(r.text == "Α\xEF\xBF\xBD" "α");
    CHECK(r.replacements == 1);
    const auto u = transcode("ok\xFF", Encoding::Utf8);
    CHECK(u.replacements == 1);
    CHECK_THROWS_AS(encode_legacy("ℵ", Encoding::Iso8859_7), std::invalid_argument);
}

// Expected strings computed with Python: NFKD, drop category Mn, str.lower,
// whitespace split/join.
TEST_CASE("normalize matches the Python reference") {
    CHECK(normalize("Άρθρο 5 του Συντάγματος") == "αρθρο 5 του συνταγματος");
    CHECK(normalize("ΟΔΟΣ  ΣΤΑΔΙΟΥ\t12") == "οδος σταδιου 12");
    CHECK(normalize("Ἀθῆναι καὶ Πειραιεύς") == "αθηναι και πειραιευς");
    CHECK(normalize("ﬁnal ＡＢＣ ① Ⅻ") == "final abc 1 xii");
    CHECK(normalize("ΪΫ ϊϋ ΐΰ") == "ιυ ιυ ιυ");
    CHECK(normalize("  a b c  ") == "a b c");
    CHECK(normalize("ΚΑΤΑΣΤΑΣΗΣ ΟΔΟΣ") == "καταστασης οδος");
}

TEST_CASE("flags gate each stage") {
    NormConfig keep_case;
    keep_case.lowercase = false;
    CHECK(normalize("Άρθρο", keep_case) == "Αρθρο");

    NormConfig accents;
    accents.strip_accents = false;
    CHECK(normalize("Ά", accents) == "ά");

    NormConfig none{false, false, false, false};
    CHECK(normalize(" Ά  x ", none) == " Ά  x ");

    NormConfig bad;
    bad.apply_nfkd = false;
    CHECK_THROWS_AS(normalize("x", bad), std::invalid_argument);
    CHECK(NormConfig{}.fingerprint() != keep_case.fingerprint());
}

TEST_CASE("spacing tonos is dropped whole") {
    CHECK(normalize("Α΄ τάξη") == "α ταξη");
    CHECK(normalize("Α΄") == "α");
}

TEST_CASE("normalize_lines keeps line structure") {
    CHECK(normalize_lines("Α  Β\n\n  \nΓ\r\n") == "α β\nγ");
    CHECK(normalize_lines("") == "");
}

TEST_CASE("document path converges across encodings") {
    const std::string text = "Η ΠΡΟΘΕΣΜΙΑ είναι 30 ημέρες.\nΆρθρο 2";
    std::string out[3];
    RawDocument d;
    d.bytes = text;
    d.declared_encoding = Encoding::Utf8;
    out[0] = normalize_document(d, {}).text;
    d.bytes = encode_legacy(text, Encoding::Windows1253);
    d.declared_encoding.reset();
    out[1] = normalize_document(d, {}).text;
    d.bytes = encode_legacy(text, Encoding::Iso8859_7);
    d.declared_encoding = Encoding::Iso8859_7;
    out[2] = normalize_document(d, {}).text;
    CHECK(out[0] == "η προθεσμια ειναι 30 ημερες.\nαρθρο 2");
    CHECK(out[1] == out[0]);
    CHECK(out[2] == out[0]);
}

TEST_CASE("corruption threshold marks documents") {
    RawDocument d;
    d.source_id = "x";
    d.declared_encoding = Encoding::Windows1253;
    d.bytes = std::string(199, 'a') + "\x81";  // 0.5% replaced: not over
    DocumentReport r;
    normalize_document(d, {}, &r);
    CHECK(r.replacements == 1);
    CHECK_FALSE(r.corrupted);
    d.bytes = std::string(99, 'a') + "\x81";  // 1%
    normalize_document(d, {}, &r);
    CHECK(r.corrupted);
    CHECK(report_line(r).find("\"corrupted\":true") != std::string::npos);
}

TEST_CASE("batch normalization keeps input order") {
    std::vector<RawDocument> docs;
    for (int i = 0; i < 40; ++i) docs.push_back({"ΛΕΞΗ " + std::to_string(i), {}, std::to_string(i)});
    std::vector<DocumentReport> reports;
    const auto out = normalize_documents(docs, {}, &reports, kDefaultCorruptionThreshold, 4);
    REQUIRE(out.size() == 40);
    for (int i = 0; i < 40; ++i) {
        CHECK(out[i].text == "λεξη " + std::to_string(i));
        CHECK(out[i].source_id == std::to_string(i));
        CHECK(reports[i].source_id == std::to_string(i));
    }
}
