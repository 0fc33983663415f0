#include "nomos/textnorm.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <exception>
#include <string>

#include <unicode/locid.h>
#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>

#include <json.hpp>
#include <omp.h>

#include "nomos/hash.hpp"

namespace nomos::textnorm {
namespace {

// High halves (0x80..0xFF) of the published code tables; 0 marks an
// unassigned position. The low half of both encodings is ASCII.
constexpr std::array<char16_t, 128> kWindows1253 = {
    0x20AC, 0x0000, 0x201A, 0x0192, 0x201E, 0x2026, 0x2020, 0x2021,
    0x0000, 0x2030, 0x0000, 0x2039, 0x0000, 0x0000, 0x0000, 0x0000,
    0x0000, 0x2018, 0x2019, 0x201C, 0x201D, 0x2022, 0x2013, 0x2014,
    0x0000, 0x2122, 0x0000, 0x203A, 0x0000, 0x0000, 0x0000, 0x0000,
    0x00A0, 0x0385, 0x0386, 0x00A3, 0x00A4, 0x00A5, 0x00A6, 0x00A7,
    0x00A8, 0x00A9, 0x0000, 0x00AB, 0x00AC, 0x00AD, 0x00AE, 0x2015,
    0x00B0, 0x00B1, 0x00B2, 0x00B3, 0x0384, 0x00B5, 0x00B6, 0x00B7,
    0x0388, 0x0389, 0x038A, 0x00BB, 0x038C, 0x00BD, 0x038E, 0x038F,
    0x0390, 0x0391, 0x0392, 0x0393, 0x0394, 0x0395, 0x0396, 0x0397,
    0x0398, 0x0399, 0x039A, 0x039B, 0x039C, 0x039D, 0x039E, 0x039F,
    0x03A0, 0x03A1, 0x0000, 0x03A3, 0x03A4, 0x03A5, 0x03A6, 0x03A7,
    0x03A8, 0x03A9, 0x03AA, 0x03AB, 0x03AC, 0x03AD, 0x03AE, 0x03AF,
    0x03B0, 0x03B1, 0x03B2, 0x03B3, 0x03B4, 0x03B5, 0x03B6, 0x03B7,
    0x03B8, 0x03B9, 0x03BA, 0x03BB, 0x03BC, 0x03BD, 0x03BE, 0x03BF,
    0x03C0, 0x03C1, 0x03C2, 0x03C3, 0x03C4, 0x03C5, 0x03C6, 0x03C7,
    0x03C8, 0x03C9, 0x03CA, 0x03CB, 0x03CC, 0x03CD, 0x03CE, 0x0000,
};

// ISO 8859-7:2003 (includes the euro, drachma and ypogegrammeni additions).
constexpr std::array<char16_t, 128> kIso8859_7 = {
    0x0080, 0x0081, 0x0082, 0x0083, 0x0084, 0x0085, 0x0086, 0x0087,
    0x0088, 0x0089, 0x008A, 0x008B, 0x008C, 0x008D, 0x008E, 0x008F,
    0x0090, 0x0091, 0x0092, 0x0093, 0x0094, 0x0095, 0x0096, 0x0097,
    0x0098, 0x0099, 0x009A, 0x009B, 0x009C, 0x009D, 0x009E, 0x009F,
    0x00A0, 0x2018, 0x2019, 0x00A3, 0x20AC, 0x20AF, 0x00A6, 0x00A7,
    0x00A8, 0x00A9, 0x037A, 0x00AB, 0x00AC, 0x00AD, 0x0000, 0x2015,
    0x00B0, 0x00B1, 0x00B2, 0x00B3, 0x0384, 0x0385, 0x0386, 0x00B7,
    0x0388, 0x0389, 0x038A, 0x00BB, 0x038C, 0x00BD, 0x038E, 0x038F,
    0x0390, 0x0391, 0x0392, 0x0393, 0x0394, 0x0395, 0x0396, 0x0397,
    0x0398, 0x0399, 0x039A, 0x039B, 0x039C, 0x039D, 0x039E, 0x039F,
    0x03A0, 0x03A1, 0x0000, 0x03A3, 0x03A4, 0x03A5, 0x03A6, 0x03A7,
    0x03A8, 0x03A9, 0x03AA, 0x03AB, 0x03AC, 0x03AD, 0x03AE, 0x03AF,
    0x03B0, 0x03B1, 0x03B2, 0x03B3, 0x03B4, 0x03B5, 0x03B6, 0x03B7,
    0x03B8, 0x03B9, 0x03BA, 0x03BB, 0x03BC, 0x03BD, 0x03BE, 0x03BF,
    0x03C0, 0x03C1, 0x03C2, 0x03C3, 0x03C4, 0x03C5, 0x03C6, 0x03C7,
    0x03C8, 0x03C9, 0x03CA, 0x03CB, 0x03CC, 0x03CD, 0x03CE, 0x0000,
};

constexpr char32_t kReplacement = 0xFFFD;

const std::array<char16_t, 128>& table_for(Encoding e) {
    return e == Encoding::Iso8859_7 ? kIso8859_7 : kWindows1253;
}

void append_utf8(std::string& out, char32_t cp) {
    if (cp < 0x80) {
        out.push_back(static_cast<char>(cp));
    } else if (cp < 0x800) {
        out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else if (cp < 0x10000) {
        out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else {
        out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    }
}

// Decodes one strict UTF-8 sequence at `pos`. Returns the sequence length, or
// 0 when the bytes at `pos` do not start a well-formed sequence.
std::size_t decode_utf8_at(std::string_view s, std::size_t pos, char32_t& cp) noexcept {
    const auto b0 = static_cast<unsigned char>(s[pos]);
    if (b0 < 0x80) {
        cp = b0;
        return 1;
    }
    std::size_t len;
    char32_t min;
    if ((b0 & 0xE0) == 0xC0) {
        len = 2;
        cp = b0 & 0x1F;
        min = 0x80;
    } else if ((b0 & 0xF0) == 0xE0) {
        len = 3;
        cp = b0 & 0x0F;
        min = 0x800;
    } else if ((b0 & 0xF8) == 0xF0) {
        len = 4;
        cp = b0 & 0x07;
        min = 0x10000;
    } else {
        return 0;
    }
    if (pos + len > s.size()) return 0;
    for (std::size_t i = 1; i < len; ++i) {
        const auto b = static_cast<unsigned char>(s[pos + i]);
        if ((b & 0xC0) != 0x80) return 0;
        cp = (cp << 6) | (b & 0x3F);
    }
    if (cp < min || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) return 0;
    return len;
}

bool is_greek_letter(char32_t cp) {
    return cp >= 0x0370 && cp <= 0x03FF && u_isalpha(static_cast<UChar32>(cp));
}

bool is_unassigned_or_c1(char16_t cp) { return cp == 0 || (cp >= 0x80 && cp <= 0x9F); }

const icu::Normalizer2& nfkd() {
    UErrorCode status = U_ZERO_ERROR;
    const icu::Normalizer2* n = icu::Normalizer2::getNFKDInstance(status);
    if (U_FAILURE(status) || n == nullptr) {
        throw std::runtime_error("ICU NFKD normalizer unavailable");
    }
    return *n;
}

// Spacing diacritics (e.g. U+0384 GREEK TONOS) decompose to a space followed
// only by combining marks. Under accent stripping they are accents, so they
// are dropped whole instead of leaving a stray space behind.
bool is_spacing_accent(const icu::Normalizer2& norm, UChar32 c) {
    icu::UnicodeString d;
    if (!norm.getDecomposition(c, d) || d.length() < 2 || d.charAt(0) != 0x20) return false;
    for (int32_t i = 1; i < d.length();) {
        const UChar32 m = d.char32At(i);
        if (u_charType(m) != U_NON_SPACING_MARK) return false;
        i += U16_LENGTH(m);
    }
    return true;
}

icu::UnicodeString strip_marks(const icu::UnicodeString& s) {
    icu::UnicodeString out;
    for (int32_t i = 0; i < s.length();) {
        const UChar32 c = s.char32At(i);
        if (u_charType(c) != U_NON_SPACING_MARK) out.append(c);
        i += U16_LENGTH(c);
    }
    return out;
}

icu::UnicodeString casefold_stage(const icu::UnicodeString& in, const NormConfig& config) {
    const icu::Normalizer2& norm = nfkd();
    icu::UnicodeString s;
    if (config.strip_accents) {
        for (int32_t i = 0; i < in.length();) {
            const UChar32 c = in.char32At(i);
            if (!is_spacing_accent(norm, c)) s.append(c);
            i += U16_LENGTH(c);
        }
    } else {
        s = in;
    }
    // Lowercasing can reintroduce decomposable characters or marks (U+0130
    // lowercases to i + U+0307), so the stage is iterated to a fixed point.
    for (int round = 0; round < 4; ++round) {
        icu::UnicodeString next = s;
        if (config.apply_nfkd) {
            UErrorCode status = U_ZERO_ERROR;
            next = norm.normalize(next, status);
            if (U_FAILURE(status)) throw std::runtime_error("NFKD normalization failed");
        }
        if (config.strip_accents) next = strip_marks(next);
        if (config.lowercase) next.toLower(icu::Locale::getRoot());
        if (next == s && round > 0) break;
        s = std::move(next);
    }
    return s;
}

icu::UnicodeString collapse(const icu::UnicodeString& s) {
    icu::UnicodeString out;
    bool pending_space = false;
    for (int32_t i = 0; i < s.length();) {
        const UChar32 c = s.char32At(i);
        i += U16_LENGTH(c);
        if (u_isUWhiteSpace(c)) {
            pending_space = !out.isEmpty();
            continue;
        }
        if (pending_space) out.append(static_cast<UChar>(0x20));
        pending_space = false;
        out.append(c);
    }
    return out;
}

std::string lower_ascii(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

}  // namespace

std::string_view to_string(Encoding e) noexcept {
    switch (e) {
        case Encoding::Utf8: return "utf-8";
        case Encoding::Windows1253: return "windows-1253";
        case Encoding::Iso8859_7: return "iso-8859-7";
        case Encoding::Unknown: return "unknown";
    }
    return "unknown";
}

Encoding parse_encoding(std::string_view label) {
    const std::string l = lower_ascii(label);
    if (l == "utf-8" || l == "utf8") return Encoding::Utf8;
    if (l == "windows-1253" || l == "cp1253") return Encoding::Windows1253;
    if (l == "iso-8859-7" || l == "iso8859-7" || l == "iso_8859-7") return Encoding::Iso8859_7;
    if (l == "unknown" || l.empty()) return Encoding::Unknown;
    throw std::invalid_argument("unsupported encoding label: " + std::string(label));
}

void NormConfig::validate() const {
    if (strip_accents && !apply_nfkd) {
        throw std::invalid_argument("strip_accents requires apply_nfkd");
    }
}

std::string NormConfig::fingerprint() const {
    std::string key = "norm-v1:";
    key += apply_nfkd ? '1' : '0';
    key += strip_accents ? '1' : '0';
    key += lowercase ? '1' : '0';
    key += collapse_whitespace ? '1' : '0';
    return nomos::fingerprint(key);
}

bool is_valid_utf8(std::string_view bytes) noexcept {
    char32_t cp;
    for (std::size_t i = 0; i < bytes.size();) {
        const std::size_t n = decode_utf8_at(bytes, i, cp);
        if (n == 0) return false;
        i += n;
    }
    return true;
}

std::optional<char32_t> legacy_code_point(std::uint8_t byte, Encoding encoding) {
    if (byte < 0x80) return byte;
    const char16_t cp = table_for(encoding)[byte - 0x80];
    if (cp == 0) return std::nullopt;
    return cp;
}

std::optional<std::uint8_t> legacy_byte(char32_t cp, Encoding encoding) {
    if (cp < 0x80) return static_cast<std::uint8_t>(cp);
    const auto& t = table_for(encoding);
    for (std::size_t i = 0; i < t.size(); ++i) {
        if (t[i] != 0 && t[i] == cp) return static_cast<std::uint8_t>(0x80 + i);
    }
    return std::nullopt;
}

Encoding detect_encoding(std::string_view bytes) noexcept {
    if (is_valid_utf8(bytes)) return Encoding::Utf8;
    long win = 0;
    long iso = 0;
    for (unsigned char b : bytes) {
        if (b < 0x80) continue;
        const char16_t w = kWindows1253[b - 0x80];
        const char16_t i = kIso8859_7[b - 0x80];
        if (w == i) continue;
        if (is_greek_letter(w) && !is_greek_letter(i)) win += 2;
        if (is_greek_letter(i) && !is_greek_letter(w)) iso += 2;
        if (is_unassigned_or_c1(w)) iso += 1;
        if (is_unassigned_or_c1(i)) win += 1;
    }
    return iso > win ? Encoding::Iso8859_7 : Encoding::Windows1253;
}

TranscodeResult transcode(std::string_view bytes, Encoding encoding) {
    if (encoding == Encoding::Unknown) encoding = detect_encoding(bytes);
    TranscodeResult r;
    r.text.reserve(bytes.size() + bytes.size() / 2);
    if (encoding == Encoding::Utf8) {
        char32_t cp;
        for (std::size_t i = 0; i < bytes.size();) {
            const std::size_t n = decode_utf8_at(bytes, i, cp);
            if (n == 0) {
                append_utf8(r.text, kReplacement);
                ++r.replacements;
                ++i;
            } else {
                r.text.append(bytes.substr(i, n));
                i += n;
            }
        }
        return r;
    }
    for (unsigned char b : bytes) {
        const auto cp = legacy_code_point(b, encoding);
        if (!cp) ++r.replacements;
        append_utf8(r.text, cp.value_or(kReplacement));
    }
    return r;
}

std::string encode_legacy(std::string_view utf8, Encoding encoding) {
    if (encoding != Encoding::Windows1253 && encoding != Encoding::Iso8859_7) {
        throw std::invalid_argument("encode_legacy needs a legacy encoding");
    }
    std::string out;
    out.reserve(utf8.size());
    char32_t cp;
    for (std::size_t i = 0; i < utf8.size();) {
        const std::size_t n = decode_utf8_at(utf8, i, cp);
        if (n == 0) throw std::invalid_argument("encode_legacy: input is not valid UTF-8");
        const auto b = legacy_byte(cp, encoding);
        if (!b) {
            throw std::invalid_argument("code point U+" + Fnv1a::to_hex(cp).substr(10) +
                                        " not representable in " +
                                        std::string(to_string(encoding)));
        }
        out.push_back(static_cast<char>(*b));
        i += n;
    }
    return out;
}

std::string normalize(std::string_view utf8, const NormConfig& config) {
    config.validate();
    if (utf8.empty()) return {};
    icu::UnicodeString s = icu::UnicodeString::fromUTF8(
        icu::StringPiece(utf8.data(), static_cast<int32_t>(utf8.size())));
    if (config.apply_nfkd || config.lowercase) s = casefold_stage(s, config);
    if (config.collapse_whitespace) s = collapse(s);
    std::string out;
    s.toUTF8String(out);
    return out;
}

NormalizedDocument normalize_document(const RawDocument& doc, const NormConfig& config,
                                      DocumentReport* report, double corruption_threshold) {
    const Encoding detected = detect_encoding(doc.bytes);
    Encoding used = doc.declared_encoding.value_or(Encoding::Unknown);
    if (used == Encoding::Unknown) used = detected;
    TranscodeResult decoded = transcode(doc.bytes, used);
    if (report != nullptr) {
        report->source_id = doc.source_id;
        report->detected = detected;
        report->used = used;
        report->bytes = doc.bytes.size();
        report->replacements = decoded.replacements;
        report->corrupted =
            !doc.bytes.empty() && static_cast<double>(decoded.replacements) >
                                      corruption_threshold * static_cast<double>(doc.bytes.size());
    }
    return {normalize_lines(decoded.text, config), doc.source_id, config.fingerprint()};
}

std::string normalize_lines(std::string_view utf8, const NormConfig& config) {
    std::string out;
    std::size_t pos = 0;
    while (pos <= utf8.size()) {
        std::size_t end = utf8.find('\n', pos);
        if (end == std::string_view::npos) end = utf8.size();
        const std::string line = normalize(utf8.substr(pos, end - pos), config);
        if (!line.empty() && line.find_first_not_of(" \t\r") != std::string::npos) {
            if (!out.empty()) out += '\n';
            out += line;
        }
        pos = end + 1;
    }
    return out;
}

std::vector<NormalizedDocument> normalize_documents(std::span<const RawDocument> docs,
                                                    const NormConfig& config,
                                                    std::vector<DocumentReport>* reports,
                                                    double corruption_threshold, int jobs) {
    config.validate();
    std::vector<NormalizedDocument> out(docs.size());
    std::vector<DocumentReport> local(docs.size());
    const int threads = jobs > 0 ? jobs : omp_get_max_threads();
    const auto n = static_cast<std::ptrdiff_t>(docs.size());
    std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic, 1) num_threads(threads)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        try {
            out[i] = normalize_document(docs[i], config, &local[i], corruption_threshold);
        } catch (...) {
#pragma omp critical(nomos_textnorm_failure)
            if (!failure) failure = std::current_exception();
        }
    }
    if (failure) std::rethrow_exception(failure);
    if (reports != nullptr) *reports = std::move(local);
    return out;
}

std::string report_line(const DocumentReport& report) {
    nlohmann::ordered_json j;
    j["source_id"] = report.source_id;
    j["detected_encoding"] = to_string(report.detected);
    j["used_encoding"] = to_string(report.used);
    j["bytes"] = report.bytes;
    j["replacements"] = report.replacements;
    j["corrupted"] = report.corrupted;
    return j.dump();
}

}  // namespace nomos::textnorm
