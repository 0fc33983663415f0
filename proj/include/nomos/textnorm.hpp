#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace nomos::textnorm {

enum class Encoding { Utf8, Windows1253, Iso8859_7, Unknown };

std::string_view to_string(Encoding e) noexcept;
/// Accepts "utf-8", "windows-1253", "iso-8859-7", "unknown" (case-insensitive,
/// a few common aliases). Throws std::invalid_argument otherwise.
Encoding parse_encoding(std::string_view label);

struct RawDocument {
    std::string bytes;
    std::optional<Encoding> declared_encoding;
    std::string source_id;
};

struct NormConfig {
    bool apply_nfkd = true;
    bool strip_accents = true;
    bool lowercase = true;
    bool collapse_whitespace = true;

    /// Throws std::invalid_argument when strip_accents is set without apply_nfkd.
    void validate() const;
    /// Stable hash of the flag values.
    std::string fingerprint() const;
};

struct NormalizedDocument {
    std::string text;  // UTF-8
    std::string source_id;
    std::string config_fingerprint;
};

struct TranscodeResult {
    std::string text;  // UTF-8
    std::size_t replacements = 0;
};

/// Default corruption threshold: fraction of input bytes replaced by U+FFFD.
inline constexpr double kDefaultCorruptionThreshold = 0.005;

/// Strict UTF-8 validation (no overlongs, no surrogates, max U+10FFFF).
bool is_valid_utf8(std::string_view bytes) noexcept;

/// Picks utf-8 when the bytes are strict UTF-8; otherwise scores the bytes
/// that the two legacy tables map differently and returns the winner.
/// Never returns Encoding::Unknown.
///
/// Scoring, per byte in the disagreement set:
///   +2 to a table that maps the byte to a Greek letter the other table does not;
///   +1 to the other table when a table leaves the byte unassigned or maps it
///      to a C1 control.
/// Ties go to windows-1253.
Encoding detect_encoding(std::string_view bytes) noexcept;

/// Decodes with the published code table of `encoding`. Unassigned bytes (and
/// malformed UTF-8 sequences) become U+FFFD and are counted.
/// Encoding::Unknown is resolved with detect_encoding first.
TranscodeResult transcode(std::string_view bytes, Encoding encoding);

/// Code point for `byte` in a legacy table, or nullopt when unassigned.
std::optional<char32_t> legacy_code_point(std::uint8_t byte, Encoding encoding);

/// Inverse of the legacy table; nullopt when `cp` is not representable.
std::optional<std::uint8_t> legacy_byte(char32_t cp, Encoding encoding);

/// Encodes UTF-8 text into a legacy encoding. Throws std::invalid_argument on
/// the first unrepresentable code point.
std::string encode_legacy(std::string_view utf8, Encoding encoding);

/// NFKD, then combining-mark (Mn) removal, then lowercasing, then whitespace
/// collapse, each gated by `config`. Input must be valid UTF-8.
/// The result is a fixed point: normalize(normalize(s)) == normalize(s).
std::string normalize(std::string_view utf8, const NormConfig& config = {});

/// Normalizes each LF-separated line on its own and drops lines that end up
/// empty; lines are joined with a single LF.
std::string normalize_lines(std::string_view utf8, const NormConfig& config = {});

struct DocumentReport {
    std::string source_id;
    Encoding detected = Encoding::Utf8;
    Encoding used = Encoding::Utf8;
    std::size_t bytes = 0;
    std::size_t replacements = 0;
    bool corrupted = false;
};

/// Full per-document path: detect (when undeclared), transcode, normalize_lines.
NormalizedDocument normalize_document(const RawDocument& doc, const NormConfig& config,
                                      DocumentReport* report = nullptr,
                                      double corruption_threshold = kDefaultCorruptionThreshold);

/// Batch form. Output order follows input order regardless of scheduling.
/// `jobs` <= 0 uses the OpenMP default.
std::vector<NormalizedDocument> normalize_documents(std::span<const RawDocument> docs,
                                                    const NormConfig& config,
                                                    std::vector<DocumentReport>* reports = nullptr,
                                                    double corruption_threshold =
                                                        kDefaultCorruptionThreshold,
                                                    int jobs = 0);

/// One line of the sidecar report (JSON object, no trailing newline).
std::string report_line(const DocumentReport& report);

}  // namespace nomos::textnorm
