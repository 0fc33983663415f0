#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "nomos/corpus.hpp"

namespace nomos::metrics {

class MetricsError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct EntitySpan {
    std::string type;
    std::size_t start = 0;  // inclusive
    std::size_t end = 0;    // exclusive
    auto operator<=>(const EntitySpan&) const = default;
};

/// Maximal B-X (I-X)* runs. A stray I-X (after O or another type) opens a
/// span, matching the corpus repair rule.
std::vector<EntitySpan> extract_spans(std::span<const std::string> tags);

struct Counts {
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t fn = 0;
    friend bool operator==(const Counts&, const Counts&) = default;
};

/// Ratios in [0, 1]; 0/0 is 0.
struct Prf {
    double precision = 0;
    double recall = 0;
    double f1 = 0;
    friend bool operator==(const Prf&, const Prf&) = default;
};

Prf prf(const Counts& c);

struct TypeScore {
    std::string type;
    Counts counts;
    Prf score;
    std::size_t support = 0;  // gold spans
    friend bool operator==(const TypeScore&, const TypeScore&) = default;
};

struct NerReport {
    std::vector<TypeScore> per_type;  // in EntityTypeSet order
    Counts total;
    Prf micro;
    double macro_f1 = 0;
    double weighted_f1 = 0;
    friend bool operator==(const NerReport&, const NerReport&) = default;
};

/// Entity-level exact-match scoring over aligned sentences. Spans of types
/// outside `types` raise MetricsError.
NerReport score_ner(std::span<const std::vector<std::string>> gold,
                    std::span<const std::vector<std::string>> pred,
                    const corpus::EntityTypeSet& types);

struct ClsReport {
    double precision = 0;
    double recall = 0;
    double f1 = 0;
    double accuracy = 0;
    std::size_t count = 0;
    std::string level;
};

/// Micro-averaged scores over single-label predictions. Labels must lie in
/// [0, num_labels).
ClsReport score_classification(std::span<const int> gold, std::span<const int> pred,
                               std::size_t num_labels, std::string level = {});

/// Short column name for an entity type (FACILITY -> F, ...); unknown
/// types keep their name.
std::string column_name(const std::string& type);

/// Named metric values in report order, scaled to percent.
struct MetricRow {
    std::vector<std::string> names;
    std::vector<double> values;
    double get(const std::string& name) const;
};

/// Per-type F1 in type order then micro, macro, weighted.
MetricRow to_row(const NerReport& report);
/// precision, recall, f1.
MetricRow to_row(const ClsReport& report);

/// Tab-separated table: one row per entity type (precision, recall, f1,
/// support) followed by micro/macro/weighted rows.
std::string format_ner_table(const NerReport& report);

}  // namespace nomos::metrics
