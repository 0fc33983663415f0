#include "nomos/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <map>

namespace nomos::metrics {

namespace {

double ratio(std::size_t a, std::size_t b) {
    return b == 0 ? 0.0 : static_cast<double>(a) / static_cast<double>(b);
}

std::string fmt(double v, int decimals) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
    return buf;
}

}  // namespace

std::vector<EntitySpan> extract_spans(std::span<const std::string> tags) {
    std::vector<EntitySpan> spans;
    bool open = false;
    for (std::size_t i = 0; i < tags.size(); ++i) {
        const std::string& t = tags[i];
        if (t == "O") {
            open = false;
            continue;
        }
        if (t.size() < 3 || t[1] != '-' || (t[0] != 'B' && t[0] != 'I')) {
            throw MetricsError("malformed tag '" + t + "' at position " + std::to_string(i));
        }
        const std::string type = t.substr(2);
        if (t[0] == 'I' && open && spans.back().type == type) {
            spans.back().end = i + 1;
            continue;
        }
        spans.push_back({type, i, i + 1});
        open = true;
    }
    return spans;
}

Prf prf(const Counts& c) {
    Prf p;
    p.precision = ratio(c.tp, c.tp + c.fp);
    p.recall = ratio(c.tp, c.tp + c.fn);
    // Count form of the harmonic mean: equals precision exactly when fp == fn.
    p.f1 = ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn);
    return p;
}

NerReport score_ner(std::span<const std::vector<std::string>> gold,
                    std::span<const std::vector<std::string>> pred,
                    const corpus::EntityTypeSet& types) {
    if (gold.size() != pred.size()) {
        throw MetricsError("gold has " + std::to_string(gold.size()) + " sentences, pred has " +
                           std::to_string(pred.size()));
    }
    std::map<std::string, std::size_t> index;
    NerReport r;
    for (const auto& t : types.types) {
        index.emplace(t, r.per_type.size());
        r.per_type.push_back({t, {}, {}, 0});
    }
    auto slot = [&](const std::string& type) -> TypeScore& {
        auto it = index.find(type);
        if (it == index.end()) throw MetricsError("entity type '" + type + "' is not configured");
        return r.per_type[it->second];
    };
    for (std::size_t s = 0; s < gold.size(); ++s) {
        if (gold[s].size() != pred[s].size()) {
            throw MetricsError("sentence " + std::to_string(s) + " length differs");
        }
        // Spans from one sequence never overlap, so a two-pointer walk over
        // the (start-ordered) lists finds exact matches.
        const auto g = extract_spans(gold[s]);
        const auto p = extract_spans(pred[s]);
        std::size_t i = 0;
        std::size_t j = 0;
        while (i < g.size() || j < p.size()) {
            if (j == p.size() || (i < g.size() && g[i].start < p[j].start)) {
                slot(g[i].type).counts.fn++;
                slot(g[i].type).support++;
                ++i;
            } else if (i == g.size() || p[j].start < g[i].start) {
                slot(p[j].type).counts.fp++;
                ++j;
            } else if (g[i].end == p[j].end && g[i].type == p[j].type) {
                slot(g[i].type).counts.tp++;
                slot(g[i].type).support++;
                ++i;
                ++j;
            } else {
                slot(g[i].type).counts.fn++;
                slot(g[i].type).support++;
                slot(p[j].type).counts.fp++;
                ++i;
                ++j;
            }
        }
    }
    std::size_t support = 0;
    double macro = 0;
    double weighted = 0;
    for (auto& t : r.per_type) {
        t.score = prf(t.counts);
        r.total.tp += t.counts.tp;
        r.total.fp += t.counts.fp;
        r.total.fn += t.counts.fn;
        macro += t.score.f1;
        weighted += t.score.f1 * static_cast<double>(t.support);
        support += t.support;
    }
    r.micro = prf(r.total);
    r.macro_f1 = r.per_type.empty() ? 0.0 : macro / static_cast<double>(r.per_type.size());
    r.weighted_f1 = support == 0 ? 0.0 : weighted / static_cast<double>(support);
    return r;
}

ClsReport score_classification(std::span<const int> gold, std::span<const int> pred,
                               std::size_t num_labels, std::string level) {
    if (gold.size() != pred.size()) {
        throw MetricsError("gold and pred lengths differ (" + std::to_string(gold.size()) + " vs " +
                           std::to_string(pred.size()) + ")");
    }
    std::size_t correct = 0;
    for (std::size_t i = 0; i < gold.size(); ++i) {
        for (int v : {gold[i], pred[i]}) {
            if (v < 0 || static_cast<std::size_t>(v) >= num_labels) {
                throw MetricsError("label " + std::to_string(v) + " at index " + std::to_string(i) +
                                   " is outside the label set");
            }
        }
        correct += gold[i] == pred[i] ? 1 : 0;
    }
    // Every prediction is one positive for its label: a miss is one fp for the
    // predicted label and one fn for the gold label, so tp+fp = tp+fn = n.
    const Prf p = prf({correct, gold.size() - correct, gold.size() - correct});
    return {p.precision, p.recall, p.f1, ratio(correct, gold.size()), gold.size(), std::move(level)};
}

std::string column_name(const std::string& type) {
    static const std::map<std::string, std::string> names{
        {"FACILITY", "F"}, {"GPE", "GPE"},     {"LEG-REF", "LR"}, {"LOC-NAT", "LN"},
        {"LOC-UNK", "LU"}, {"ORG", "ORG"},     {"PERSON", "P"},   {"PUBLIC-DOC", "PD"}};
    auto it = names.find(type);
    return it == names.end() ? type : it->second;
}

double MetricRow::get(const std::string& name) const {
    for (std::size_t i = 0; i < names.size(); ++i) {
        if (names[i] == name) return values[i];
    }
    throw MetricsError("no metric named '" + name + "'");
}

MetricRow to_row(const NerReport& r) {
    MetricRow row;
    for (const auto& t : r.per_type) {
        row.names.push_back(column_name(t.type));
        row.values.push_back(100.0 * t.score.f1);
    }
    row.names.insert(row.names.end(), {"micro", "macro", "weighted"});
    row.values.insert(row.values.end(),
                      {100.0 * r.micro.f1, 100.0 * r.macro_f1, 100.0 * r.weighted_f1});
    return row;
}

MetricRow to_row(const ClsReport& r) {
    return {{"precision", "recall", "f1"}, {100.0 * r.precision, 100.0 * r.recall, 100.0 * r.f1}};
}

std::string format_ner_table(const NerReport& r) {
    std::string out = "type\tprecision\trecall\tf1\tsupport\n";
    for (const auto& t : r.per_type) {
        out += column_name(t.type) + '\t' + fmt(100 * t.score.precision, 1) + '\t' +
               fmt(100 * t.score.recall, 1) + '\t' + fmt(100 * t.score.f1, 1) + '\t' +
               std::to_string(t.support) + '\n';
    }
    out += "micro\t" + fmt(100 * r.micro.precision, 1) + '\t' + fmt(100 * r.micro.recall, 1) +
           '\t' + fmt(100 * r.micro.f1, 1) + '\t' + std::to_string(r.total.tp + r.total.fn) + '\n';
    out += "macro\t\t\t" + fmt(100 * r.macro_f1, 1) + "\t\n";
    out += "weighted\t\t\t" + fmt(100 * r.weighted_f1, 1) + "\t\n";
    return out;
}

}  // namespace nomos::metrics
