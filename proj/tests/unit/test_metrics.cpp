#include "doctest.h"
#include "nomos/metrics.hpp"

using namespace nomos;
using namespace nomos::metrics;

using Tags = std::vector<std::string>;

TEST_CASE("span extraction") {
    const Tags tags{"B-GPE", "I-GPE", "O", "I-ORG", "I-ORG", "B-ORG", "I-PERSON", "O"};
    const auto spans = extract_spans(tags);
    REQUIRE(spans.size() == 4);
    CHECK(spans[0] == EntitySpan{"GPE", 0, 2});
    CHECK(spans[1] == EntitySpan{"ORG", 3, 5});
    CHECK(spans[2] == EntitySpan{"ORG", 5, 6});
    CHECK(spans[3] == EntitySpan{"PERSON", 6, 7});
    CHECK(extract_spans(Tags{}).empty());
    CHECK(extract_spans(Tags{"O", "O"}).empty());
}

TEST_CASE("prf edge cases") {
    CHECK(prf({0, 0, 0}) == Prf{0, 0, 0});
    CHECK(prf({0, 3, 0}) == Prf{0, 0, 0});
    const auto p = prf({3, 1, 2});
    CHECK(p.precision == doctest::Approx(0.75));
    CHECK(p.recall == doctest::Approx(0.6));
    CHECK(p.f1 == doctest::Approx(2 * 0.75 * 0.6 / 1.35));
    const auto s = prf({7, 3, 3});
    CHECK(s.f1 == s.precision);
}

TEST_CASE("ner scoring by hand") {
    const corpus::EntityTypeSet types;
    const std::vector<Tags> gold{{"B-PERSON", "I-PERSON", "O", "B-GPE"}, {"O", "B-LEG-REF"}};
    const std::vector<Tags> pred{{"B-PERSON", "I-PERSON", "O", "B-ORG"}, {"O", "B-LEG-REF"}};
    const auto r = score_ner(gold, pred, types);
    CHECK(r.total == Counts{2, 1, 1});
    CHECK(r.micro.f1 == doctest::Approx(2.0 / 3.0));
    // PERSON and LEG-REF score 1; six types score 0.
    CHECK(r.macro_f1 == doctest::Approx(2.0 / 8.0));
    // Weighted by gold support: PERSON 1, GPE 1, LEG-REF 1.
    CHECK(r.weighted_f1 == doctest::Approx(2.0 / 3.0));
    REQUIRE(r.per_type.size() == 8);
    CHECK(r.per_type[1].type == "GPE");
    CHECK(r.per_type[1].counts == Counts{0, 0, 1});
    CHECK(r.per_type[5].counts == Counts{0, 1, 0});

    const auto row = to_row(r);
    CHECK(row.names.front() == "F");
    CHECK(row.get("P") == doctest::Approx(100.0));
    CHECK(row.get("micro") == doctest::Approx(200.0 / 3.0));
    CHECK_THROWS_AS(row.get("nope"), MetricsError);

    const auto table = format_ner_table(r);
    CHECK(table.rfind("type\tprecision\trecall\tf1\tsupport\n", 0) == 0);
    CHECK(table.find("micro\t66.7\t66.7\t66.7\t3\n") != std::string::npos);
}

TEST_CASE("ner scoring rejects misaligned input") {
    const corpus::EntityTypeSet types;
    CHECK_THROWS_AS(score_ner(std::vector<Tags>{{"O"}}, std::vector<Tags>{}, types), MetricsError);
    CHECK_THROWS_AS(score_ner(std::vector<Tags>{{"O"}}, std::vector<Tags>{{"O", "O"}}, types),
                    MetricsError);
    CHECK_THROWS_AS(score_ner(std::vector<Tags>{{"B-DATE"}}, std::vector<Tags>{{"O"}}, types),
                    MetricsError);
}

TEST_CASE("perfect prediction scores one") {
    const corpus::EntityTypeSet types;
    const std::vector<Tags> gold{{"B-ORG", "I-ORG", "O", "B-FACILITY"}};
    const auto r = score_ner(gold, gold, types);
    CHECK(r.micro == Prf{1, 1, 1});
    CHECK(r.weighted_f1 == 1.0);
}

TEST_CASE("classification scores") {
    const std::vector<int> gold{0, 1, 2, 2, 1, 0, 3};
    const std::vector<int> pred{0, 1, 1, 2, 1, 3, 3};
    const auto r = score_classification(gold, pred, 4, "chapter");
    CHECK(r.count == 7);
    CHECK(r.accuracy == doctest::Approx(5.0 / 7.0));
    CHECK(r.precision == r.accuracy);
    CHECK(r.recall == r.accuracy);
    CHECK(r.f1 == r.accuracy);
    CHECK(r.level == "chapter");
    CHECK(to_row(r).names == std::vector<std::string>{"precision", "recall", "f1"});
    CHECK_THROWS_AS(score_classification(gold, std::vector<int>{0}, 4), MetricsError);
    CHECK_THROWS_AS(score_classification(std::vector<int>{4}, std::vector<int>{0}, 4), MetricsError);
}

TEST_CASE("column names") {
    CHECK(column_name("FACILITY") == "F");
    CHECK(column_name("LEG-REF") == "LR");
    CHECK(column_name("PUBLIC-DOC") == "PD");
    CHECK(column_name("DATE") == "DATE");
}
