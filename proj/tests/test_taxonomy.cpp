#include <gtest/gtest.h>

#include <cmath>

#include "fixtures.hpp"
#include "support.hpp"
#include "transec/taxonomy.hpp"

using namespace transec;
using namespace transec::taxonomy;

TEST(Schema, ShippedFileMatchesBuiltIn) {
    auto file = load_schema(testkit::source_dir() / "data/taxonomy_schema.jsonl");
    EXPECT_TRUE(file == default_schema());
    EXPECT_EQ(default_schema().categories().size(), 5u);
    EXPECT_EQ(default_schema().subcategories().size(), 20u);
    EXPECT_TRUE(parse_schema(serialize_schema(default_schema())) == default_schema());
}

TEST(Schema, RejectsDanglingSubcategory) {
    EXPECT_THROW(parse_schema(R"({"code":"1.1","name":"x","category":"9"})"), InvalidArgument);
}

TEST(Labels, UnknownCodeRejected) {
    EXPECT_THROW(parse_labels(R"({"case_id":"a","code":"6.1"})"), SchemaError);
    EXPECT_THROW(parse_labels(R"({"case_id":"a","code":"1.1","cwe":"CWE-1"})"), SchemaError);
    auto ok = parse_labels(R"({"case_id":"a","code":"4.3","cwe":"CWE-416","note":"double free"})");
    ASSERT_EQ(ok.size(), 1u);
    EXPECT_EQ(ok[0].cwe, Cwe::UseAfterFree);
}

TEST(Table, Cwe416CategoryFourShare) {
    auto t = distribution_table(fixtures::cwe416_labels(), {});
    EXPECT_EQ(t.column_totals.at("CWE-416"), 93u);
    EXPECT_EQ(t.counts.at("4").at("CWE-416"), 72u);
    EXPECT_EQ(format1(*t.percent("4", "CWE-416")), "77.4");
    EXPECT_FALSE(t.percent("4", "CWE-79"));
    EXPECT_EQ(format1(*t.percent("4", "Total")), "77.4");
}

TEST(Table, ColumnsSumToHundred) {
    SeededRng rng(5);
    for (int trial = 0; trial < 50; ++trial) {
        auto labels = fixtures::random_labels(rng, 1 + rng.below(400));
        auto t = distribution_table(labels, {});
        for (const auto& col : t.columns) {
            if (t.column_totals.at(col) == 0) continue;
            double subs = 0, cats = 0, cats_rounded = 0;
            for (const auto& s : default_schema().subcategories()) subs += *t.percent(s.code, col);
            for (const auto& c : default_schema().categories()) {
                cats += *t.percent(c.code, col);
                cats_rounded += std::stod(format1(*t.percent(c.code, col)));
            }
            EXPECT_NEAR(subs, 100.0, 1e-9);
            EXPECT_NEAR(cats, 100.0, 1e-9);
            EXPECT_LE(std::fabs(cats_rounded - 100.0), 0.3 + 1e-9);
        }
    }
}

TEST(Table, MergeControlsOutOfBoundsColumns) {
    std::vector<PatternLabel> labels{{"a", "4.2", "", "", Cwe::OutOfBoundsWrite},
                                     {"b", "4.2", "", "", Cwe::OutOfBoundsRead},
                                     {"c", "1.1", "", "", std::nullopt}};
    std::map<std::string, Cwe> cases{{"c", Cwe::OutOfBoundsRead}};
    auto merged = distribution_table(labels, cases, true);
    EXPECT_EQ(merged.column_totals.at("CWE-787&125"), 3u);
    EXPECT_EQ(merged.columns.size(), 9u);
    auto split = distribution_table(labels, cases, false);
    EXPECT_EQ(split.column_totals.at("CWE-787"), 1u);
    EXPECT_EQ(split.column_totals.at("CWE-125"), 2u);
    EXPECT_EQ(split.columns.size(), 10u);
    EXPECT_THROW(distribution_table({{"z", "1.1", "", "", std::nullopt}}, {}), InvalidArgument);
}

TEST(Table, TsvLayout) {
    auto t = distribution_table(fixtures::cwe416_labels(), {});
    auto tsv = format_table_tsv(t);
    EXPECT_EQ(tsv.rfind("code\tname\tCWE-20\t", 0), 0u);
    EXPECT_NE(tsv.find("\n4\tMemory & Resource Management\tNA\tNA\tNA\tNA\tNA\tNA\t77.4\tNA\t77.4\n"), std::string::npos)
        << tsv;
    EXPECT_NE(tsv.find("\nn_labels\t\t0\t0\t0\t0\t0\t0\t93\t0\t93\n"), std::string::npos);
}
