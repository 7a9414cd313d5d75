#include <gtest/gtest.h>

#include "oracles.hpp"
#include "support.hpp"
#include "transec/corpus.hpp"

using namespace transec;
using transec::testkit::make_sample;

namespace {

json sample_json() {
    return json::parse(R"({"id":"s1","language":"Java","cwe":"CWE-89","security_status":"patched",
        "code":"a b\nc\n","patch_description":"prepared statement","patch_locations":[[1,2]],
        "token_count":3,"tokenizer_id":"wordpunct-v1","origin":"real_world",
        "cve_id":"CVE-2021-1","commit_url":null})");
}

}  // namespace

TEST(Corpus, SampleRoundTrip) {
    auto s = sample_from_json(sample_json(), 1);
    EXPECT_EQ(s.cwe, Cwe::SqlInjection);
    EXPECT_EQ(s.provenance.origin, Origin::RealWorld);
    auto again = sample_from_json(json::parse(to_json(s).dump()), 1);
    EXPECT_EQ(s, again);
}

TEST(Corpus, RejectsSchemaViolations) {
    auto bad = [](auto mutate) {
        auto j = sample_json();
        mutate(j);
        return j;
    };
    EXPECT_THROW(sample_from_json(bad([](json& j) { j["extra"] = 1; })), SchemaError);
    EXPECT_THROW(sample_from_json(bad([](json& j) { j["cwe"] = "CWE-78"; })), SchemaError);
    EXPECT_THROW(sample_from_json(bad([](json& j) { j["cwe"] = "89"; })), SchemaError);
    EXPECT_THROW(sample_from_json(bad([](json& j) { j["patch_locations"] = json::array({{2, 3}}); })), SchemaError);
    EXPECT_THROW(sample_from_json(bad([](json& j) { j["patch_locations"] = json::array(); })), SchemaError);
    EXPECT_THROW(sample_from_json(bad([](json& j) { j["token_count"] = 4; })), SchemaError);
    EXPECT_THROW(sample_from_json(bad([](json& j) { j["cve_id"] = nullptr; })), SchemaError);
    EXPECT_THROW(sample_from_json(bad([](json& j) { j["origin"] = "constructed"; })), SchemaError);
    EXPECT_THROW(sample_from_json(bad([](json& j) { j.erase("commit_url"); })), SchemaError);
    EXPECT_THROW(sample_from_json(bad([](json& j) { j["tokenizer_id"] = "bpe"; })), SchemaError);
}

TEST(Corpus, DuplicateIdNamesBothLines) {
    auto line = sample_json().dump();
    try {
        parse_corpus(line + "\n" + line + "\n");
        FAIL();
    } catch (const SchemaError& e) {
        EXPECT_EQ(e.line(), 2u);
        EXPECT_NE(std::string(e.what()).find("line 1"), std::string::npos);
    }
}

TEST(Corpus, LookupAndSerializeRoundTrip) {
    auto corpus = make_synthetic_corpus(target_distribution(), 3);
    EXPECT_EQ(corpus.size(), 720u);
    EXPECT_NE(corpus.find("syn-1"), nullptr);
    EXPECT_THROW(corpus.at("nope"), InvalidArgument);
    EXPECT_EQ(parse_corpus(serialize_corpus(corpus)), corpus);
}

TEST(Distribution, TargetCellsSumToDeclaredTotals) {
    auto spec = target_distribution();
    EXPECT_EQ(spec.cells.size(), 30u);
    EXPECT_EQ(spec.computed_totals(), (DistributionTotals{720, 480, 240}));
}

TEST(Distribution, ShippedSpecFileMatchesBuiltIn) {
    auto file = parse_distribution_spec(read_file(testkit::source_dir() / "data/target_distribution.jsonl"));
    EXPECT_EQ(serialize_distribution_spec(file), serialize_distribution_spec(target_distribution()));
}

TEST(Distribution, SpecRejectsInconsistentTotals) {
    auto text = serialize_distribution_spec(target_distribution());
    auto pos = text.find("\"expected_count\":60");
    text.replace(pos, 19, "\"expected_count\":61");
    EXPECT_THROW(parse_distribution_spec(text), SchemaError);
}

TEST(Distribution, SyntheticCorpusValidatesClean) {
    auto report = validate_distribution(make_synthetic_corpus(target_distribution(), 11), target_distribution());
    EXPECT_TRUE(report.clean());
    EXPECT_EQ(report.observed, (DistributionTotals{720, 480, 240}));
}

TEST(Distribution, RemovingOrFlippingASampleIsFlagged) {
    auto corpus = make_synthetic_corpus(target_distribution(), 11);
    auto samples = corpus.samples();
    samples.erase(samples.begin() + 100);
    auto removed = validate_distribution(Corpus(samples), target_distribution());
    ASSERT_EQ(removed.mismatches.size(), 1u);
    EXPECT_EQ(removed.mismatches[0].expected, removed.mismatches[0].observed + 1);

    samples = corpus.samples();
    samples[0].security_status = SecurityStatus::Vulnerable;
    EXPECT_EQ(validate_distribution(Corpus(samples), target_distribution()).mismatches.size(), 2u);
}

TEST(Distribution, UnexpectedCellIsReported) {
    DistributionSpec spec;
    spec.cells.push_back({"Java", Cwe::Xss, SecurityStatus::Patched, 1});
    std::vector<CodeSample> samples{make_sample("a", Language::Java, Cwe::Xss, SecurityStatus::Patched, "x\n"),
                                    make_sample("b", Language::PHP, Cwe::Xss, SecurityStatus::Patched, "x\n")};
    auto r = validate_distribution(Corpus(samples), spec);
    ASSERT_EQ(r.mismatches.size(), 1u);
    EXPECT_EQ(r.mismatches[0].language_group, "PHP");
    EXPECT_EQ(r.mismatches[0].expected, 0u);
}

TEST(Ingest, FiltersAndRecordsSkips) {
    auto code = [](std::size_t n) {
        std::string s;
        for (std::size_t i = 0; i < n; ++i) s += "w ";
        return s;
    };
    std::vector<std::optional<VulnRecord>> feed;
    feed.push_back(VulnRecord{"CVE-1", {"CWE-79"}, {"https://h/c/1"}, {{"a.php", "PHP", code(600)},
                                                                       {"b.py", "Python", code(600)},
                                                                       {"c.php", "PHP", code(100)}}});
    feed.push_back(VulnRecord{"CVE-2", {"CWE-78"}, {"https://h/c/2"}, {{"a.php", "PHP", code(600)}}});
    feed.push_back(VulnRecord{"CVE-3", {"NVD-CWE-Other", "CWE-416"}, {}, {{"a.c", "C", code(600)}}});
    feed.push_back(std::nullopt);
    auto r = ingest_candidates(feed, IngestFilter{});
    ASSERT_EQ(r.candidates.size(), 1u);
    EXPECT_EQ(r.candidates[0].path, "a.php");
    EXPECT_EQ(r.candidates[0].token_count, 600u);
    std::vector<std::string> reasons;
    for (const auto& s : r.skipped) reasons.push_back(s.reason);
    EXPECT_EQ(reasons, (std::vector<std::string>{"language", "token_range", "cwe_not_covered", "no_commit",
                                                 "missing_fields"}));
}

TEST(Ingest, TokenBoundsAreInclusive) {
    std::string at500, at1600, at1601;
    for (int i = 0; i < 500; ++i) at500 += "t ";
    for (int i = 0; i < 1600; ++i) at1600 += "t ";
    at1601 = at1600 + "t";
    auto r = ingest_candidates(std::vector<VulnRecord>{{"CVE-9", {"CWE-20"}, {"u"},
                                                       {{"a", "Java", at500}, {"b", "Java", at1600},
                                                        {"c", "Java", at1601}}}},
                               IngestFilter{});
    EXPECT_EQ(r.candidates.size(), 2u);
}

TEST(Ingest, ParseVulnRecordRejectsMissingFields) {
    EXPECT_FALSE(parse_vuln_record(json::parse(R"({"cwes":[],"files":[]})")));
    EXPECT_TRUE(parse_vuln_record(json::parse(R"({"cve_id":"C","cwes":[],"files":[]})")));
}

TEST(Complexity, BoundariesMatchTierDefinition) {
    Thresholds th;
    for (std::size_t n = 0; n <= 2000; ++n)
        ASSERT_EQ(std::string(to_string(classify_complexity(n, th))), oracle::tier(n)) << n;
}

TEST(Complexity, NearestRankAgreesWithOracle) {
    SeededRng rng(77);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<std::size_t> v(1 + rng.below(60));
        for (auto& x : v) x = rng.below(3000);
        for (unsigned p : {1u, 25u, 33u, 50u, 66u, 75u, 100u}) ASSERT_EQ(nearest_rank_percentile(v, p), oracle::nearest_rank(v, p));
    }
    EXPECT_THROW(nearest_rank_percentile({}, 50), InvalidArgument);
    EXPECT_THROW(nearest_rank_percentile({1}, 0), InvalidArgument);
}

TEST(Complexity, ThresholdsFromCorpus) {
    auto th = compute_thresholds(std::vector<std::size_t>{10, 20, 30, 40, 50, 60, 70, 80, 90});
    EXPECT_EQ(th, (Thresholds{30, 60}));
}
