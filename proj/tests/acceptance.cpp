// Acceptance suite: one PASS/FAIL line per primary criterion. Exit status is
// non-zero when any criterion fails.

#include <chrono>
#include <cmath>
#include <functional>
#include <iostream>
#include <sstream>

#include "fixtures.hpp"
#include "golden_prompts.hpp"
#include "oracles.hpp"
#include "review_sim.hpp"
#include "support.hpp"
#include "transec/corpus.hpp"
#include "transec/judge.hpp"
#include "transec/metrics.hpp"
#include "transec/rag.hpp"
#include "transec/review.hpp"
#include "transec/scripted_client.hpp"
#include "transec/taxonomy.hpp"

using namespace transec;

namespace {

/// Collects the first failure message of a criterion.
struct Check {
    std::string failure;
    std::string detail;
    void expect(bool ok, const std::string& what) {
        if (!ok && failure.empty()) failure = what;
    }
};

using Clock = std::chrono::steady_clock;

int g_failed = 0;

void criterion(const std::string& name, double budget_s, const std::function<void(Check&)>& body) {
    Check c;
    auto t0 = Clock::now();
    try {
        body(c);
    } catch (const std::exception& e) {
        c.expect(false, std::string("exception: ") + e.what());
    }
    double secs = std::chrono::duration<double>(Clock::now() - t0).count();
    if (budget_s > 0) {
        std::ostringstream s;
        s << "runtime " << secs << " s exceeds " << budget_s << " s";
        c.expect(secs < budget_s, s.str());
    }
    const bool ok = c.failure.empty();
    g_failed += ok ? 0 : 1;
    std::printf("%s  %-28s %8.3f s  %s\n", ok ? "PASS" : "FAIL", name.c_str(), secs,
                ok ? c.detail.c_str() : c.failure.c_str());
    std::fflush(stdout);
}

std::string fmt(double x) { return metrics::format1(x); }

// ---------------------------------------------------------------------------

void f1_arithmetic(Check& c) {
    struct Row {
        std::size_t tp, fp, fn;
        double p, r, f1;
    };
    const Row rows[] = {{7, 2, 17, 77.8, 29.2, 42.5},
                        {12, 11, 12, 52.2, 50.0, 51.1},
                        {2, 2, 1, 50.0, 66.7, 57.2},
                        {11, 4, 14, 73.3, 44.0, 55.0},
                        {19, 4, 6, 82.6, 76.0, 79.2}};
    for (const auto& row : rows) {
        std::vector<bool> pred, label;
        auto push = [&](std::size_t n, bool p, bool l) {
            for (std::size_t i = 0; i < n; ++i) pred.push_back(p), label.push_back(l);
        };
        push(row.tp, true, true);
        push(row.fp, true, false);
        push(row.fn, false, true);
        push(5, false, false);
        auto s = evaluate_detector(pred, label);
        const std::string tag = "(" + fmt(row.p) + ", " + fmt(row.r) + ")";
        c.expect(s.precision && std::fabs(100 * *s.precision - row.p) <= 0.1, tag + " precision off");
        c.expect(s.recall && std::fabs(100 * *s.recall - row.r) <= 0.1, tag + " recall off");
        c.expect(s.f1 && std::fabs(100 * *s.f1 - row.f1) <= 0.1 + 1e-9,
                 tag + " F1 " + (s.f1 ? fmt(100 * *s.f1) : "NA") + " vs " + fmt(row.f1));
        auto from_pair = f1_score(row.p, row.r);
        c.expect(from_pair && std::fabs(*from_pair - row.f1) <= 0.1, tag + " F1 from the pair off");
    }
    c.detail = "5 rows within 0.1 pp";
}

void distribution(Check& c) {
    const auto spec = target_distribution();
    auto corpus = make_synthetic_corpus(spec, 1);
    auto report = validate_distribution(corpus, spec);
    c.expect(report.clean(), "synthetic corpus has mismatches");
    c.expect(report.observed == DistributionTotals{720, 480, 240}, "totals are not 720/480/240");
    std::map<std::tuple<std::string, Cwe, SecurityStatus>, std::size_t> cells;
    for (const auto& s : corpus.samples()) ++cells[std::make_tuple(std::string(language_group(s.language)), s.cwe, s.security_status)];
    for (const auto& cell : spec.cells)
        c.expect(cells[std::make_tuple(cell.language_group, cell.cwe, cell.status)] == cell.expected_count,
                 "cell count differs for " + cell.language_group + " " + to_string(cell.cwe));

    // Each perturbation is applied in place to one working copy and then undone.
    auto work = corpus.samples();
    std::size_t perturbations = 0;
    auto flagged = [&](const std::string& what) {
        ++perturbations;
        if (validate_distribution(work, spec).clean()) c.expect(false, what + " not flagged");
    };
    for (std::size_t i = 0; i < work.size(); ++i) {
        const auto id = work[i].id;
        std::swap(work[i], work.back());
        auto taken = std::move(work.back());
        work.pop_back();
        flagged("removal of " + id);
        work.push_back(std::move(taken));
        std::swap(work[i], work.back());

        auto& s = work[i];
        const auto status = s.security_status;
        s.security_status = status == SecurityStatus::Patched ? SecurityStatus::Vulnerable : SecurityStatus::Patched;
        flagged("status flip of " + id);
        s.security_status = status;

        const auto cwe = s.cwe;
        s.cwe = cwe == Cwe::Xss ? Cwe::SqlInjection : Cwe::Xss;
        flagged("CWE relabel of " + id);
        s.cwe = cwe;

        const auto lang = s.language;
        s.language = lang == Language::Java ? Language::PHP : Language::Java;
        flagged("language change of " + id);
        s.language = lang;
    }
    c.detail = "clean; " + std::to_string(perturbations) + " perturbations flagged";
}

void metrics_oracle(Check& c) {
    SeededRng rng(2024);
    const std::vector<std::vector<metrics::Dimension>> dim_sets{
        {metrics::Dimension::Model},
        {metrics::Dimension::LanguagePair},
        {metrics::Dimension::Cwe},
        {metrics::Dimension::Complexity},
        {metrics::Dimension::Model, metrics::Dimension::Cwe, metrics::Dimension::Complexity}};
    for (int f = 0; f < 500; ++f) {
        auto rs = oracle::random_outcomes(rng, rng.below(120));
        auto want = oracle::brute_force(rs);
        auto g = metrics::report_for(rs);
        oracle::Counts got{g.fcr.numerator, g.fcr.denominator, g.vir.numerator,
                           g.vir.denominator, g.vpr.numerator, g.vpr.denominator};
        c.expect(got == want, "fixture " + std::to_string(f) + " differs from brute force");
        for (const auto& dims : dim_sets) {
            oracle::Counts sum;
            for (const auto& m : metrics::slice_reports(rs, dims)) {
                sum.fcr_num += m.fcr.numerator, sum.fcr_den += m.fcr.denominator;
                sum.vir_num += m.vir.numerator, sum.vir_den += m.vir.denominator;
                sum.vpr_num += m.vpr.numerator, sum.vpr_den += m.vpr.denominator;
            }
            c.expect(sum == want, "slices of fixture " + std::to_string(f) + " do not recombine");
        }
    }
    c.detail = "500 fixtures, 5 slicings each";
}

void mitigation(Check& c) {
    testkit::TempDir dir("accept");
    fixtures::write_vir_verdicts(dir / "baseline.jsonl", "base", 1000, 500);
    struct Row {
        const char* name;
        std::size_t vulnerable;
        const char* relative;
        const char* improvement;
    };
    const Row rows[] = {{"naive_vul", 746, "74.6", "25.4"},
                        {"rag_vul", 672, "67.2", "32.8"},
                        {"naive_all", 888, "88.8", "11.2"},
                        {"rag_all", 667, "66.7", "33.3"}};
    std::string seen;
    for (const auto& row : rows) {
        auto file = dir / (std::string(row.name) + ".jsonl");
        fixtures::write_vir_verdicts(file, row.name, 2000, row.vulnerable);
        auto r = testkit::run_command(testkit::quote(testkit::cli_path()) + " compare " +
                                      testkit::quote(dir / "baseline.jsonl") + " " + testkit::quote(file));
        c.expect(r.exit_code == 0, std::string("compare failed: ") + r.output);
        auto value = [&](const std::string& key) {
            auto pos = r.output.find("\n" + key + "\t");
            if (pos == std::string::npos) return std::string("missing");
            pos += key.size() + 2;
            return r.output.substr(pos, r.output.find('\n', pos) - pos);
        };
        c.expect(value("relative_vir_pct") == row.relative,
                 std::string("relative ") + value("relative_vir_pct") + " != " + row.relative);
        c.expect(value("improvement_pct") == row.improvement,
                 std::string("improvement ") + value("improvement_pct") + " != " + row.improvement);
        auto direct = metrics::vir_relative(0.5, static_cast<double>(row.vulnerable) / 2000.0);
        c.expect(direct && metrics::format1(direct->improvement_percent) == row.improvement, "library arithmetic off");
        seen += std::string(seen.empty() ? "" : ", ") + row.relative + "->" + row.improvement;
    }
    c.detail = seen;
}

void retrieval(Check& c) {
    rag::HashingEmbedder embedder;
    SeededRng rng(99);
    std::size_t empties = 0, ties = 0;
    for (int t = 0; t < 200; ++t) {
        auto inst = fixtures::random_retrieval_instance(rng, embedder);
        for (const auto& v : inst.index.vectors) c.expect(std::fabs(rag::l2_norm(v) - 1.0) <= 1e-6, "index vector not unit");
        c.expect(std::fabs(rag::l2_norm(inst.query) - 1.0) <= 1e-6, "query not unit");
        auto got = rag::retrieve(inst.index, inst.query, 3, 0.5);
        auto want = oracle::retrieve(inst.index.vectors, inst.query, 3, 0.5);
        bool same = got.size() == want.size();
        for (std::size_t i = 0; same && i < got.size(); ++i)
            same = got[i].index == want[i].first && got[i].similarity == want[i].second &&
                   got[i].entry_id == inst.index.entries[want[i].first].id;
        c.expect(same, "instance " + std::to_string(t) + " differs from the oracle");
        empties += got.empty();
        for (std::size_t i = 1; i < got.size(); ++i) ties += got[i].similarity == got[i - 1].similarity;
    }
    c.expect(empties > 0, "no empty-result instance generated");
    c.expect(ties > 0, "no tie instance generated");
    c.detail = "200 instances, " + std::to_string(empties) + " empty, " + std::to_string(ties) + " ties";
}

void prompts(Check& c) {
    auto cases = testkit::golden_cases();
    c.expect(cases.size() == 9, "expected 9 golden fixtures");
    for (const auto& g : cases) c.expect(g.built == g.expected, g.file + " differs");
    c.detail = std::to_string(cases.size()) + " goldens byte-identical";
}

void judge_pipeline(Check& c) {
    static const ExemplarStore store = load_exemplar_store(testkit::source_dir() / "data/exemplars.jsonl");
    const JudgeCase jc{"s|Java|Go|m", "ps.setInt(1, id);\n", "db.Query(q + id)\n", "Go", "Line 1: bound", Cwe::SqlInjection};
    auto payload = [](bool pp, bool vul) {
        ordered_json j{{"patch_point_acc", true}, {"patch_point_isVul", pp}, {"isVul", vul}};
        if (pp || vul) j["desc"] = "flagged";
        return j.dump();
    };
    auto profile = [](const std::string& id) {
        ModelProfile p;
        p.model_id = id;
        p.max_retries = 0;
        return p;
    };
    AdjudicationOptions opts;
    opts.run = {fixed_clock(), [](auto) {}};
    std::size_t combos = 0, arbitrated = 0;
    for (int n : {2, 3}) {
        for (int mask = 0; mask < (1 << (2 * n)); ++mask) {
            std::vector<std::pair<bool, bool>> votes;  // (isVul, patch_point_isVul)
            for (int j = 0; j < n; ++j) votes.emplace_back(mask >> (2 * j) & 1, mask >> (2 * j + 1) & 1);
            const bool arb_vul = mask % 2 == 0, arb_pp = mask % 3 == 0;
            std::vector<std::unique_ptr<ScriptedClient>> clients;
            std::vector<JudgeEndpoint> judges;
            for (int j = 0; j < n; ++j) {
                clients.push_back(std::make_unique<ScriptedClient>());
                clients.back()->on_default({ScriptedClient::Step::respond(payload(votes[j].second, votes[j].first))});
                judges.push_back({clients.back().get(), profile("j" + std::to_string(j))});
            }
            ScriptedClient arbiter;
            arbiter.on_default({ScriptedClient::Step::respond(payload(arb_pp, arb_vul))});
            auto a = adjudicate(jc, store, judges, {&arbiter, profile("arb")}, opts);
            bool disagree = false;
            for (const auto& v : votes) disagree = disagree || v != votes[0];
            const std::string tag = std::to_string(n) + "-judge combo " + std::to_string(mask);
            c.expect(a.status == AdjudicationStatus::Decided, tag + " not decided");
            c.expect(arbiter.call_count() == (disagree ? 1u : 0u) && a.arbiter_calls == (disagree ? 1 : 0),
                     tag + " arbiter invocation wrong");
            const bool want_vul = disagree ? arb_vul : votes[0].first;
            const bool want_pp = disagree ? arb_pp : votes[0].second;
            c.expect(a.verdict.isVul == want_vul && a.verdict.patch_point_isVul == want_pp, tag + " outputs wrong");
            c.expect(a.verdict.provenance == (disagree ? VerdictProvenance::AutoArbitrated
                                                       : VerdictProvenance::AutoConsensus),
                     tag + " provenance wrong");
            ++combos;
            arbitrated += disagree;
        }
    }
    c.expect(combos == 80, "expected 80 combinations");
    c.detail = std::to_string(combos) + " combinations, " + std::to_string(arbitrated) + " arbitrated";
}

void review_workflow(Check& c) {
    std::size_t accepted = 0, rejected = 0;
    for (std::uint64_t seed = 1; seed <= 1000; ++seed) {
        auto r = testkit::simulate_review(seed);
        c.expect(!r.violation, "sequence " + std::to_string(seed) + ": " + r.violation.value_or(""));
        accepted += r.accepted;
        rejected += r.rejected;
    }
    auto audit_ids = [](std::uint64_t seed) {
        review::ReviewService svc(review::ServiceOptions{std::nullopt, fixed_clock(), "salt"});
        for (int i = 0; i < 100; ++i) {
            auto id = "case-" + std::to_string(i);
            review::CaseMaterials m;
            m.sample_id = id;
            m.source_code = "x";
            m.translated_code = "y";
            m.security_status = "patched";
            svc.add_case(id, m);
            svc.assign_pair(id, "r1", "r2");
            svc.submit_verdict(id, "r1", true, i % 2 == 0, "a");
            svc.submit_verdict(id, "r2", true, i % 2 == 0, "b");
        }
        return svc.create_audit(0.10, seed).case_ids;
    };
    auto a = audit_ids(7), b = audit_ids(7), other = audit_ids(8);
    c.expect(a.size() == 10, "audit size " + std::to_string(a.size()) + " != 10");
    c.expect(a == b, "audit not reproducible for a fixed seed");
    c.expect(a != other, "audit ignores the seed");
    c.detail = "1000 sequences (" + std::to_string(accepted) + " accepted, " + std::to_string(rejected) +
               " rejected actions); audit 10/100";
}

void complexity(Check& c) {
    const Thresholds th{950, 1600};
    for (std::size_t n = 0; n <= 2000; ++n)
        c.expect(std::string(to_string(classify_complexity(n, th))) == oracle::tier(n), "tier of " + std::to_string(n));
    SeededRng rng(31);
    for (int t = 0; t < 100; ++t) {
        std::vector<std::size_t> counts(1 + rng.below(300));
        for (auto& x : counts) x = rng.below(3000);
        auto got = compute_thresholds(counts);
        c.expect(got.t1 == oracle::nearest_rank(counts, 33) && got.t2 == oracle::nearest_rank(counts, 66),
                 "thresholds differ on set " + std::to_string(t));
    }
    c.detail = "0..2000 exhaustive; 100 threshold sets";
}

void taxonomy_table(Check& c) {
    using namespace taxonomy;
    SeededRng rng(17);
    double worst_rounded = 0;
    for (int t = 0; t < 100; ++t) {
        auto table = distribution_table(fixtures::random_labels(rng, 1 + rng.below(500)), {});
        for (const auto& col : table.columns) {
            if (table.column_totals.at(col) == 0) continue;
            double sub = 0, cat = 0, cat_rounded = 0;
            for (const auto& s : default_schema().subcategories()) sub += *table.percent(s.code, col);
            for (const auto& k : default_schema().categories()) {
                cat += *table.percent(k.code, col);
                cat_rounded += std::stod(taxonomy::format1(*table.percent(k.code, col)));
            }
            c.expect(std::fabs(sub - 100) < 1e-9 && std::fabs(cat - 100) < 1e-9, "column " + col + " does not sum to 100");
            worst_rounded = std::max(worst_rounded, std::fabs(cat_rounded - 100));
        }
    }
    c.expect(worst_rounded <= 0.3 + 1e-9, "rounded column off by " + std::to_string(worst_rounded));
    auto uaf = distribution_table(fixtures::cwe416_labels(), {});
    auto cat4 = taxonomy::format1(*uaf.percent("4", "CWE-416"));
    c.expect(cat4 == "77.4", "CWE-416 category 4 = " + cat4);
    std::ostringstream d;
    d << "CWE-416 cat4 " << cat4 << "; worst rounded drift " << worst_rounded;
    c.detail = d.str();
}

}  // namespace

int main() {
    criterion("F1 arithmetic", 1, f1_arithmetic);
    criterion("Distribution validation", 1, distribution);
    criterion("Metrics oracle equivalence", 5, metrics_oracle);
    criterion("Mitigation arithmetic", 0, mitigation);
    criterion("Retrieval oracle", 5, retrieval);
    criterion("Prompt bit-exactness", 0, prompts);
    criterion("Judge pipeline state", 10, judge_pipeline);
    criterion("Review workflow properties", 0, review_workflow);
    criterion("Complexity tiers", 0, complexity);
    criterion("Taxonomy table", 0, taxonomy_table);
    std::printf("%d of 10 criteria failed\n", g_failed);
    return g_failed == 0 ? 0 : 1;
}
