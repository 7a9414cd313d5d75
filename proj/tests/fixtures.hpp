#pragma once

// Hand-built label sets shared by the unit tests and the acceptance binary.

#include <string>
#include <utility>
#include <vector>

#include "transec/jsonl.hpp"
#include "transec/rag.hpp"
#include "transec/verdict.hpp"
#include "transec/random.hpp"
#include "transec/taxonomy.hpp"

namespace transec::fixtures {

/// 93 CWE-416 labels: category 4 holds 72 of them.
inline std::vector<taxonomy::PatternLabel> cwe416_labels() {
    const std::vector<std::pair<std::string, int>> counts{
        {"1.1", 5}, {"1.2", 1}, {"1.3", 3}, {"1.4", 0}, {"3.1", 2},  {"3.2", 3}, {"3.3", 0},
        {"3.4", 7}, {"4.1", 36}, {"4.2", 5}, {"4.3", 14}, {"4.4", 10}, {"4.5", 7}};
    std::vector<taxonomy::PatternLabel> out;
    for (const auto& [code, n] : counts)
        for (int i = 0; i < n; ++i)
            out.push_back({"uaf-" + code + "-" + std::to_string(i), code, "ann", "", Cwe::UseAfterFree});
    return out;
}

/// Random labels with an inline CWE over every covered weakness.
inline std::vector<taxonomy::PatternLabel> random_labels(SeededRng& rng, std::size_t n) {
    const auto& subs = taxonomy::default_schema().subcategories();
    const Cwe cwes[] = {Cwe::InputValidation, Cwe::PathTraversal, Cwe::Xss,
                        Cwe::SqlInjection,    Cwe::CodeInjection, Cwe::InfoExposure,
                        Cwe::UseAfterFree,    Cwe::OutOfBoundsWrite, Cwe::OutOfBoundsRead};
    std::vector<taxonomy::PatternLabel> out;
    for (std::size_t i = 0; i < n; ++i)
        out.push_back({"case-" + std::to_string(i), subs[rng.below(subs.size())].code, "ann", "", cwes[rng.below(9)]});
    return out;
}

struct RetrievalInstance {
    rag::KnowledgeIndex index;
    rag::Vector query;
};

/// Random snippet of `words` tokens drawn from a small vocabulary.
inline std::string random_snippet(SeededRng& rng, std::size_t words, std::size_t vocab, const char* prefix) {
    std::string out;
    for (std::size_t i = 0; i < words; ++i) out += std::string(prefix) + std::to_string(rng.below(vocab)) + " ";
    return out;
}

/// Index and query over a shared vocabulary so that similarities spread around
/// the threshold. Some indexes hold duplicate snippets (exact ties) and some
/// queries use a disjoint vocabulary (no match).
inline RetrievalInstance random_retrieval_instance(SeededRng& rng, rag::EmbeddingProvider& embedder) {
    const std::size_t n = rng.below(25);
    const std::size_t vocab = 4 + rng.below(12);
    std::vector<rag::KnowledgeEntry> entries;
    for (std::size_t i = 0; i < n; ++i) {
        rag::KnowledgeEntry e;
        e.id = "kb-" + std::to_string(i);
        if (i > 0 && rng.below(4) == 0)
            e.code = entries[rng.below(i)].code;
        else
            e.code = random_snippet(rng, 3 + rng.below(10), vocab, "w");
        e.vulnerability_type = "t";
        e.severity = "Low";
        e.report = "r";
        entries.push_back(std::move(e));
    }
    RetrievalInstance out{rag::build_index(entries, embedder), {}};
    std::string q;
    if (rng.below(6) == 0)
        q = random_snippet(rng, 5, 50, "zz");
    else if (n > 0 && rng.below(3) == 0)
        q = entries[rng.below(n)].code;
    else
        q = random_snippet(rng, 3 + rng.below(10), vocab, "w");
    out.query = rag::embed_query(q, embedder, out.index);
    return out;
}

/// Verdict file with `patched` patched-source cases of which `vulnerable` were
/// judged vulnerable, plus a few vulnerable-source and unparseable rows that VIR ignores.
inline void write_vir_verdicts(const std::filesystem::path& path, const std::string& model, std::size_t patched,
                               std::size_t vulnerable) {
    std::string text;
    auto row = [&](std::size_t i, SecurityStatus status, ParseStatus ps, std::optional<bool> vul) {
        FinalVerdict v;
        v.case_id = model + "-" + std::to_string(i);
        v.sample_id = "s" + std::to_string(i);
        v.source_lang = "Java";
        v.target_lang = "Go";
        v.model_id = model;
        v.cwe = Cwe::SqlInjection;
        v.source_security_status = status;
        v.token_count = 600 + i % 1200;
        v.parse_status = ps;
        v.isVul = vul;
        v.is_functional = ps == ParseStatus::Ok ? std::optional<bool>(true) : std::optional<bool>(false);
        v.provenance = VerdictProvenance::AutoConsensus;
        v.verdict_ids = {v.case_id + "#judge1", v.case_id + "#judge2"};
        text += to_json(v).dump() + "\n";
    };
    for (std::size_t i = 0; i < patched; ++i) row(i, SecurityStatus::Patched, ParseStatus::Ok, i < vulnerable);
    for (std::size_t i = 0; i < 7; ++i) row(patched + i, SecurityStatus::Vulnerable, ParseStatus::Ok, true);
    for (std::size_t i = 0; i < 3; ++i) row(patched + 7 + i, SecurityStatus::Patched, ParseStatus::Refusal, std::nullopt);
    write_file(path, text);
}

}  // namespace transec::fixtures
