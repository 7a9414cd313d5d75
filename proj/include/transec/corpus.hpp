#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <unordered_map>
#include <vector>

#include "jsonl.hpp"
#include "random.hpp"
#include "tokenizer.hpp"
#include "types.hpp"

namespace transec {

// ---------------------------------------------------------------------------
// Data model
// ---------------------------------------------------------------------------

/// Inclusive 1-based line range.
struct LineSpan {
    std::int64_t start = 0;
    std::int64_t end = 0;
    friend bool operator==(const LineSpan&, const LineSpan&) = default;
};

/// For patched samples: the security measure. For vulnerable ones: where the flaw sits.
struct PatchAnnotation {
    std::string description;
    std::vector<LineSpan> locations;
    friend bool operator==(const PatchAnnotation&, const PatchAnnotation&) = default;
};

enum class Origin { RealWorld, Constructed };

inline std::string_view to_string(Origin o) { return o == Origin::RealWorld ? "real_world" : "constructed"; }

struct ProvenanceRecord {
    Origin origin = Origin::Constructed;
    std::optional<std::string> cve_id;
    std::optional<std::string> commit_url;
    friend bool operator==(const ProvenanceRecord&, const ProvenanceRecord&) = default;
};

struct CodeSample {
    std::string id;
    Language language = Language::Java;
    Cwe cwe = Cwe::InputValidation;
    SecurityStatus security_status = SecurityStatus::Patched;
    std::string code;
    PatchAnnotation patch_annotation;
    std::size_t token_count = 0;
    std::string tokenizer_id{kDefaultTokenizer};
    ProvenanceRecord provenance;
    friend bool operator==(const CodeSample&, const CodeSample&) = default;
};

inline std::size_t line_count(std::string_view code) {
    if (code.empty()) return 0;
    std::size_t n = static_cast<std::size_t>(std::count(code.begin(), code.end(), '\n'));
    return code.back() == '\n' ? n : n + 1;
}

/// Throws SchemaError(line, ...) describing the first violated invariant.
inline void check_sample(const CodeSample& s, std::size_t line = 0) {
    if (s.id.empty()) throw SchemaError(line, "empty id");
    if (s.patch_annotation.description.empty())
        throw SchemaError(line, "sample '" + s.id + "': empty patch annotation description");
    if (s.patch_annotation.locations.empty())
        throw SchemaError(line, "sample '" + s.id + "': patch annotation has no locations");
    const auto lines = static_cast<std::int64_t>(line_count(s.code));
    for (const auto& span : s.patch_annotation.locations) {
        if (span.start < 1 || span.end < span.start || span.end > lines)
            throw SchemaError(line, "sample '" + s.id + "': span [" + std::to_string(span.start) + "," +
                                        std::to_string(span.end) + "] outside 1.." + std::to_string(lines));
    }
    const auto& p = s.provenance;
    if (p.origin == Origin::RealWorld && !p.cve_id && !p.commit_url)
        throw SchemaError(line, "sample '" + s.id + "': real_world origin needs cve_id or commit_url");
    if (p.origin == Origin::Constructed && (p.cve_id || p.commit_url))
        throw SchemaError(line, "sample '" + s.id + "': constructed origin must not carry cve_id/commit_url");
    if (!TokenizerRegistry::instance().contains(s.tokenizer_id))
        throw SchemaError(line, "sample '" + s.id + "': unknown tokenizer '" + s.tokenizer_id + "'");
    if (count_tokens(s.code, s.tokenizer_id) != s.token_count)
        throw SchemaError(line, "sample '" + s.id + "': token_count does not match recount");
}

// ---------------------------------------------------------------------------
// Record format
// ---------------------------------------------------------------------------

inline ordered_json to_json(const CodeSample& s) {
    ordered_json spans = ordered_json::array();
    for (const auto& l : s.patch_annotation.locations) spans.push_back({l.start, l.end});
    ordered_json j;
    j["id"] = s.id;
    j["language"] = to_string(s.language);
    j["cwe"] = to_string(s.cwe);
    j["security_status"] = to_string(s.security_status);
    j["code"] = s.code;
    j["patch_description"] = s.patch_annotation.description;
    j["patch_locations"] = std::move(spans);
    j["token_count"] = s.token_count;
    j["tokenizer_id"] = s.tokenizer_id;
    j["origin"] = to_string(s.provenance.origin);
    j["cve_id"] = s.provenance.cve_id ? ordered_json(*s.provenance.cve_id) : ordered_json(nullptr);
    j["commit_url"] = s.provenance.commit_url ? ordered_json(*s.provenance.commit_url) : ordered_json(nullptr);
    return j;
}

inline const std::set<std::string, std::less<>>& corpus_fields() {
    static const std::set<std::string, std::less<>> f{
        "id",           "language",     "cwe",    "security_status", "code",    "patch_description",
        "patch_locations", "token_count", "tokenizer_id", "origin", "cve_id", "commit_url"};
    return f;
}

inline CodeSample sample_from_json(const json& j, std::size_t line = 0) {
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!corpus_fields().contains(it.key())) throw SchemaError(line, "unexpected field '" + it.key() + "'");

    CodeSample s;
    s.id = require_string(j, "id", line);
    auto lang = require_string(j, "language", line);
    auto l = parse_language(lang);
    if (!l) throw SchemaError(line, "unknown language '" + lang + "'");
    s.language = *l;
    auto cwe = require_string(j, "cwe", line);
    auto c = parse_cwe(cwe);
    if (!c || !cwe.starts_with("CWE-")) throw SchemaError(line, "uncovered cwe '" + cwe + "'");
    s.cwe = *c;
    auto status = require_string(j, "security_status", line);
    auto st = parse_security_status(status);
    if (!st) throw SchemaError(line, "unknown security_status '" + status + "'");
    s.security_status = *st;
    s.code = require_string(j, "code", line);
    s.patch_annotation.description = require_string(j, "patch_description", line);
    const auto& spans = require_field(j, "patch_locations", line);
    if (!spans.is_array()) throw SchemaError(line, "patch_locations must be an array");
    for (const auto& sp : spans) {
        if (!sp.is_array() || sp.size() != 2 || !sp[0].is_number_integer() || !sp[1].is_number_integer())
            throw SchemaError(line, "patch_locations entries must be [start,end] integer pairs");
        s.patch_annotation.locations.push_back({sp[0].get<std::int64_t>(), sp[1].get<std::int64_t>()});
    }
    auto tokens = require_int(j, "token_count", line);
    if (tokens < 0) throw SchemaError(line, "token_count must be non-negative");
    s.token_count = static_cast<std::size_t>(tokens);
    s.tokenizer_id = require_string(j, "tokenizer_id", line);
    auto origin = require_string(j, "origin", line);
    if (origin == "real_world")
        s.provenance.origin = Origin::RealWorld;
    else if (origin == "constructed")
        s.provenance.origin = Origin::Constructed;
    else
        throw SchemaError(line, "unknown origin '" + origin + "'");
    require_field(j, "cve_id", line);
    require_field(j, "commit_url", line);
    s.provenance.cve_id = optional_string(j, "cve_id", line);
    s.provenance.commit_url = optional_string(j, "commit_url", line);
    check_sample(s, line);
    return s;
}

/// Immutable after load; safe to share across threads.
class Corpus {
public:
    Corpus() = default;

    /// Throws SchemaError on a duplicate id or invariant violation.
    explicit Corpus(std::vector<CodeSample> samples) {
        for (std::size_t i = 0; i < samples.size(); ++i) {
            check_sample(samples[i]);
            if (!index_.emplace(samples[i].id, i).second)
                throw SchemaError(0, "duplicate id '" + samples[i].id + "'");
        }
        samples_ = std::move(samples);
    }

    const std::vector<CodeSample>& samples() const { return samples_; }
    std::size_t size() const { return samples_.size(); }
    bool empty() const { return samples_.empty(); }

    const CodeSample* find(std::string_view id) const {
        auto it = index_.find(std::string(id));
        return it == index_.end() ? nullptr : &samples_[it->second];
    }

    const CodeSample& at(std::string_view id) const {
        if (const auto* s = find(id)) return *s;
        throw InvalidArgument("unknown sample id '" + std::string(id) + "'");
    }

    friend bool operator==(const Corpus& a, const Corpus& b) { return a.samples_ == b.samples_; }

private:
    std::vector<CodeSample> samples_;
    std::unordered_map<std::string, std::size_t> index_;
};

inline Corpus parse_corpus(std::string_view text) {
    std::vector<CodeSample> samples;
    std::unordered_map<std::string, std::size_t> seen;
    for_each_jsonl(text, [&](std::size_t line, const json& j) {
        auto s = sample_from_json(j, line);
        if (auto [it, fresh] = seen.emplace(s.id, line); !fresh)
            throw SchemaError(line, "duplicate id '" + s.id + "' (first seen on line " +
                                        std::to_string(it->second) + ")");
        samples.push_back(std::move(s));
    });
    return Corpus(std::move(samples));
}

inline Corpus load_corpus(const std::filesystem::path& path) { return parse_corpus(read_file(path)); }

inline std::string serialize_corpus(const Corpus& corpus) {
    std::string out;
    for (const auto& s : corpus.samples()) {
        out += to_json(s).dump();
        out += '\n';
    }
    return out;
}

// ---------------------------------------------------------------------------
// Distribution spec
// ---------------------------------------------------------------------------

struct DistributionCell {
    std::string language_group;  // "Java", "PHP", "C/C++"
    Cwe cwe = Cwe::InputValidation;
    SecurityStatus status = SecurityStatus::Patched;
    std::size_t expected_count = 0;
};

struct DistributionTotals {
    std::size_t total = 0;
    std::size_t patched = 0;
    std::size_t vulnerable = 0;
    friend bool operator==(const DistributionTotals&, const DistributionTotals&) = default;
};

struct DistributionSpec {
    std::vector<DistributionCell> cells;
    std::optional<DistributionTotals> declared;

    DistributionTotals computed_totals() const {
        DistributionTotals t;
        for (const auto& c : cells) {
            t.total += c.expected_count;
            (c.status == SecurityStatus::Patched ? t.patched : t.vulnerable) += c.expected_count;
        }
        return t;
    }
};

/// Expected cell counts of the shipped 720-sample dataset.
inline DistributionSpec target_distribution() {
    struct Row {
        const char* group;
        Cwe cwe;
        std::size_t patched, vulnerable;
    };
    static constexpr Row rows[] = {
        {"C/C++", Cwe::UseAfterFree, 60, 60},     {"C/C++", Cwe::OutOfBoundsWrite, 30, 30},
        {"C/C++", Cwe::OutOfBoundsRead, 30, 30},  {"PHP", Cwe::InputValidation, 31, 10},
        {"PHP", Cwe::PathTraversal, 20, 10},      {"PHP", Cwe::Xss, 40, 10},
        {"PHP", Cwe::SqlInjection, 30, 10},       {"PHP", Cwe::CodeInjection, 30, 10},
        {"PHP", Cwe::InfoExposure, 40, 10},       {"Java", Cwe::InputValidation, 29, 10},
        {"Java", Cwe::PathTraversal, 40, 10},     {"Java", Cwe::Xss, 20, 10},
        {"Java", Cwe::SqlInjection, 30, 10},      {"Java", Cwe::CodeInjection, 30, 10},
        {"Java", Cwe::InfoExposure, 20, 10},
    };
    DistributionSpec spec;
    for (const auto& r : rows) {
        spec.cells.push_back({r.group, r.cwe, SecurityStatus::Patched, r.patched});
        spec.cells.push_back({r.group, r.cwe, SecurityStatus::Vulnerable, r.vulnerable});
    }
    spec.declared = DistributionTotals{720, 480, 240};
    return spec;
}

/// Cell records: {"language_group","cwe","security_status","expected_count"}.
/// An optional {"totals":{"total","patched","vulnerable"}} record declares totals.
inline DistributionSpec parse_distribution_spec(std::string_view text) {
    DistributionSpec spec;
    for_each_jsonl(text, [&](std::size_t line, const json& j) {
        if (j.contains("totals")) {
            const auto& t = j["totals"];
            spec.declared = DistributionTotals{static_cast<std::size_t>(require_int(t, "total", line)),
                                               static_cast<std::size_t>(require_int(t, "patched", line)),
                                               static_cast<std::size_t>(require_int(t, "vulnerable", line))};
            return;
        }
        DistributionCell cell;
        cell.language_group = require_string(j, "language_group", line);
        if (cell.language_group != "Java" && cell.language_group != "PHP" && cell.language_group != "C/C++")
            throw SchemaError(line, "unknown language_group '" + cell.language_group + "'");
        auto cwe = require_string(j, "cwe", line);
        auto c = parse_cwe(cwe);
        if (!c) throw SchemaError(line, "uncovered cwe '" + cwe + "'");
        cell.cwe = *c;
        auto st = parse_security_status(require_string(j, "security_status", line));
        if (!st) throw SchemaError(line, "unknown security_status");
        cell.status = *st;
        auto n = require_int(j, "expected_count", line);
        if (n < 0) throw SchemaError(line, "expected_count must be non-negative");
        cell.expected_count = static_cast<std::size_t>(n);
        spec.cells.push_back(cell);
    });
    if (spec.declared && *spec.declared != spec.computed_totals())
        throw SchemaError(0, "distribution cells do not sum to the declared totals");
    return spec;
}

inline std::string serialize_distribution_spec(const DistributionSpec& spec) {
    std::string out;
    for (const auto& c : spec.cells) {
        ordered_json j;
        j["language_group"] = c.language_group;
        j["cwe"] = to_string(c.cwe);
        j["security_status"] = to_string(c.status);
        j["expected_count"] = c.expected_count;
        out += j.dump() + "\n";
    }
    if (spec.declared) {
        ordered_json t;
        t["total"] = spec.declared->total;
        t["patched"] = spec.declared->patched;
        t["vulnerable"] = spec.declared->vulnerable;
        out += ordered_json{{"totals", t}}.dump() + "\n";
    }
    return out;
}

struct DistributionMismatch {
    std::string language_group;
    Cwe cwe;
    SecurityStatus status;
    std::size_t expected = 0;
    std::size_t observed = 0;
};

struct ValidationReport {
    std::vector<DistributionMismatch> mismatches;
    DistributionTotals observed;
    bool clean() const { return mismatches.empty(); }
};

/// Lists every (group, cwe, status) cell whose observed count differs from the
/// expected one. Cells present in the corpus but absent from the spec expect 0.
/// Accepts a bare sample list so candidate sets can be checked before loading.
inline ValidationReport validate_distribution(const std::vector<CodeSample>& samples, const DistributionSpec& spec) {
    using Key = std::tuple<std::string, int, int>;
    auto key = [](std::string_view g, Cwe c, SecurityStatus s) {
        return Key{std::string(g), cwe_number(c), static_cast<int>(s)};
    };
    std::map<Key, std::size_t> observed;
    ValidationReport report;
    for (const auto& s : samples) {
        ++observed[key(language_group(s.language), s.cwe, s.security_status)];
        ++report.observed.total;
        (s.security_status == SecurityStatus::Patched ? report.observed.patched : report.observed.vulnerable)++;
    }
    std::set<Key> expected_keys;
    for (const auto& c : spec.cells) {
        auto k = key(c.language_group, c.cwe, c.status);
        expected_keys.insert(k);
        auto it = observed.find(k);
        std::size_t got = it == observed.end() ? 0 : it->second;
        if (got != c.expected_count)
            report.mismatches.push_back({c.language_group, c.cwe, c.status, c.expected_count, got});
    }
    for (const auto& [k, n] : observed) {
        if (expected_keys.contains(k)) continue;
        report.mismatches.push_back({std::get<0>(k), *cwe_from_number(std::get<1>(k)),
                                     static_cast<SecurityStatus>(std::get<2>(k)), 0, n});
    }
    return report;
}

inline ValidationReport validate_distribution(const Corpus& corpus, const DistributionSpec& spec) {
    return validate_distribution(corpus.samples(), spec);
}

/// Builds a corpus with exactly the spec's cell counts. Code bodies are synthetic;
/// token counts are drawn so the corpus spans the usual 500..1600+ range.
inline Corpus make_synthetic_corpus(const DistributionSpec& spec, std::uint64_t seed) {
    SeededRng rng(seed);
    std::vector<CodeSample> samples;
    std::size_t serial = 0;
    for (const auto& cell : spec.cells) {
        for (std::size_t i = 0; i < cell.expected_count; ++i) {
            CodeSample s;
            Language lang = cell.language_group == "Java" ? Language::Java
                            : cell.language_group == "PHP" ? Language::PHP
                            : (i % 2 == 0)                 ? Language::C
                                                           : Language::Cpp;
            s.id = "syn-" + std::to_string(++serial);
            s.language = lang;
            s.cwe = cell.cwe;
            s.security_status = cell.status;
            std::size_t words = 200 + rng.below(1800);
            std::string code;
            for (std::size_t w = 0; w < words; ++w) {
                code += "tok" + std::to_string(w % 97);
                code += (w % 12 == 11) ? '\n' : ' ';
            }
            code += "\n";
            s.code = std::move(code);
            s.patch_annotation.description = cell.status == SecurityStatus::Patched
                                                 ? "bounds check added before access"
                                                 : "unchecked access at flagged lines";
            s.patch_annotation.locations = {{1, 1}};
            s.tokenizer_id = std::string(kDefaultTokenizer);
            s.token_count = count_tokens(s.code, s.tokenizer_id);
            if (rng.below(100) < 85) {
                s.provenance.origin = Origin::RealWorld;
                s.provenance.cve_id = "CVE-2020-" + std::to_string(10000 + serial);
            }
            samples.push_back(std::move(s));
        }
    }
    return Corpus(std::move(samples));
}

// ---------------------------------------------------------------------------
// Candidate ingestion
// ---------------------------------------------------------------------------

struct FetchedFile {
    std::string path;
    std::string language;
    std::string content;
};

/// One pre-fetched vulnerability feed entry.
struct VulnRecord {
    std::string cve_id;
    std::vector<std::string> cwes;
    std::vector<std::string> commit_links;
    std::vector<FetchedFile> files;
};

struct IngestFilter {
    std::set<Cwe> cwes{kCoveredCwes.begin(), kCoveredCwes.end()};
    std::set<Language> languages{kSourceLanguages.begin(), kSourceLanguages.end()};
    std::size_t min_tokens = 500;
    std::size_t max_tokens = 1600;
    std::string tokenizer_id{kDefaultTokenizer};
};

struct CandidateSample {
    std::string cve_id;
    Cwe cwe = Cwe::InputValidation;
    Language language = Language::Java;
    std::string path;
    std::string code;
    std::size_t token_count = 0;
    std::string tokenizer_id;
    std::string commit_url;
};

/// Reason codes for dropped feed entries.
namespace skip_reason {
inline constexpr std::string_view kMissingFields = "missing_fields";
inline constexpr std::string_view kCwe = "cwe_not_covered";
inline constexpr std::string_view kNoCommit = "no_commit";
inline constexpr std::string_view kLanguage = "language";
inline constexpr std::string_view kTokenRange = "token_range";
}  // namespace skip_reason

struct SkipRecord {
    std::size_t record_index = 0;
    std::string cve_id;
    std::string path;  // empty for record-level skips
    std::string reason;
};

struct IngestResult {
    std::vector<CandidateSample> candidates;
    std::vector<SkipRecord> skipped;
};

/// nullopt when a required field is missing or has the wrong type.
inline std::optional<VulnRecord> parse_vuln_record(const json& j) {
    try {
        VulnRecord r;
        r.cve_id = j.at("cve_id").get<std::string>();
        r.cwes = j.at("cwes").get<std::vector<std::string>>();
        if (auto it = j.find("commit_links"); it != j.end() && !it->is_null())
            r.commit_links = it->get<std::vector<std::string>>();
        for (const auto& f : j.at("files"))
            r.files.push_back({f.at("path").get<std::string>(), f.at("language").get<std::string>(),
                               f.at("content").get<std::string>()});
        if (r.cve_id.empty()) return std::nullopt;
        return r;
    } catch (const json::exception&) {
        return std::nullopt;
    }
}

/// Applies the cwe, commit-link, language and token-range filters. Each file of a
/// retained record becomes one candidate. Output preserves input order.
inline IngestResult ingest_candidates(const std::vector<std::optional<VulnRecord>>& records,
                                      const IngestFilter& filter) {
    IngestResult out;
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& rec = records[i];
        if (!rec) {
            out.skipped.push_back({i, "", "", std::string(skip_reason::kMissingFields)});
            continue;
        }
        std::optional<Cwe> cwe;
        for (const auto& c : rec->cwes) {
            auto parsed = parse_cwe(c);
            if (parsed && filter.cwes.contains(*parsed)) {
                cwe = parsed;
                break;
            }
        }
        if (!cwe) {
            out.skipped.push_back({i, rec->cve_id, "", std::string(skip_reason::kCwe)});
            continue;
        }
        if (rec->commit_links.empty()) {
            out.skipped.push_back({i, rec->cve_id, "", std::string(skip_reason::kNoCommit)});
            continue;
        }
        for (const auto& f : rec->files) {
            auto lang = parse_language(f.language);
            if (!lang || !filter.languages.contains(*lang)) {
                out.skipped.push_back({i, rec->cve_id, f.path, std::string(skip_reason::kLanguage)});
                continue;
            }
            auto n = count_tokens(f.content, filter.tokenizer_id);
            if (n < filter.min_tokens || n > filter.max_tokens) {
                out.skipped.push_back({i, rec->cve_id, f.path, std::string(skip_reason::kTokenRange)});
                continue;
            }
            out.candidates.push_back(
                {rec->cve_id, *cwe, *lang, f.path, f.content, n, filter.tokenizer_id, rec->commit_links.front()});
        }
    }
    return out;
}

inline IngestResult ingest_candidates(const std::vector<VulnRecord>& records, const IngestFilter& filter) {
    std::vector<std::optional<VulnRecord>> wrapped(records.begin(), records.end());
    return ingest_candidates(wrapped, filter);
}

inline ordered_json to_json(const CandidateSample& c) {
    ordered_json j;
    j["cve_id"] = c.cve_id;
    j["cwe"] = to_string(c.cwe);
    j["language"] = to_string(c.language);
    j["path"] = c.path;
    j["code"] = c.code;
    j["token_count"] = c.token_count;
    j["tokenizer_id"] = c.tokenizer_id;
    j["commit_url"] = c.commit_url;
    return j;
}

// ---------------------------------------------------------------------------
// Complexity tiers
// ---------------------------------------------------------------------------

struct Thresholds {
    std::size_t t1 = 950;
    std::size_t t2 = 1600;
    friend bool operator==(const Thresholds&, const Thresholds&) = default;
};

/// [0, t1) simple, [t1, t2] medium, (t2, inf) complex.
inline ComplexityTier classify_complexity(std::size_t token_count, Thresholds th) {
    if (token_count < th.t1) return ComplexityTier::Simple;
    if (token_count <= th.t2) return ComplexityTier::Medium;
    return ComplexityTier::Complex;
}

/// Nearest-rank percentile: the value at 1-based rank ceil(p/100 * n) of the sorted data.
inline std::size_t nearest_rank_percentile(std::vector<std::size_t> values, unsigned percent) {
    if (values.empty()) throw InvalidArgument("percentile of an empty set");
    if (percent == 0 || percent > 100) throw InvalidArgument("percent must be in 1..100");
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    std::size_t rank = (percent * n + 99) / 100;
    return values[std::max<std::size_t>(rank, 1) - 1];
}

inline Thresholds compute_thresholds(const std::vector<std::size_t>& token_counts, unsigned lower = 33,
                                     unsigned upper = 66) {
    if (token_counts.empty()) throw InvalidArgument("cannot compute thresholds of an empty corpus");
    return {nearest_rank_percentile(token_counts, lower), nearest_rank_percentile(token_counts, upper)};
}

inline Thresholds compute_thresholds(const Corpus& corpus) {
    std::vector<std::size_t> counts;
    counts.reserve(corpus.size());
    for (const auto& s : corpus.samples()) counts.push_back(s.token_count);
    return compute_thresholds(counts);
}

}  // namespace transec
