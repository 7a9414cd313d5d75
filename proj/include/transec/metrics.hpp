#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "corpus.hpp"
#include "types.hpp"
#include "verdict.hpp"

namespace transec::metrics {

/// One judged translation reduced to what the rate formulas need.
struct OutcomeRecord {
    std::string case_id;
    std::string sample_id;
    std::string model;
    std::string source_lang;
    std::string target_lang;
    std::string cwe;
    std::string complexity;
    SecurityStatus source_status = SecurityStatus::Patched;
    /// Absent when there was no code to judge or no security verdict was reached.
    std::optional<bool> translated_is_vulnerable;
    std::optional<bool> is_functional;
    bool parseable = true;
    std::optional<std::size_t> token_count;
};

inline constexpr std::string_view kUnknown = "unknown";

/// Unparseable translations count as non-functional and carry no security outcome.
inline OutcomeRecord outcome_from_verdict(const FinalVerdict& v, Thresholds th = {}) {
    if (!v.source_security_status) throw InvalidArgument("verdict " + v.case_id + " lacks source_security_status");
    OutcomeRecord r;
    r.case_id = v.case_id;
    r.sample_id = v.sample_id;
    r.model = v.model_id.empty() ? std::string(kUnknown) : v.model_id;
    r.source_lang = v.source_lang.empty() ? std::string(kUnknown) : v.source_lang;
    r.target_lang = v.target_lang.empty() ? std::string(kUnknown) : v.target_lang;
    r.cwe = v.cwe ? to_string(*v.cwe) : std::string(kUnknown);
    r.token_count = v.token_count;
    r.complexity = v.token_count ? std::string(to_string(classify_complexity(*v.token_count, th))) : std::string(kUnknown);
    r.source_status = *v.source_security_status;
    r.parseable = v.parse_status == ParseStatus::Ok;
    if (r.parseable) {
        r.translated_is_vulnerable = v.isVul;
        r.is_functional = v.is_functional;
    } else {
        r.is_functional = false;
    }
    return r;
}

struct Rate {
    std::size_t numerator = 0;
    std::size_t denominator = 0;

    std::optional<double> value() const {
        if (denominator == 0) return std::nullopt;
        return static_cast<double>(numerator) / static_cast<double>(denominator);
    }
    friend bool operator==(const Rate&, const Rate&) = default;
};

inline Rate fcr(const std::vector<OutcomeRecord>& records) {
    Rate r;
    for (const auto& x : records) {
        if (!x.is_functional) continue;
        ++r.denominator;
        if (*x.is_functional) ++r.numerator;
    }
    return r;
}

inline Rate vir(const std::vector<OutcomeRecord>& records) {
    Rate r;
    for (const auto& x : records) {
        if (x.source_status != SecurityStatus::Patched || !x.translated_is_vulnerable) continue;
        ++r.denominator;
        if (*x.translated_is_vulnerable) ++r.numerator;
    }
    return r;
}

inline Rate vpr(const std::vector<OutcomeRecord>& records) {
    Rate r;
    for (const auto& x : records) {
        if (x.source_status != SecurityStatus::Vulnerable || !x.translated_is_vulnerable) continue;
        ++r.denominator;
        if (*x.translated_is_vulnerable) ++r.numerator;
    }
    return r;
}

// ---------------------------------------------------------------------------
// Slicing
// ---------------------------------------------------------------------------

enum class Dimension { Model, LanguagePair, Cwe, Complexity };

inline std::string_view to_string(Dimension d) {
    switch (d) {
        case Dimension::Model: return "model";
        case Dimension::LanguagePair: return "language_pair";
        case Dimension::Cwe: return "cwe";
        case Dimension::Complexity: return "complexity";
    }
    return "?";
}

/// Accepts the canonical names plus "pair" as a short form.
inline Dimension parse_dimension(std::string_view s) {
    if (s == "model") return Dimension::Model;
    if (s == "language_pair" || s == "pair") return Dimension::LanguagePair;
    if (s == "cwe") return Dimension::Cwe;
    if (s == "complexity") return Dimension::Complexity;
    throw InvalidArgument("unknown slice dimension '" + std::string(s) + "'");
}

inline std::vector<Dimension> parse_dimensions(std::string_view csv) {
    std::vector<Dimension> out;
    std::size_t pos = 0;
    while (pos <= csv.size() && !csv.empty()) {
        auto comma = csv.find(',', pos);
        auto part = csv.substr(pos, comma == std::string_view::npos ? std::string_view::npos : comma - pos);
        out.push_back(parse_dimension(part));
        if (comma == std::string_view::npos) break;
        pos = comma + 1;
    }
    return out;
}

inline std::string slice_key(const OutcomeRecord& r, Dimension d) {
    switch (d) {
        case Dimension::Model: return r.model;
        case Dimension::LanguagePair: return r.source_lang + "->" + r.target_lang;
        case Dimension::Cwe: return r.cwe;
        case Dimension::Complexity: return r.complexity;
    }
    return {};
}

/// Token-count summary of the vulnerable translations in a slice (violin-plot source data).
struct TokenSummary {
    std::size_t min = 0, q1 = 0, median = 0, q3 = 0, max = 0;
};

struct MetricReport {
    std::vector<std::pair<std::string, std::string>> slice;  // (dimension, value)
    std::size_t n_records = 0;
    std::size_t n_unparseable = 0;
    Rate fcr, vir, vpr;
    std::map<std::string, std::size_t> tier_counts;  // records per complexity tier
    std::map<std::string, std::size_t> tier_errors;  // vulnerable translations per tier
    std::optional<TokenSummary> error_tokens;
};

inline MetricReport report_for(const std::vector<OutcomeRecord>& records) {
    MetricReport m;
    m.n_records = records.size();
    m.fcr = fcr(records);
    m.vir = vir(records);
    m.vpr = vpr(records);
    std::vector<std::size_t> err_tokens;
    for (auto t : {"simple", "medium", "complex"}) m.tier_counts[t] = m.tier_errors[t] = 0;
    for (const auto& r : records) {
        if (!r.parseable) ++m.n_unparseable;
        ++m.tier_counts[r.complexity];
        if (r.translated_is_vulnerable.value_or(false)) {
            ++m.tier_errors[r.complexity];
            if (r.token_count) err_tokens.push_back(*r.token_count);
        }
    }
    if (!err_tokens.empty()) {
        TokenSummary s;
        s.min = *std::min_element(err_tokens.begin(), err_tokens.end());
        s.max = *std::max_element(err_tokens.begin(), err_tokens.end());
        s.q1 = nearest_rank_percentile(err_tokens, 25);
        s.median = nearest_rank_percentile(err_tokens, 50);
        s.q3 = nearest_rank_percentile(err_tokens, 75);
        m.error_tokens = s;
    }
    return m;
}

/// One report per occupied cell, ordered by slice key. Empty `dims` gives the global report.
inline std::vector<MetricReport> slice_reports(const std::vector<OutcomeRecord>& records,
                                               const std::vector<Dimension>& dims) {
    std::map<std::vector<std::string>, std::vector<OutcomeRecord>> cells;
    for (const auto& r : records) {
        std::vector<std::string> key;
        for (auto d : dims) key.push_back(slice_key(r, d));
        cells[key].push_back(r);
    }
    std::vector<MetricReport> out;
    for (const auto& [key, members] : cells) {
        auto m = report_for(members);
        for (std::size_t i = 0; i < dims.size(); ++i) m.slice.emplace_back(std::string(to_string(dims[i])), key[i]);
        out.push_back(std::move(m));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Display and mitigation arithmetic
// ---------------------------------------------------------------------------

/// Half-up to one decimal. The epsilon absorbs binary representation error
/// such as 25.4 being stored as 25.39999...
inline double round1(double x) { return std::floor(x * 10.0 + 0.5 + 1e-9) / 10.0; }

inline std::string format1(double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.1f", round1(x));
    return buf;
}

inline std::string format_percent(const std::optional<double>& rate) { return rate ? format1(100.0 * *rate) : "NA"; }

struct Improvement {
    double relative_percent = 0;
    double improvement_percent = 0;
};

/// 100 * strategy / baseline and its complement. Absent when either VIR is undefined or the baseline is 0.
inline std::optional<Improvement> vir_relative(double baseline_vir, double strategy_vir) {
    if (baseline_vir == 0.0) return std::nullopt;
    Improvement i;
    i.relative_percent = 100.0 * strategy_vir / baseline_vir;
    i.improvement_percent = 100.0 - i.relative_percent;
    return i;
}

inline std::optional<Improvement> vir_relative(const std::vector<OutcomeRecord>& baseline,
                                               const std::vector<OutcomeRecord>& strategy) {
    auto b = vir(baseline).value();
    auto s = vir(strategy).value();
    if (!b || !s) return std::nullopt;
    return vir_relative(*b, *s);
}

/// Tab-separated report. Leading '#' lines carry metadata; the first
/// non-comment line is the header row.
inline std::string format_report_tsv(const std::vector<MetricReport>& reports, const std::vector<Dimension>& dims,
                                     const std::vector<std::string>& meta_lines = {}) {
    std::string out;
    for (const auto& m : meta_lines) out += "# " + m + "\n";
    std::vector<std::string> cols;
    for (auto d : dims) cols.emplace_back(to_string(d));
    for (const char* c : {"n_records", "n_unparseable", "fcr_num", "fcr_den", "fcr_pct", "vir_num", "vir_den", "vir_pct",
                          "vpr_num", "vpr_den", "vpr_pct", "n_simple", "n_medium", "n_complex", "err_simple",
                          "err_medium", "err_complex", "err_tokens_min", "err_tokens_q1", "err_tokens_median",
                          "err_tokens_q3", "err_tokens_max"})
        cols.emplace_back(c);
    for (std::size_t i = 0; i < cols.size(); ++i) out += (i ? "\t" : "") + cols[i];
    out += "\n";
    auto count = [](const std::map<std::string, std::size_t>& m, const char* k) {
        auto it = m.find(k);
        return std::to_string(it == m.end() ? 0 : it->second);
    };
    for (const auto& r : reports) {
        std::vector<std::string> row;
        for (const auto& [dim, value] : r.slice) row.push_back(value);
        row.push_back(std::to_string(r.n_records));
        row.push_back(std::to_string(r.n_unparseable));
        for (const Rate* rate : {&r.fcr, &r.vir, &r.vpr}) {
            row.push_back(std::to_string(rate->numerator));
            row.push_back(std::to_string(rate->denominator));
            row.push_back(format_percent(rate->value()));
        }
        for (auto t : {"simple", "medium", "complex"}) row.push_back(count(r.tier_counts, t));
        for (auto t : {"simple", "medium", "complex"}) row.push_back(count(r.tier_errors, t));
        if (r.error_tokens) {
            for (auto v : {r.error_tokens->min, r.error_tokens->q1, r.error_tokens->median, r.error_tokens->q3,
                           r.error_tokens->max})
                row.push_back(std::to_string(v));
        } else {
            for (int i = 0; i < 5; ++i) row.push_back("NA");
        }
        for (std::size_t i = 0; i < row.size(); ++i) out += (i ? "\t" : "") + row[i];
        out += "\n";
    }
    return out;
}

}  // namespace transec::metrics
