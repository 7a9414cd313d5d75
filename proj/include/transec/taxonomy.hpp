#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "jsonl.hpp"
#include "types.hpp"

namespace transec::taxonomy {

struct Category {
    std::string code;  // "1".."5"
    std::string name;
};

struct Subcategory {
    std::string code;  // "1.1"...
    std::string name;
    std::string category;
};

/// Closed five-category / twenty-subcategory pattern schema.
class PatternSchema {
public:
    PatternSchema(std::vector<Category> categories, std::vector<Subcategory> subs)
        : categories_(std::move(categories)), subs_(std::move(subs)) {
        std::map<std::string, bool> cats;
        for (const auto& c : categories_) {
            if (!cats.emplace(c.code, true).second) throw InvalidArgument("duplicate category " + c.code);
        }
        for (std::size_t i = 0; i < subs_.size(); ++i) {
            const auto& s = subs_[i];
            if (!cats.count(s.category)) throw InvalidArgument("subcategory " + s.code + " has unknown category");
            if (!index_.emplace(s.code, i).second) throw InvalidArgument("duplicate subcategory " + s.code);
        }
    }

    const std::vector<Category>& categories() const { return categories_; }
    const std::vector<Subcategory>& subcategories() const { return subs_; }

    const Subcategory* find(std::string_view code) const {
        auto it = index_.find(std::string(code));
        return it == index_.end() ? nullptr : &subs_[it->second];
    }
    bool contains(std::string_view code) const { return find(code) != nullptr; }

    friend bool operator==(const PatternSchema& a, const PatternSchema& b) {
        if (a.categories_.size() != b.categories_.size() || a.subs_.size() != b.subs_.size()) return false;
        for (std::size_t i = 0; i < a.categories_.size(); ++i)
            if (a.categories_[i].code != b.categories_[i].code || a.categories_[i].name != b.categories_[i].name)
                return false;
        for (std::size_t i = 0; i < a.subs_.size(); ++i)
            if (a.subs_[i].code != b.subs_[i].code || a.subs_[i].name != b.subs_[i].name ||
                a.subs_[i].category != b.subs_[i].category)
                return false;
        return true;
    }

private:
    std::vector<Category> categories_;
    std::vector<Subcategory> subs_;
    std::map<std::string, std::size_t> index_;
};

inline const PatternSchema& default_schema() {
    static const PatternSchema schema(
        {
            {"1", "Input Validation & Filtering"},
            {"2", "Output Encoding & Data Protection"},
            {"3", "Security API & Library Usage"},
            {"4", "Memory & Resource Management"},
            {"5", "Context & Framework Behavior"},
        },
        {
            {"1.1", "Missing validation logic", "1"},
            {"1.2", "Missing filtering functions", "1"},
            {"1.3", "Validation boundary mismatch", "1"},
            {"1.4", "Normalization mismatch", "1"},
            {"2.1", "Missing encoding layers", "2"},
            {"2.2", "Escaping rule differences", "2"},
            {"2.3", "Inconsistent exception handling", "2"},
            {"2.4", "Sensitive data exposure", "2"},
            {"3.1", "Missing secure API replacement", "3"},
            {"3.2", "API mapping mismatch", "3"},
            {"3.3", "Default behavior differences", "3"},
            {"3.4", "Unsafe function misuse", "3"},
            {"4.1", "Pointer/reference errors", "4"},
            {"4.2", "Bounds operation mismatch", "4"},
            {"4.3", "Lifecycle management failure", "4"},
            {"4.4", "Thread/async risks", "4"},
            {"4.5", "Memory model differences", "4"},
            {"5.1", "Missing framework safeguards", "5"},
            {"5.2", "Serialization flaws", "5"},
            {"5.3", "Locale errors", "5"},
        });
    return schema;
}

/// Schema file: {"code": "1", "name": ...} for categories and
/// {"code": "1.1", "name": ..., "category": "1"} for subcategories.
inline PatternSchema parse_schema(std::string_view text) {
    std::vector<Category> cats;
    std::vector<Subcategory> subs;
    for_each_jsonl(text, [&](std::size_t line, const json& j) {
        auto code = require_string(j, "code", line);
        auto name = require_string(j, "name", line);
        if (auto cat = optional_string(j, "category", line))
            subs.push_back({code, name, *cat});
        else
            cats.push_back({code, name});
    });
    return PatternSchema(std::move(cats), std::move(subs));
}

inline PatternSchema load_schema(const std::filesystem::path& path) { return parse_schema(read_file(path)); }

inline std::string serialize_schema(const PatternSchema& schema) {
    std::string out;
    for (const auto& c : schema.categories()) {
        out += ordered_json{{"code", c.code}, {"name", c.name}}.dump() + "\n";
        for (const auto& s : schema.subcategories())
            if (s.category == c.code)
                out += ordered_json{{"code", s.code}, {"name", s.name}, {"category", s.category}}.dump() + "\n";
    }
    return out;
}

// ---------------------------------------------------------------------------
// Labels
// ---------------------------------------------------------------------------

struct PatternLabel {
    std::string case_id;
    std::string code;
    std::string annotator;
    std::string note;
    std::optional<Cwe> cwe;  // optional inline mapping; otherwise taken from the case map
};

inline void validate_label(const PatternLabel& label, const PatternSchema& schema = default_schema()) {
    if (!schema.contains(label.code)) throw InvalidArgument("unknown pattern code '" + label.code + "'");
}

inline std::vector<PatternLabel> parse_labels(std::string_view text, const PatternSchema& schema = default_schema()) {
    std::vector<PatternLabel> out;
    for_each_jsonl(text, [&](std::size_t line, const json& j) {
        PatternLabel l;
        l.case_id = require_string(j, "case_id", line);
        l.code = require_string(j, "code", line);
        l.annotator = j.value("annotator", std::string{});
        l.note = j.value("note", std::string{});
        if (auto c = optional_string(j, "cwe", line)) {
            l.cwe = parse_cwe(*c);
            if (!l.cwe) throw SchemaError(line, "uncovered cwe '" + *c + "'");
        }
        if (!schema.contains(l.code)) throw SchemaError(line, "unknown pattern code '" + l.code + "'");
        out.push_back(std::move(l));
    });
    return out;
}

inline std::vector<PatternLabel> load_labels(const std::filesystem::path& path,
                                             const PatternSchema& schema = default_schema()) {
    return parse_labels(read_file(path), schema);
}

// ---------------------------------------------------------------------------
// Distribution table
// ---------------------------------------------------------------------------

/// Column for a CWE. With merging on, CWE-787 and CWE-125 share one column by default.
inline std::string column_for(Cwe cwe, bool merge_oob) {
    if (merge_oob && (cwe == Cwe::OutOfBoundsWrite || cwe == Cwe::OutOfBoundsRead)) return "CWE-787&125";
    return to_string(cwe);
}

inline std::vector<std::string> column_order(bool merge_oob) {
    std::vector<std::string> cols;
    for (auto c : {Cwe::InputValidation, Cwe::PathTraversal, Cwe::Xss, Cwe::SqlInjection, Cwe::CodeInjection,
                   Cwe::InfoExposure, Cwe::UseAfterFree, Cwe::OutOfBoundsWrite, Cwe::OutOfBoundsRead}) {
        auto name = column_for(c, merge_oob);
        if (std::find(cols.begin(), cols.end(), name) == cols.end()) cols.push_back(name);
    }
    return cols;
}

inline constexpr std::string_view kTotalColumn = "Total";

struct DistributionTable {
    std::vector<std::string> columns;                    // CWE columns then "Total"
    std::map<std::string, std::size_t> column_totals;    // labels per column
    std::map<std::string, std::map<std::string, std::size_t>> counts;  // row code -> column -> labels

    /// Full-precision percentage; absent for an empty column.
    std::optional<double> percent(const std::string& row, const std::string& col) const {
        auto tot = column_totals.at(col);
        if (tot == 0) return std::nullopt;
        auto r = counts.find(row);
        std::size_t n = 0;
        if (r != counts.end())
            if (auto c = r->second.find(col); c != r->second.end()) n = c->second;
        return 100.0 * static_cast<double>(n) / static_cast<double>(tot);
    }
};

/// Percentages of subcategory labels per CWE column. Category rows hold the
/// sum of their subcategories. The Total column is weighted by label count.
inline DistributionTable distribution_table(const std::vector<PatternLabel>& labels,
                                            const std::map<std::string, Cwe>& case_cwe, bool merge_oob = true,
                                            const PatternSchema& schema = default_schema()) {
    DistributionTable t;
    t.columns = column_order(merge_oob);
    t.columns.emplace_back(kTotalColumn);
    for (const auto& c : t.columns) t.column_totals[c] = 0;
    for (const auto& s : schema.subcategories()) t.counts[s.code];
    for (const auto& c : schema.categories()) t.counts[c.code];
    for (const auto& l : labels) {
        const auto* sub = schema.find(l.code);
        if (!sub) throw InvalidArgument("unknown pattern code '" + l.code + "'");
        std::optional<Cwe> cwe = l.cwe;
        if (!cwe) {
            auto it = case_cwe.find(l.case_id);
            if (it == case_cwe.end()) throw InvalidArgument("case '" + l.case_id + "' has no CWE mapping");
            cwe = it->second;
        }
        const auto col = column_for(*cwe, merge_oob);
        for (const auto& c : {col, std::string(kTotalColumn)}) {
            ++t.column_totals[c];
            ++t.counts[sub->code][c];
            ++t.counts[sub->category][c];
        }
    }
    return t;
}

inline std::string format1(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.1f", std::floor(x * 10.0 + 0.5 + 1e-9) / 10.0);
    return buf;
}

/// Tab-separated table in schema row order: each category row followed by its subcategories.
inline std::string format_table_tsv(const DistributionTable& t, const PatternSchema& schema = default_schema(),
                                    const std::vector<std::string>& meta_lines = {}) {
    std::string out;
    for (const auto& m : meta_lines) out += "# " + m + "\n";
    out += "code\tname";
    for (const auto& c : t.columns) out += "\t" + c;
    out += "\n";
    auto row = [&](const std::string& code, const std::string& name) {
        out += code + "\t" + name;
        for (const auto& c : t.columns) {
            auto p = t.percent(code, c);
            out += "\t" + (p ? format1(*p) : std::string("NA"));
        }
        out += "\n";
    };
    for (const auto& cat : schema.categories()) {
        row(cat.code, cat.name);
        for (const auto& s : schema.subcategories())
            if (s.category == cat.code) row(s.code, s.name);
    }
    out += "n_labels\t";
    for (const auto& c : t.columns) out += "\t" + std::to_string(t.column_totals.at(c));
    out += "\n";
    return out;
}

}  // namespace transec::taxonomy
