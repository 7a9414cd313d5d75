#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "corpus.hpp"
#include "jsonl.hpp"
#include "translator.hpp"

namespace transec {

enum class VerdictProvenance { AutoConsensus, AutoArbitrated, Human };

inline std::string_view to_string(VerdictProvenance p) {
    switch (p) {
        case VerdictProvenance::AutoConsensus: return "auto_consensus";
        case VerdictProvenance::AutoArbitrated: return "auto_arbitrated";
        case VerdictProvenance::Human: return "human";
    }
    return "?";
}

inline std::optional<VerdictProvenance> parse_provenance(std::string_view s) {
    for (auto p : {VerdictProvenance::AutoConsensus, VerdictProvenance::AutoArbitrated, VerdictProvenance::Human})
        if (to_string(p) == s) return p;
    return std::nullopt;
}

/// Consolidated judgment for one translation, carrying the task/sample context
/// the metrics need. Translations that produced no code (parse_status != ok)
/// are recorded without judgment fields and without provenance.
struct FinalVerdict {
    std::string case_id;
    std::string sample_id;
    std::string source_lang;
    std::string target_lang;
    std::string model_id;
    std::optional<Cwe> cwe;
    std::optional<SecurityStatus> source_security_status;
    std::optional<std::size_t> token_count;
    ParseStatus parse_status = ParseStatus::Ok;

    std::optional<bool> isVul;
    std::optional<bool> patch_point_isVul;
    std::optional<bool> patch_point_acc;
    std::optional<bool> is_functional;
    std::optional<std::string> desc;
    std::optional<VerdictProvenance> provenance;
    /// Where is_functional came from: "judge_extended", "human" or empty.
    std::string functional_source;
    std::vector<std::string> verdict_ids;

    friend bool operator==(const FinalVerdict&, const FinalVerdict&) = default;
};

/// Copies task and sample context into the verdict.
inline void attach_context(FinalVerdict& v, const TranslationTask& task, const CodeSample* sample) {
    v.case_id = task.key();
    v.sample_id = task.sample_id;
    v.source_lang = task.source_lang;
    v.target_lang = task.target_lang;
    v.model_id = task.model_id;
    if (sample) {
        v.cwe = sample->cwe;
        v.source_security_status = sample->security_status;
        v.token_count = sample->token_count;
    }
}

namespace detail {
inline ordered_json opt(const std::optional<bool>& b) { return b ? ordered_json(*b) : ordered_json(nullptr); }
}  // namespace detail

inline ordered_json to_json(const FinalVerdict& v) {
    ordered_json j;
    j["case_id"] = v.case_id;
    j["sample_id"] = v.sample_id;
    j["source_lang"] = v.source_lang;
    j["target_lang"] = v.target_lang;
    j["model_id"] = v.model_id;
    j["cwe"] = v.cwe ? ordered_json(to_string(*v.cwe)) : ordered_json(nullptr);
    j["source_security_status"] =
        v.source_security_status ? ordered_json(to_string(*v.source_security_status)) : ordered_json(nullptr);
    j["token_count"] = v.token_count ? ordered_json(*v.token_count) : ordered_json(nullptr);
    j["parse_status"] = to_string(v.parse_status);
    j["isVul"] = detail::opt(v.isVul);
    j["patch_point_isVul"] = detail::opt(v.patch_point_isVul);
    j["patch_point_acc"] = detail::opt(v.patch_point_acc);
    j["is_functional"] = detail::opt(v.is_functional);
    j["desc"] = v.desc ? ordered_json(*v.desc) : ordered_json(nullptr);
    j["provenance"] = v.provenance ? ordered_json(to_string(*v.provenance)) : ordered_json(nullptr);
    j["functional_source"] = v.functional_source;
    j["verdict_ids"] = v.verdict_ids;
    return j;
}

inline FinalVerdict final_verdict_from_json(const json& j, std::size_t line = 0) {
    FinalVerdict v;
    v.case_id = require_string(j, "case_id", line);
    v.sample_id = require_string(j, "sample_id", line);
    v.source_lang = j.value("source_lang", std::string{});
    v.target_lang = j.value("target_lang", std::string{});
    v.model_id = j.value("model_id", std::string{});
    if (auto c = optional_string(j, "cwe", line)) {
        v.cwe = parse_cwe(*c);
        if (!v.cwe) throw SchemaError(line, "uncovered cwe '" + *c + "'");
    }
    if (auto s = optional_string(j, "source_security_status", line)) {
        v.source_security_status = parse_security_status(*s);
        if (!v.source_security_status) throw SchemaError(line, "unknown source_security_status");
    }
    if (auto it = j.find("token_count"); it != j.end() && !it->is_null()) {
        if (!it->is_number_unsigned() && !it->is_number_integer()) throw SchemaError(line, "token_count not integer");
        v.token_count = it->get<std::size_t>();
    }
    auto ps = parse_parse_status(j.value("parse_status", std::string("ok")));
    if (!ps) throw SchemaError(line, "unknown parse_status");
    v.parse_status = *ps;
    v.isVul = optional_bool(j, "isVul", line);
    v.patch_point_isVul = optional_bool(j, "patch_point_isVul", line);
    v.patch_point_acc = optional_bool(j, "patch_point_acc", line);
    v.is_functional = optional_bool(j, "is_functional", line);
    v.desc = optional_string(j, "desc", line);
    if (auto p = optional_string(j, "provenance", line)) {
        v.provenance = parse_provenance(*p);
        if (!v.provenance) throw SchemaError(line, "unknown provenance '" + *p + "'");
    }
    v.functional_source = j.value("functional_source", std::string{});
    if (auto it = j.find("verdict_ids"); it != j.end()) v.verdict_ids = it->get<std::vector<std::string>>();
    if (v.provenance == VerdictProvenance::AutoArbitrated && v.verdict_ids.size() < 3)
        throw SchemaError(line, "auto_arbitrated verdict must reference >= 2 judge verdicts and 1 arbiter verdict");
    return v;
}

inline std::vector<FinalVerdict> load_final_verdicts(const std::filesystem::path& path) {
    std::vector<FinalVerdict> out;
    for_each_jsonl_file(path, [&](std::size_t line, const json& j) { out.push_back(final_verdict_from_json(j, line)); });
    return out;
}

}  // namespace transec
