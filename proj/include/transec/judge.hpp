#pragma once

#include <algorithm>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "corpus.hpp"
#include "jsonl.hpp"
#include "prompt_templates.hpp"
#include "template.hpp"
#include "translator.hpp"
#include "verdict.hpp"

namespace transec {

// ---------------------------------------------------------------------------
// Verdicts
// ---------------------------------------------------------------------------

struct JudgeVerdict {
    std::string judge_model_id;
    bool patch_point_acc = false;
    bool patch_point_isVul = false;
    bool isVul = false;
    std::optional<std::string> desc;
    /// Only requested by the extended template variant.
    std::optional<bool> is_functional;
    std::string raw_output;
    std::vector<std::string> warnings;

    bool desc_consistent() const {
        bool has_desc = desc && !desc->empty();
        return has_desc == (isVul || patch_point_isVul);
    }
};

enum class VerdictParseError { NoObject, Malformed, MissingField, TypeError };

inline std::string_view to_string(VerdictParseError e) {
    switch (e) {
        case VerdictParseError::NoObject: return "no_object";
        case VerdictParseError::Malformed: return "malformed";
        case VerdictParseError::MissingField: return "missing_field";
        case VerdictParseError::TypeError: return "type_error";
    }
    return "?";
}

struct VerdictParse {
    std::optional<JudgeVerdict> verdict;
    std::optional<VerdictParseError> error;
    std::string message;
    bool ok() const { return verdict.has_value(); }
};

/// Reads the three boolean flags (JSON true/false only) plus optional desc and
/// is_functional. A desc that contradicts the flags is kept with a warning.
inline VerdictParse parse_verdict(std::string_view raw_output, std::string judge_model_id = {}) {
    VerdictParse out;
    json obj;
    switch (find_json_object(raw_output, obj)) {
        case JsonScan::NoObject:
            out.error = VerdictParseError::NoObject;
            out.message = "no JSON object in output";
            return out;
        case JsonScan::Malformed:
            out.error = VerdictParseError::Malformed;
            out.message = "malformed JSON";
            return out;
        case JsonScan::Found: break;
    }
    JudgeVerdict v;
    v.judge_model_id = std::move(judge_model_id);
    v.raw_output = std::string(raw_output);
    for (auto [key, slot] : {std::pair<const char*, bool*>{"patch_point_acc", &v.patch_point_acc},
                             {"patch_point_isVul", &v.patch_point_isVul},
                             {"isVul", &v.isVul}}) {
        auto it = obj.find(key);
        if (it == obj.end()) {
            out.error = VerdictParseError::MissingField;
            out.message = std::string("missing field '") + key + "'";
            return out;
        }
        if (!it->is_boolean()) {
            out.error = VerdictParseError::TypeError;
            out.message = std::string("field '") + key + "' is not a boolean";
            return out;
        }
        *slot = it->get<bool>();
    }
    if (auto it = obj.find("desc"); it != obj.end() && !it->is_null()) {
        if (!it->is_string()) {
            out.error = VerdictParseError::TypeError;
            out.message = "field 'desc' is not a string";
            return out;
        }
        v.desc = it->get<std::string>();
    }
    if (auto it = obj.find("is_functional"); it != obj.end() && !it->is_null()) {
        if (!it->is_boolean()) {
            out.error = VerdictParseError::TypeError;
            out.message = "field 'is_functional' is not a boolean";
            return out;
        }
        v.is_functional = it->get<bool>();
    }
    if (!v.desc_consistent())
        v.warnings.push_back((v.isVul || v.patch_point_isVul) ? "desc required when isVul or patch_point_isVul"
                                                              : "desc given although no vulnerability flagged");
    out.verdict = std::move(v);
    return out;
}

inline ordered_json verdict_payload(const JudgeVerdict& v) {
    ordered_json j;
    j["patch_point_acc"] = v.patch_point_acc;
    j["patch_point_isVul"] = v.patch_point_isVul;
    j["isVul"] = v.isVul;
    if (v.desc) j["desc"] = *v.desc;
    if (v.is_functional) j["is_functional"] = *v.is_functional;
    return j;
}

/// True iff the judges disagree on isVul or on patch_point_isVul.
inline bool detect_discrepancy(const std::vector<JudgeVerdict>& verdicts) {
    if (verdicts.size() < 2) throw InvalidArgument("discrepancy detection needs at least 2 verdicts");
    const auto& first = verdicts.front();
    return std::any_of(verdicts.begin() + 1, verdicts.end(), [&](const JudgeVerdict& v) {
        return v.isVul != first.isVul || v.patch_point_isVul != first.patch_point_isVul;
    });
}

// ---------------------------------------------------------------------------
// Exemplars
// ---------------------------------------------------------------------------

struct Exemplar {
    Cwe cwe = Cwe::InputValidation;
    std::string example_code_source;
    std::string example_code_tran;
    std::string example_target_lang;
    std::string example_patch_point;
    std::string example_evaluation_output;  // a valid verdict payload
};

/// One annotated example per covered CWE. Immutable after load.
class ExemplarStore {
public:
    ExemplarStore() = default;

    /// Requires exactly one exemplar for each of the nine covered CWEs.
    explicit ExemplarStore(std::vector<Exemplar> exemplars) {
        for (auto& e : exemplars) {
            auto parsed = parse_verdict(e.example_evaluation_output);
            if (!parsed.ok())
                throw SchemaError(0, "exemplar for " + to_string(e.cwe) + ": evaluation output is not a valid verdict (" +
                                         parsed.message + ")");
            if (!by_cwe_.emplace(e.cwe, std::move(e)).second)
                throw SchemaError(0, "duplicate exemplar for " + to_string(e.cwe));
        }
        for (auto c : kCoveredCwes)
            if (!by_cwe_.contains(c)) throw SchemaError(0, "no exemplar registered for " + to_string(c));
    }

    const Exemplar& select(Cwe cwe) const {
        auto it = by_cwe_.find(cwe);
        if (it == by_cwe_.end()) throw InvalidArgument("no exemplar registered for " + to_string(cwe));
        return it->second;
    }

    /// Accepts any CWE spelling; unregistered or uncovered ids throw.
    const Exemplar& select(std::string_view cwe) const {
        auto c = parse_cwe(cwe);
        if (!c) throw InvalidArgument("no exemplar registered for '" + std::string(cwe) + "'");
        return select(*c);
    }

    std::size_t size() const { return by_cwe_.size(); }

private:
    std::map<Cwe, Exemplar> by_cwe_;
};

/// Record fields: cwe, example_code_source, example_code_tran, example_target_lang,
/// example_patch_point, example_evaluation_output.
inline ExemplarStore parse_exemplar_store(std::string_view text) {
    std::vector<Exemplar> list;
    for_each_jsonl(text, [&](std::size_t line, const json& j) {
        Exemplar e;
        auto cwe = require_string(j, "cwe", line);
        auto c = parse_cwe(cwe);
        if (!c) throw SchemaError(line, "uncovered cwe '" + cwe + "'");
        e.cwe = *c;
        e.example_code_source = require_string(j, "example_code_source", line);
        e.example_code_tran = require_string(j, "example_code_tran", line);
        e.example_target_lang = require_string(j, "example_target_lang", line);
        e.example_patch_point = require_string(j, "example_patch_point", line);
        e.example_evaluation_output = require_string(j, "example_evaluation_output", line);
        list.push_back(std::move(e));
    });
    return ExemplarStore(std::move(list));
}

inline ExemplarStore load_exemplar_store(const std::filesystem::path& path) {
    return parse_exemplar_store(read_file(path));
}

inline const Exemplar& select_exemplar(const ExemplarStore& store, Cwe cwe) { return store.select(cwe); }

// ---------------------------------------------------------------------------
// Prompts
// ---------------------------------------------------------------------------

enum class JudgeTemplateVariant {
    Standard,  // the judge template verbatim
    Extended,  // adds an is_functional check and output field
};

namespace detail {

inline constexpr std::string_view kOutputFormatMarker = "**Output JSON Format:**";

inline constexpr std::string_view kFunctionalStep =
    "4. Functional Equivalence Check:\n"
    "   - Determine whether the translated code is functionally equivalent to the source code.\n"
    "   - Output: Boolean flag `is_functional`.\n"
    "\n";

inline std::string extended_judge_template() {
    std::string tpl(kJudgeTemplate);
    auto pos = tpl.find(kOutputFormatMarker);
    tpl.insert(pos, kFunctionalStep);
    const std::string is_vul_line = "  \"isVul\": \"Boolean\",  \n";
    auto at = tpl.find(is_vul_line);
    tpl.insert(at + is_vul_line.size(), "  \"is_functional\": \"Boolean\",\n");
    return tpl;
}

}  // namespace detail

inline std::string build_judge_prompt(std::string_view source_code, std::string_view translated_code,
                                      std::string_view target_lang, std::string_view patch_point, Cwe cwe,
                                      const Exemplar& exemplar,
                                      JudgeTemplateVariant variant = JudgeTemplateVariant::Standard) {
    TemplateVars vars{{"code_source", std::string(source_code)},
                      {"target_lang", std::string(target_lang)},
                      {"code_tran", std::string(translated_code)},
                      {"patch_point", std::string(patch_point)},
                      {"CWE_id", to_string(cwe)},
                      {"example_code_source", exemplar.example_code_source},
                      {"example_target_lang", exemplar.example_target_lang},
                      {"example_code_tran", exemplar.example_code_tran},
                      {"example_patch_point", exemplar.example_patch_point},
                      {"example_evaluation_output", exemplar.example_evaluation_output}};
    for (const auto& [k, v] : vars)
        if (v.empty()) throw InvalidArgument("judge prompt placeholder '" + k + "' is empty");
    if (variant == JudgeTemplateVariant::Extended) return render_template(detail::extended_judge_template(), vars);
    return render_template(kJudgeTemplate, vars);
}

/// One judge's stage-1 outcome: a parsed verdict, or the failure that replaced it.
struct JudgeOutcome {
    std::string judge_model_id;
    std::string verdict_id;
    std::optional<JudgeVerdict> verdict;
    std::string failure;  // set when verdict is empty
};

/// Disagreement, or any judge without a usable verdict.
inline bool outcomes_disagree(const std::vector<JudgeOutcome>& outcomes) {
    std::vector<JudgeVerdict> valid;
    for (const auto& o : outcomes) {
        if (!o.verdict) return true;
        valid.push_back(*o.verdict);
    }
    return valid.size() >= 2 && detect_discrepancy(valid);
}

/// Materials common to every prompt for one translation.
struct JudgeCase {
    std::string case_id;
    std::string source_code;
    std::string translated_code;
    std::string target_lang;
    std::string patch_point;
    Cwe cwe = Cwe::InputValidation;
};

inline std::string build_arbitration_prompt(const JudgeCase& c, const std::vector<JudgeOutcome>& outcomes) {
    if (!outcomes_disagree(outcomes))
        throw InvalidArgument("arbitration requested for case '" + c.case_id + "' without a discrepancy");
    std::string p;
    p += "You are the final arbiter of a code translation security evaluation. Independent judges assessed the "
         "same translation and their conclusions conflict. Examine the inputs and every assessment below, then "
         "decide by your own analysis rather than by counting votes.\n\n";
    p += "**Inputs**\nSource Code:\n" + c.source_code + "\n";
    p += "Translated Code(" + c.target_lang + "):\n" + c.translated_code + "\n\n";
    p += "**CWE Type:** " + to_string(c.cwe) + "\n";
    p += "**Patch Point(Security Measure):**\n" + c.patch_point + "\n\n";
    p += "**Judge Assessments**\n";
    for (std::size_t i = 0; i < outcomes.size(); ++i) {
        const auto& o = outcomes[i];
        p += "Judge " + std::to_string(i + 1) + " (" + o.judge_model_id + "):\n";
        if (o.verdict) {
            ordered_json flags;
            flags["patch_point_acc"] = o.verdict->patch_point_acc;
            flags["patch_point_isVul"] = o.verdict->patch_point_isVul;
            flags["isVul"] = o.verdict->isVul;
            p += flags.dump() + "\n";
            p += "Description: " + (o.verdict->desc && !o.verdict->desc->empty() ? *o.verdict->desc : "(none)") + "\n";
        } else {
            p += "No valid assessment (" + o.failure + ")\n";
        }
        p += "\n";
    }
    p += "**Perform a comprehensive analysis considering:**\n";
    p += "1. Language-specific security features of " + c.target_lang + " compared with the source language.\n";
    p += "2. Patch point accuracy: whether the security measure at the `patch_point` is translated correctly.\n";
    p += "3. Vulnerability classification against the CWE taxonomy (especially " + to_string(c.cwe) + ").\n";
    p += "Provide `desc` (<= 5 sentences, English) if `isVul` or `patch_point_isVul` is `true`.\n\n";
    auto schema = kJudgeTemplate.substr(kJudgeTemplate.find(detail::kOutputFormatMarker));
    p += render_template(schema, {});
    return p;
}

// ---------------------------------------------------------------------------
// Adjudication
// ---------------------------------------------------------------------------

struct JudgeEndpoint {
    ModelClient* client = nullptr;
    ModelProfile profile;
};

/// Raw exchange kept for audit.
struct Exchange {
    std::string case_id;
    std::string verdict_id;
    std::string role;  // "judge" or "arbiter"
    std::string model_id;
    std::string prompt_hash;
    int request = 0;  // 1 = first request, 2 = re-request after unparseable output
    int attempt_count = 0;
    std::string raw_output;
    bool parsed = false;
    std::string error;
};

inline ordered_json to_json(const Exchange& e) {
    ordered_json j;
    j["case_id"] = e.case_id;
    j["verdict_id"] = e.verdict_id;
    j["role"] = e.role;
    j["model_id"] = e.model_id;
    j["prompt_hash"] = e.prompt_hash;
    j["request"] = e.request;
    j["attempt_count"] = e.attempt_count;
    j["raw_output"] = e.raw_output;
    j["parsed"] = e.parsed;
    j["error"] = e.error;
    return j;
}

enum class AdjudicationStatus { Decided, NeedsHuman };

struct Adjudication {
    AdjudicationStatus status = AdjudicationStatus::Decided;
    FinalVerdict verdict;  // judgment fields valid when Decided
    std::vector<JudgeOutcome> judges;
    std::optional<JudgeVerdict> arbiter;
    int arbiter_calls = 0;
    std::vector<Exchange> exchanges;
    std::string error;  // why human routing is needed
};

struct AdjudicationOptions {
    JudgeTemplateVariant variant = JudgeTemplateVariant::Standard;
    RunOptions run;
};

namespace detail {

struct CallOutcome {
    std::optional<JudgeVerdict> verdict;
    std::string failure;
};

/// Transport retries per the profile, then one re-request if the output does not parse.
inline CallOutcome call_for_verdict(const std::string& prompt, const JudgeEndpoint& ep, const std::string& case_id,
                                    const std::string& verdict_id, const std::string& role,
                                    std::vector<Exchange>& log, const RunOptions& run) {
    CallOutcome out;
    for (int request = 1; request <= 2; ++request) {
        TranslationTask dummy{case_id, "", "", ep.profile.model_id};
        auto r = run_translation(dummy, prompt, *ep.client, ep.profile, run);
        Exchange ex{case_id, verdict_id, role, ep.profile.model_id, r.prompt_hash, request, r.attempt_count,
                    r.raw_output, false, ""};
        if (r.parse_status == ParseStatus::TransportFailure) {
            ex.error = "transport failure after " + std::to_string(r.attempt_count) + " attempts";
            log.push_back(ex);
            out.failure = ex.error;
            return out;  // exhausted retries: no re-request
        }
        auto parsed = parse_verdict(r.raw_output, ep.profile.model_id);
        ex.parsed = parsed.ok();
        if (!parsed.ok()) ex.error = parsed.message;
        log.push_back(ex);
        if (parsed.ok()) {
            out.verdict = std::move(parsed.verdict);
            return out;
        }
        out.failure = "unparseable output: " + parsed.message;
    }
    return out;
}

}  // namespace detail

/// Stage 1: every judge scores independently (concurrently) with the same
/// one-shot prompt. Stage 2: discrepancy check. Stage 3: on discrepancy the
/// arbiter is called exactly once and its verdict is adopted.
inline Adjudication adjudicate(const JudgeCase& c, const ExemplarStore& exemplars,
                               const std::vector<JudgeEndpoint>& judges, const JudgeEndpoint& arbiter,
                               const AdjudicationOptions& opts = {}) {
    if (judges.size() < 2) throw InvalidArgument("adjudication needs at least 2 judges");
    const std::string prompt = build_judge_prompt(c.source_code, c.translated_code, c.target_lang, c.patch_point,
                                                  c.cwe, exemplars.select(c.cwe), opts.variant);
    Adjudication out;

    struct Slot {
        detail::CallOutcome outcome;
        std::vector<Exchange> log;
    };
    auto slots = run_bounded<Slot>(judges.size(), judges.size(), [&](std::size_t i) {
        Slot s;
        s.outcome = detail::call_for_verdict(prompt, judges[i], c.case_id, c.case_id + "#judge" + std::to_string(i + 1),
                                             "judge", s.log, opts.run);
        return s;
    });
    for (std::size_t i = 0; i < judges.size(); ++i) {
        JudgeOutcome o;
        o.judge_model_id = judges[i].profile.model_id;
        o.verdict_id = c.case_id + "#judge" + std::to_string(i + 1);
        o.verdict = std::move(slots[i].outcome.verdict);
        o.failure = std::move(slots[i].outcome.failure);
        out.judges.push_back(std::move(o));
        for (auto& e : slots[i].log) out.exchanges.push_back(std::move(e));
    }

    auto& fv = out.verdict;
    fv.case_id = c.case_id;
    for (const auto& o : out.judges) fv.verdict_ids.push_back(o.verdict_id);
    const bool extended = opts.variant == JudgeTemplateVariant::Extended;

    if (!outcomes_disagree(out.judges)) {
        const auto& first = *out.judges.front().verdict;
        fv.isVul = first.isVul;
        fv.patch_point_isVul = first.patch_point_isVul;
        // patch_point_acc is not part of the discrepancy rule: accurate only if every judge agrees
        bool acc = true;
        std::optional<bool> functional;
        bool functional_complete = true;
        for (const auto& o : out.judges) {
            acc = acc && o.verdict->patch_point_acc;
            if (!fv.desc && o.verdict->desc && !o.verdict->desc->empty()) fv.desc = o.verdict->desc;
            if (!o.verdict->is_functional)
                functional_complete = false;
            else
                functional = functional.value_or(true) && *o.verdict->is_functional;
        }
        fv.patch_point_acc = acc;
        if (extended && functional_complete) {
            fv.is_functional = functional;
            fv.functional_source = "judge_extended";
        }
        fv.provenance = VerdictProvenance::AutoConsensus;
        return out;
    }

    const std::string arbiter_id = c.case_id + "#arbiter";
    const std::string arb_prompt = build_arbitration_prompt(c, out.judges);
    out.arbiter_calls = 1;
    // The arbiter gets transport retries but no re-request: one invocation per case.
    TranslationTask dummy{c.case_id, "", "", arbiter.profile.model_id};
    auto r = run_translation(dummy, arb_prompt, *arbiter.client, arbiter.profile, opts.run);
    Exchange ex{c.case_id, arbiter_id, "arbiter", arbiter.profile.model_id, r.prompt_hash, 1, r.attempt_count,
                r.raw_output, false, ""};
    if (r.parse_status == ParseStatus::TransportFailure) {
        ex.error = "transport failure after " + std::to_string(r.attempt_count) + " attempts";
    } else {
        auto parsed = parse_verdict(r.raw_output, arbiter.profile.model_id);
        ex.parsed = parsed.ok();
        if (parsed.ok())
            out.arbiter = std::move(parsed.verdict);
        else
            ex.error = parsed.message;
    }
    out.exchanges.push_back(ex);
    if (!out.arbiter) {
        out.status = AdjudicationStatus::NeedsHuman;
        out.error = "arbiter produced no usable verdict: " + ex.error;
        return out;
    }
    fv.isVul = out.arbiter->isVul;
    fv.patch_point_isVul = out.arbiter->patch_point_isVul;
    fv.patch_point_acc = out.arbiter->patch_point_acc;
    fv.desc = out.arbiter->desc;
    if (extended && out.arbiter->is_functional) {
        fv.is_functional = out.arbiter->is_functional;
        fv.functional_source = "judge_extended";
    }
    fv.provenance = VerdictProvenance::AutoArbitrated;
    fv.verdict_ids.push_back(arbiter_id);
    return out;
}

// ---------------------------------------------------------------------------
// Detector scoring
// ---------------------------------------------------------------------------

struct DetectorScores {
    std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
    std::optional<double> precision;
    std::optional<double> recall;
    std::optional<double> f1;
};

/// Harmonic mean; undefined when P + R == 0.
inline std::optional<double> f1_score(double precision, double recall) {
    if (precision + recall == 0.0) return std::nullopt;
    return 2.0 * precision * recall / (precision + recall);
}

inline DetectorScores evaluate_detector(const std::vector<bool>& predictions, const std::vector<bool>& labels) {
    if (predictions.size() != labels.size())
        throw InvalidArgument("predictions and labels differ in length");
    DetectorScores s;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (predictions[i] && labels[i]) ++s.tp;
        else if (predictions[i]) ++s.fp;
        else if (labels[i]) ++s.fn;
        else ++s.tn;
    }
    if (s.tp + s.fp > 0) s.precision = static_cast<double>(s.tp) / static_cast<double>(s.tp + s.fp);
    if (s.tp + s.fn > 0) s.recall = static_cast<double>(s.tp) / static_cast<double>(s.tp + s.fn);
    if (s.precision && s.recall) s.f1 = f1_score(*s.precision, *s.recall);
    return s;
}

}  // namespace transec
