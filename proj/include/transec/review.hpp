#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "corpus.hpp"
#include "hash.hpp"
#include "jsonl.hpp"
#include "random.hpp"
#include "translator.hpp"
#include "verdict.hpp"

namespace transec::review {

// ---------------------------------------------------------------------------
// Domain types
// ---------------------------------------------------------------------------

enum class CaseState { Pending, InReview, Agreed, Conflicted, Arbitrated, Finalized };

inline std::string_view to_string(CaseState s) {
    switch (s) {
        case CaseState::Pending: return "pending";
        case CaseState::InReview: return "in_review";
        case CaseState::Agreed: return "agreed";
        case CaseState::Conflicted: return "conflicted";
        case CaseState::Arbitrated: return "arbitrated";
        case CaseState::Finalized: return "finalized";
    }
    return "?";
}

/// Allowed edges. finalized -> conflicted is the audit-reopen edge; nothing else regresses.
inline bool legal_transition(CaseState from, CaseState to) {
    using S = CaseState;
    switch (from) {
        case S::Pending: return to == S::InReview;
        case S::InReview: return to == S::Agreed || to == S::Conflicted;
        case S::Agreed: return to == S::Finalized;
        case S::Conflicted: return to == S::Arbitrated;
        case S::Arbitrated: return to == S::Finalized;
        case S::Finalized: return to == S::Conflicted;
    }
    return false;
}

/// Evaluation materials shown to reviewers.
struct CaseMaterials {
    std::string sample_id;
    std::string source_lang;
    std::string target_lang;
    std::string model_id;
    std::string source_code;
    std::string translated_code;
    std::string cwe;
    std::string security_status;
    std::string patch_description;
    std::vector<LineSpan> patch_locations;
    std::string cve_record;
    std::optional<std::size_t> token_count;
};

inline ordered_json to_json(const CaseMaterials& m) {
    ordered_json spans = ordered_json::array();
    for (const auto& s : m.patch_locations) spans.push_back({s.start, s.end});
    ordered_json j;
    j["sample_id"] = m.sample_id;
    j["source_lang"] = m.source_lang;
    j["target_lang"] = m.target_lang;
    j["model_id"] = m.model_id;
    j["source_code"] = m.source_code;
    j["translated_code"] = m.translated_code;
    j["cwe"] = m.cwe;
    j["security_status"] = m.security_status;
    j["patch_description"] = m.patch_description;
    j["patch_locations"] = std::move(spans);
    j["cve_record"] = m.cve_record;
    j["token_count"] = m.token_count ? ordered_json(*m.token_count) : ordered_json(nullptr);
    return j;
}

inline CaseMaterials materials_from_json(const json& j) {
    CaseMaterials m;
    m.sample_id = j.value("sample_id", "");
    m.source_lang = j.value("source_lang", "");
    m.target_lang = j.value("target_lang", "");
    m.model_id = j.value("model_id", "");
    m.source_code = j.value("source_code", "");
    m.translated_code = j.value("translated_code", "");
    m.cwe = j.value("cwe", "");
    m.security_status = j.value("security_status", "");
    m.patch_description = j.value("patch_description", "");
    if (auto it = j.find("patch_locations"); it != j.end())
        for (const auto& s : *it) m.patch_locations.push_back({s.at(0).get<std::int64_t>(), s.at(1).get<std::int64_t>()});
    m.cve_record = j.value("cve_record", "");
    if (auto it = j.find("token_count"); it != j.end() && !it->is_null()) m.token_count = it->get<std::size_t>();
    return m;
}

inline CaseMaterials make_materials(const CodeSample& sample, const TranslationResult& result,
                                    std::string cve_record = {}) {
    CaseMaterials m;
    m.sample_id = sample.id;
    m.source_lang = result.task.source_lang;
    m.target_lang = result.task.target_lang;
    m.model_id = result.task.model_id;
    m.source_code = sample.code;
    m.translated_code = result.translated_code.value_or("");
    m.cwe = to_string(sample.cwe);
    m.security_status = std::string(to_string(sample.security_status));
    m.patch_description = sample.patch_annotation.description;
    m.patch_locations = sample.patch_annotation.locations;
    m.cve_record = cve_record.empty() ? sample.provenance.cve_id.value_or("") : std::move(cve_record);
    m.token_count = sample.token_count;
    return m;
}

struct ReviewVerdict {
    std::string reviewer_id;
    bool is_functional = false;
    bool isVul = false;
    std::string justification;
    std::int64_t submitted_at = 0;
};

inline ordered_json to_json(const ReviewVerdict& v) {
    ordered_json j;
    j["reviewer_id"] = v.reviewer_id;
    j["is_functional"] = v.is_functional;
    j["isVul"] = v.isVul;
    j["justification"] = v.justification;
    j["submitted_at"] = v.submitted_at;
    return j;
}

inline ReviewVerdict review_verdict_from_json(const json& j) {
    ReviewVerdict v;
    v.reviewer_id = j.at("reviewer_id").get<std::string>();
    v.is_functional = j.at("is_functional").get<bool>();
    v.isVul = j.at("isVul").get<bool>();
    v.justification = j.at("justification").get<std::string>();
    v.submitted_at = j.value("submitted_at", std::int64_t{0});
    return v;
}

struct ReviewCase {
    std::string case_id;
    CaseMaterials materials;
    CaseState state = CaseState::Pending;
    std::vector<std::string> reviewers;      // the two initial reviewers
    std::optional<std::string> arbiter;      // third reviewer once routed
    std::vector<ReviewVerdict> verdicts;     // initial verdicts, then the arbiter's
    std::vector<ReviewVerdict> superseded;   // arbiter verdicts replaced after an audit reopen
    std::vector<CaseState> history{CaseState::Pending};

    const ReviewVerdict* verdict_of(std::string_view reviewer) const {
        for (const auto& v : verdicts)
            if (v.reviewer_id == reviewer) return &v;
        return nullptr;
    }
};

struct Assignment {
    std::string case_id;
    std::array<std::string, 2> reviewers;
};

struct AuditBatch {
    std::string audit_id;
    std::uint64_t seed = 0;
    double fraction = 0.10;
    std::vector<std::string> case_ids;
};

/// Rejected command. The case is left untouched.
class WorkflowError : public Error {
public:
    using Error::Error;
};

// ---------------------------------------------------------------------------
// Pure planning functions
// ---------------------------------------------------------------------------

/// Every case gets two distinct reviewers; per-reviewer load differs by at most one.
/// Reviewer and case order are shuffled from `seed`.
inline std::vector<Assignment> create_assignments(std::vector<std::string> case_ids, std::vector<std::string> reviewers,
                                                  std::uint64_t seed) {
    std::sort(reviewers.begin(), reviewers.end());
    reviewers.erase(std::unique(reviewers.begin(), reviewers.end()), reviewers.end());
    if (reviewers.size() < 2) throw InvalidArgument("at least 2 distinct reviewers are required");
    SeededRng rng(seed);
    rng.shuffle(reviewers);
    rng.shuffle(case_ids);
    std::vector<Assignment> out;
    out.reserve(case_ids.size());
    const std::size_t r = reviewers.size();
    for (std::size_t i = 0; i < case_ids.size(); ++i)
        out.push_back({case_ids[i], {reviewers[(2 * i) % r], reviewers[(2 * i + 1) % r]}});
    return out;
}

/// Uniform sample without replacement of round(fraction * N) cases, a pure
/// function of (seed, set of finalized ids).
inline AuditBatch sample_audit(std::vector<std::string> finalized_ids, double fraction, std::uint64_t seed) {
    if (!(fraction > 0.0 && fraction <= 1.0)) throw InvalidArgument("audit fraction must be in (0, 1]");
    if (finalized_ids.empty()) throw InvalidArgument("no finalized cases to audit");
    std::sort(finalized_ids.begin(), finalized_ids.end());
    finalized_ids.erase(std::unique(finalized_ids.begin(), finalized_ids.end()), finalized_ids.end());
    const auto n = finalized_ids.size();
    auto k = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
    k = std::min(k, n);
    SeededRng rng(seed);
    for (std::size_t i = 0; i < k; ++i) {
        std::size_t j = i + rng.below(n - i);
        std::swap(finalized_ids[i], finalized_ids[j]);
    }
    finalized_ids.resize(k);
    std::sort(finalized_ids.begin(), finalized_ids.end());
    return {"", seed, fraction, std::move(finalized_ids)};
}

/// Stable pseudonym for exports.
inline std::string pseudonym(std::string_view reviewer_id, std::string_view salt) {
    return "rev-" + hex64(fnv1a64(std::string(salt) + "\x1f" + std::string(reviewer_id))).substr(0, 10);
}

// ---------------------------------------------------------------------------
// Trace of API responses (double-blind evidence)
// ---------------------------------------------------------------------------

struct Exposure {
    std::string case_id;
    std::string author;  // reviewer whose verdict fields were included
};

struct TraceEntry {
    std::uint64_t seq = 0;
    std::string viewer;
    std::string endpoint;
    std::vector<Exposure> exposures;
};

// ---------------------------------------------------------------------------
// Service
// ---------------------------------------------------------------------------

struct ServiceOptions {
    std::optional<std::filesystem::path> event_log;  // append-only; replayed on start
    Clock clock = wall_clock();
    std::string pseudonym_salt = "transec";
};

/// Event-sourced workflow engine. Every accepted command is one event; a
/// single lock gives each case a total order of events.
class ReviewService {
public:
    explicit ReviewService(ServiceOptions opts = {}) : opts_(std::move(opts)) {
        if (opts_.event_log && std::filesystem::exists(*opts_.event_log)) {
            replaying_ = true;
            for_each_jsonl_file(*opts_.event_log, [&](std::size_t line, const json& e) {
                try {
                    apply(e);
                } catch (const std::exception& ex) {
                    throw SchemaError(line, std::string("event log replay failed: ") + ex.what());
                }
            });
            replaying_ = false;
        }
    }

    // ---- commands ---------------------------------------------------------

    void add_case(const std::string& case_id, const CaseMaterials& materials) {
        ordered_json e{{"type", "case_created"}, {"case_id", case_id}, {"materials", to_json(materials)}};
        commit(e);
    }

    /// Plans and records assignments for the given pending cases.
    std::vector<Assignment> assign(const std::vector<std::string>& case_ids, const std::vector<std::string>& reviewers,
                                   std::uint64_t seed) {
        auto plan = create_assignments(case_ids, reviewers, seed);
        for (const auto& a : plan)
            commit(ordered_json{{"type", "assigned"}, {"case_id", a.case_id}, {"reviewers", a.reviewers}});
        return plan;
    }

    void assign_pair(const std::string& case_id, const std::string& a, const std::string& b) {
        commit(ordered_json{{"type", "assigned"}, {"case_id", case_id}, {"reviewers", {a, b}}});
    }

    ReviewCase submit_verdict(const std::string& case_id, const std::string& reviewer, bool is_functional, bool isVul,
                              const std::string& justification) {
        std::lock_guard lock(mutex_);
        commit_locked(ordered_json{{"type", "verdict_submitted"},
                                   {"case_id", case_id},
                                   {"reviewer_id", reviewer},
                                   {"is_functional", is_functional},
                                   {"isVul", isVul},
                                   {"justification", justification},
                                   {"submitted_at", opts_.clock()}});
        return cases_.at(case_id);
    }

    void route_conflict(const std::string& case_id, const std::string& third_reviewer) {
        commit(ordered_json{{"type", "arbiter_assigned"}, {"case_id", case_id}, {"reviewer_id", third_reviewer}});
    }

    AuditBatch create_audit(double fraction, std::uint64_t seed) {
        std::lock_guard lock(mutex_);
        auto batch = sample_audit(finalized_ids_locked(), fraction, seed);
        batch.audit_id = "audit-" + std::to_string(audits_.size() + 1);
        commit_locked(ordered_json{{"type", "audit_created"},
                                   {"audit_id", batch.audit_id},
                                   {"seed", batch.seed},
                                   {"fraction", batch.fraction},
                                   {"case_ids", batch.case_ids}});
        return audits_.at(batch.audit_id);
    }

    /// Re-review of an audited case. Disagreement with the final isVul reopens it as conflicted.
    /// Returns true when the case was reopened.
    bool record_audit_review(const std::string& audit_id, const std::string& case_id, const std::string& reviewer,
                             bool isVul, const std::string& justification) {
        std::lock_guard lock(mutex_);
        auto before = cases_.count(case_id) ? cases_.at(case_id).state : CaseState::Pending;
        commit_locked(ordered_json{{"type", "audit_review"},
                                   {"audit_id", audit_id},
                                   {"case_id", case_id},
                                   {"reviewer_id", reviewer},
                                   {"isVul", isVul},
                                   {"justification", justification},
                                   {"submitted_at", opts_.clock()}});
        return before == CaseState::Finalized && cases_.at(case_id).state == CaseState::Conflicted;
    }

    // ---- queries -----------------------------------------------------------

    std::optional<ReviewCase> get_case(const std::string& case_id) const {
        std::lock_guard lock(mutex_);
        auto it = cases_.find(case_id);
        if (it == cases_.end()) return std::nullopt;
        return it->second;
    }

    std::vector<std::string> case_ids() const {
        std::lock_guard lock(mutex_);
        std::vector<std::string> out;
        for (const auto& [id, c] : cases_) out.push_back(id);
        return out;
    }

    std::vector<std::string> finalized_ids() const {
        std::lock_guard lock(mutex_);
        return finalized_ids_locked();
    }

    std::optional<AuditBatch> get_audit(const std::string& audit_id) const {
        std::lock_guard lock(mutex_);
        auto it = audits_.find(audit_id);
        if (it == audits_.end()) return std::nullopt;
        return it->second;
    }

    /// One human FinalVerdict per finalized case; reviewer ids are pseudonymized.
    std::vector<FinalVerdict> export_records() const {
        std::lock_guard lock(mutex_);
        std::vector<FinalVerdict> out;
        for (const auto& [id, c] : cases_)
            if (c.state == CaseState::Finalized) out.push_back(final_verdict_locked(c));
        return out;
    }

    std::vector<ordered_json> events() const {
        std::lock_guard lock(mutex_);
        return events_;
    }

    /// Derived state, one line per case.
    std::string snapshot() const {
        std::lock_guard lock(mutex_);
        std::string out;
        for (const auto& [id, c] : cases_) {
            ordered_json j;
            j["case_id"] = id;
            j["state"] = to_string(c.state);
            j["reviewers"] = c.reviewers;
            j["arbiter"] = c.arbiter ? ordered_json(*c.arbiter) : ordered_json(nullptr);
            ordered_json vs = ordered_json::array();
            for (const auto& v : c.verdicts) vs.push_back(to_json(v));
            j["verdicts"] = std::move(vs);
            ordered_json hist = ordered_json::array();
            for (auto s : c.history) hist.push_back(to_string(s));
            j["history"] = std::move(hist);
            out += j.dump() + "\n";
        }
        return out;
    }

    void write_snapshot(const std::filesystem::path& path) const { write_file(path, snapshot()); }

    // ---- API surface (payloads returned to HTTP clients, traced) ----------

    /// Open assignments for `reviewer`. Initial reviewers see materials only; an
    /// arbiter additionally sees both initial verdicts with justifications.
    ordered_json api_assignments(const std::string& reviewer) {
        std::lock_guard lock(mutex_);
        TraceEntry t{++trace_seq_, reviewer, "GET /assignments", {}};
        ordered_json list = ordered_json::array();
        for (const auto& [id, c] : cases_) {
            const bool initial_open = c.state == CaseState::InReview &&
                                      std::find(c.reviewers.begin(), c.reviewers.end(), reviewer) != c.reviewers.end() &&
                                      !c.verdict_of(reviewer);
            const bool arbiter_open = c.state == CaseState::Conflicted && c.arbiter == reviewer;
            if (!initial_open && !arbiter_open) continue;
            ordered_json a;
            a["case_id"] = id;
            a["role"] = arbiter_open ? "arbiter" : "initial";
            a["materials"] = to_json(c.materials);
            if (arbiter_open) {
                ordered_json prior = ordered_json::array();
                for (const auto& v : c.verdicts) prior.push_back(expose(t, id, v));
                a["prior_verdicts"] = std::move(prior);
            }
            list.push_back(std::move(a));
        }
        trace_.push_back(std::move(t));
        return ordered_json{{"reviewer", reviewer}, {"assignments", std::move(list)}};
    }

    /// Response carries the case state and the submitter's own verdict only.
    ordered_json api_submit_verdict(const std::string& case_id, const std::string& reviewer, const json& body) {
        if (!body.is_object() || !body.contains("is_functional") || !body["is_functional"].is_boolean() ||
            !body.contains("isVul") || !body["isVul"].is_boolean() || !body.contains("justification") ||
            !body["justification"].is_string())
            throw WorkflowError("verdict body needs boolean is_functional, boolean isVul, string justification");
        submit_verdict(case_id, reviewer, body["is_functional"].get<bool>(), body["isVul"].get<bool>(),
                       body["justification"].get<std::string>());
        std::lock_guard lock(mutex_);
        const auto& c = cases_.at(case_id);
        TraceEntry t{++trace_seq_, reviewer, "POST /cases/{id}/verdicts", {}};
        ordered_json out{{"case_id", case_id}, {"state", to_string(c.state)}};
        out["verdict"] = expose(t, case_id, *c.verdict_of(reviewer));
        trace_.push_back(std::move(t));
        return out;
    }

    /// Lead-only queue. No verdict fields are included.
    ordered_json api_conflicts(const std::string& viewer) {
        std::lock_guard lock(mutex_);
        trace_.push_back({++trace_seq_, viewer, "GET /conflicts", {}});
        ordered_json list = ordered_json::array();
        for (const auto& [id, c] : cases_) {
            if (c.state != CaseState::Conflicted) continue;
            list.push_back(ordered_json{{"case_id", id},
                                        {"reviewers", c.reviewers},
                                        {"arbiter", c.arbiter ? ordered_json(*c.arbiter) : ordered_json(nullptr)}});
        }
        return ordered_json{{"conflicts", std::move(list)}};
    }

    ordered_json api_route_conflict(const std::string& case_id, const std::string& viewer, const std::string& third) {
        route_conflict(case_id, third);
        std::lock_guard lock(mutex_);
        trace_.push_back({++trace_seq_, viewer, "POST /cases/{id}/arbitration", {}});
        return ordered_json{{"case_id", case_id}, {"arbiter", third}, {"state", to_string(cases_.at(case_id).state)}};
    }

    ordered_json api_create_audit(const std::string& viewer, double fraction, std::uint64_t seed) {
        auto batch = create_audit(fraction, seed);
        std::lock_guard lock(mutex_);
        trace_.push_back({++trace_seq_, viewer, "POST /audits", {}});
        return audit_json(batch);
    }

    std::optional<ordered_json> api_get_audit(const std::string& viewer, const std::string& audit_id) {
        auto batch = get_audit(audit_id);
        std::lock_guard lock(mutex_);
        trace_.push_back({++trace_seq_, viewer, "GET /audits/{id}", {}});
        if (!batch) return std::nullopt;
        return audit_json(*batch);
    }

    ordered_json api_export(const std::string& viewer) {
        auto records = export_records();
        std::lock_guard lock(mutex_);
        TraceEntry t{++trace_seq_, viewer, "GET /export", {}};
        ordered_json list = ordered_json::array();
        for (const auto& r : records) {
            for (const auto& v : cases_.at(r.case_id).verdicts) t.exposures.push_back({r.case_id, v.reviewer_id});
            list.push_back(to_json(r));
        }
        trace_.push_back(std::move(t));
        return ordered_json{{"records", std::move(list)}};
    }

    std::vector<TraceEntry> trace() const {
        std::lock_guard lock(mutex_);
        return trace_;
    }

    /// Trace seq at which `reviewer` submitted on `case_id` (0 if never).
    std::uint64_t submission_seq(const std::string& case_id, const std::string& reviewer) const {
        std::lock_guard lock(mutex_);
        auto it = submitted_at_seq_.find({case_id, reviewer});
        return it == submitted_at_seq_.end() ? 0 : it->second;
    }

    /// Every response shown to an initial reviewer of a case before that reviewer
    /// submitted on it carries no other reviewer's verdict. Arbiters are exempt.
    /// Returns the first violation, if any.
    std::optional<std::string> check_double_blind() const {
        std::lock_guard lock(mutex_);
        for (const auto& t : trace_) {
            for (const auto& e : t.exposures) {
                if (e.author == t.viewer) continue;
                const auto& c = cases_.at(e.case_id);
                if (std::find(c.reviewers.begin(), c.reviewers.end(), t.viewer) == c.reviewers.end()) continue;
                auto it = submitted_at_seq_.find({e.case_id, t.viewer});
                if (it == submitted_at_seq_.end() || it->second >= t.seq)
                    return "trace " + std::to_string(t.seq) + ": " + t.viewer + " saw " + e.author + "'s verdict on " +
                           e.case_id + " before submitting";
            }
        }
        return std::nullopt;
    }

private:
    ordered_json expose(TraceEntry& t, const std::string& case_id, const ReviewVerdict& v) {
        t.exposures.push_back({case_id, v.reviewer_id});
        return to_json(v);
    }

    static ordered_json audit_json(const AuditBatch& b) {
        return ordered_json{{"audit_id", b.audit_id}, {"seed", b.seed}, {"fraction", b.fraction}, {"case_ids", b.case_ids}};
    }

    std::vector<std::string> finalized_ids_locked() const {
        std::vector<std::string> out;
        for (const auto& [id, c] : cases_)
            if (c.state == CaseState::Finalized) out.push_back(id);
        return out;
    }

    FinalVerdict final_verdict_locked(const ReviewCase& c) const {
        FinalVerdict v;
        v.case_id = c.case_id;
        v.sample_id = c.materials.sample_id;
        v.source_lang = c.materials.source_lang;
        v.target_lang = c.materials.target_lang;
        v.model_id = c.materials.model_id;
        v.cwe = parse_cwe(c.materials.cwe);
        v.source_security_status = parse_security_status(c.materials.security_status);
        v.token_count = c.materials.token_count;
        v.provenance = VerdictProvenance::Human;
        v.functional_source = "human";
        for (const auto& r : c.verdicts) v.verdict_ids.push_back(pseudonym(r.reviewer_id, opts_.pseudonym_salt));
        if (c.verdicts.size() == 3) {
            const auto& third = c.verdicts[2];
            v.isVul = third.isVul;
            v.is_functional = third.is_functional;
            v.desc = third.justification;
        } else {
            v.isVul = c.verdicts[0].isVul;
            // functional disagreement does not trigger arbitration; both must say functional
            v.is_functional = c.verdicts[0].is_functional && c.verdicts[1].is_functional;
            v.desc = c.verdicts[0].justification + "\n\n" + c.verdicts[1].justification;
        }
        return v;
    }

    void commit(const ordered_json& e) {
        std::lock_guard lock(mutex_);
        commit_locked(e);
    }

    void commit_locked(ordered_json e) {
        apply(e);
        e["seq"] = events_.size();
        if (opts_.event_log) {
            std::ofstream out(*opts_.event_log, std::ios::app | std::ios::binary);
            if (!out) throw Error("cannot append to event log " + opts_.event_log->string());
            out << e.dump() << '\n';
        }
    }

    void transition(ReviewCase& c, CaseState to) {
        if (!legal_transition(c.state, to))
            throw WorkflowError("illegal transition " + std::string(to_string(c.state)) + " -> " +
                                std::string(to_string(to)) + " for case " + c.case_id);
        c.state = to;
        c.history.push_back(to);
    }

    ReviewCase& case_ref(const std::string& id) {
        auto it = cases_.find(id);
        if (it == cases_.end()) throw WorkflowError("unknown case '" + id + "'");
        return it->second;
    }

    static bool blank(const std::string& s) { return s.find_first_not_of(" \t\r\n") == std::string::npos; }

    /// Validates then applies one event. Throws WorkflowError without mutating state.
    void apply(const json& e) {
        const auto type = e.at("type").get<std::string>();
        if (type == "case_created") {
            auto id = e.at("case_id").get<std::string>();
            if (id.empty()) throw WorkflowError("empty case id");
            if (cases_.count(id)) throw WorkflowError("case '" + id + "' already exists");
            ReviewCase c;
            c.case_id = id;
            c.materials = materials_from_json(e.at("materials"));
            cases_.emplace(id, std::move(c));
        } else if (type == "assigned") {
            auto& c = case_ref(e.at("case_id").get<std::string>());
            auto rs = e.at("reviewers").get<std::vector<std::string>>();
            if (rs.size() != 2 || rs[0] == rs[1] || rs[0].empty() || rs[1].empty())
                throw WorkflowError("a case needs exactly 2 distinct reviewers");
            if (c.state != CaseState::Pending) throw WorkflowError("case " + c.case_id + " is not pending");
            transition(c, CaseState::InReview);
            c.reviewers = std::move(rs);
        } else if (type == "verdict_submitted") {
            auto& c = case_ref(e.at("case_id").get<std::string>());
            ReviewVerdict v = review_verdict_from_json(e);
            if (blank(v.justification)) throw WorkflowError("justification must not be empty");
            if (c.state == CaseState::Finalized) throw WorkflowError("case " + c.case_id + " is finalized");
            if (c.verdict_of(v.reviewer_id)) throw WorkflowError("duplicate submission by " + v.reviewer_id);
            const bool initial = std::find(c.reviewers.begin(), c.reviewers.end(), v.reviewer_id) != c.reviewers.end();
            if (initial && c.state == CaseState::InReview) {
                c.verdicts.push_back(v);
                if (c.verdicts.size() == 2) {
                    if (c.verdicts[0].isVul == c.verdicts[1].isVul) {
                        transition(c, CaseState::Agreed);
                        transition(c, CaseState::Finalized);
                    } else {
                        transition(c, CaseState::Conflicted);
                    }
                }
            } else if (c.state == CaseState::Conflicted && c.arbiter == v.reviewer_id) {
                c.verdicts.push_back(v);
                transition(c, CaseState::Arbitrated);
                transition(c, CaseState::Finalized);
            } else {
                throw WorkflowError(v.reviewer_id + " holds no open assignment on " + c.case_id);
            }
            if (!replaying_) submitted_at_seq_[{c.case_id, v.reviewer_id}] = ++trace_seq_;
        } else if (type == "arbiter_assigned") {
            auto& c = case_ref(e.at("case_id").get<std::string>());
            auto r = e.at("reviewer_id").get<std::string>();
            if (c.state != CaseState::Conflicted) throw WorkflowError("case " + c.case_id + " is not conflicted");
            if (r.empty() || std::find(c.reviewers.begin(), c.reviewers.end(), r) != c.reviewers.end())
                throw WorkflowError("third reviewer must differ from both initial reviewers");
            if (c.arbiter && c.verdict_of(*c.arbiter)) throw WorkflowError("case already arbitrated");
            c.arbiter = r;
        } else if (type == "audit_created") {
            AuditBatch b;
            b.audit_id = e.at("audit_id").get<std::string>();
            b.seed = e.at("seed").get<std::uint64_t>();
            b.fraction = e.at("fraction").get<double>();
            b.case_ids = e.at("case_ids").get<std::vector<std::string>>();
            if (audits_.count(b.audit_id)) throw WorkflowError("duplicate audit id");
            for (const auto& id : b.case_ids)
                if (case_ref(id).state != CaseState::Finalized) throw WorkflowError("audited case " + id + " not finalized");
            audits_.emplace(b.audit_id, std::move(b));
        } else if (type == "audit_review") {
            auto audit_id = e.at("audit_id").get<std::string>();
            auto it = audits_.find(audit_id);
            if (it == audits_.end()) throw WorkflowError("unknown audit '" + audit_id + "'");
            auto case_id = e.at("case_id").get<std::string>();
            const auto& ids = it->second.case_ids;
            if (std::find(ids.begin(), ids.end(), case_id) == ids.end())
                throw WorkflowError("case " + case_id + " is not in " + audit_id);
            if (blank(e.at("justification").get<std::string>())) throw WorkflowError("justification must not be empty");
            auto& c = case_ref(case_id);
            if (c.state != CaseState::Finalized) throw WorkflowError("case " + case_id + " is not finalized");
            bool final_vul = c.verdicts.size() == 3 ? c.verdicts[2].isVul : c.verdicts[0].isVul;
            if (e.at("isVul").get<bool>() != final_vul) {
                transition(c, CaseState::Conflicted);
                if (c.verdicts.size() == 3) {
                    c.superseded.push_back(c.verdicts.back());
                    c.verdicts.pop_back();
                }
                c.arbiter.reset();
            }
        } else {
            throw WorkflowError("unknown event type '" + type + "'");
        }
        events_.push_back(e);
    }

    ServiceOptions opts_;
    mutable std::mutex mutex_;
    std::map<std::string, ReviewCase> cases_;
    std::map<std::string, AuditBatch> audits_;
    std::vector<ordered_json> events_;
    std::vector<TraceEntry> trace_;
    std::map<std::pair<std::string, std::string>, std::uint64_t> submitted_at_seq_;
    std::uint64_t trace_seq_ = 0;
    bool replaying_ = false;
};

}  // namespace transec::review
