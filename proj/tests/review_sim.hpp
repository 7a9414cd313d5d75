#pragma once

// Random event-sequence driver for the review workflow. Actions are drawn
// without regard to legality; the service must reject the illegal ones and
// the invariants below must hold after every step.

#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "transec/random.hpp"
#include "transec/review.hpp"

namespace transec::testkit {

/// Allowed state edges, written out independently of the library.
inline const std::set<std::pair<std::string, std::string>>& allowed_edges() {
    static const std::set<std::pair<std::string, std::string>> e{
        {"pending", "in_review"}, {"in_review", "agreed"},    {"in_review", "conflicted"},
        {"agreed", "finalized"},  {"conflicted", "arbitrated"}, {"arbitrated", "finalized"},
        {"finalized", "conflicted"}};
    return e;
}

/// First violated invariant of one case, if any.
inline std::optional<std::string> case_violation(const review::ReviewCase& c) {
    if (c.history.empty() || c.history.front() != review::CaseState::Pending)
        return c.case_id + ": history does not start pending";
    std::string prev = "pending";
    for (std::size_t i = 1; i < c.history.size(); ++i) {
        std::string next(review::to_string(c.history[i]));
        if (!allowed_edges().count({prev, next})) return c.case_id + ": illegal edge " + prev + " -> " + next;
        prev = next;
    }
    if (prev != std::string(review::to_string(c.state))) return c.case_id + ": history does not end in current state";
    if (c.state == review::CaseState::Finalized && c.verdicts.size() != 2 && c.verdicts.size() != 3)
        return c.case_id + ": finalized with " + std::to_string(c.verdicts.size()) + " verdicts";
    if (c.arbiter)
        for (const auto& r : c.reviewers)
            if (r == *c.arbiter) return c.case_id + ": third reviewer repeats an initial reviewer";
    if (c.verdicts.size() == 3 && c.verdicts[2].reviewer_id == c.verdicts[0].reviewer_id)
        return c.case_id + ": third verdict by an initial reviewer";
    std::set<std::string> authors;
    for (const auto& v : c.verdicts)
        if (!authors.insert(v.reviewer_id).second) return c.case_id + ": duplicate verdict author";
    return std::nullopt;
}

struct SimOutcome {
    std::optional<std::string> violation;
    std::size_t accepted = 0;
    std::size_t rejected = 0;
};

/// Runs `steps` random actions over `n_cases` cases and `n_reviewers` reviewers.
inline SimOutcome simulate_review(std::uint64_t seed, std::size_t n_cases = 6, std::size_t n_reviewers = 4,
                                  std::size_t steps = 40) {
    SimOutcome out;
    review::ReviewService svc(review::ServiceOptions{std::nullopt, fixed_clock(0), "salt"});
    SeededRng rng(seed);
    std::vector<std::string> cases, reviewers;
    for (std::size_t i = 0; i < n_cases; ++i) {
        cases.push_back("case-" + std::to_string(i));
        review::CaseMaterials m;
        m.sample_id = "s" + std::to_string(i);
        m.cwe = "CWE-79";
        m.security_status = "patched";
        svc.add_case(cases.back(), m);
    }
    for (std::size_t i = 0; i < n_reviewers; ++i) reviewers.push_back("r" + std::to_string(i));
    svc.assign(cases, reviewers, seed);
    std::vector<std::string> audits;

    auto pick = [&](const std::vector<std::string>& v) { return v[rng.below(v.size())]; };
    for (std::size_t step = 0; step < steps; ++step) {
        const auto action = rng.below(10);
        const auto case_id = pick(cases);
        const auto before = *svc.get_case(case_id);
        try {
            if (action < 5) {
                // reviewers look at their queue before submitting, as the UI does
                const auto who = pick(reviewers);
                svc.api_assignments(who);
                svc.api_submit_verdict(case_id, who,
                                       json{{"is_functional", rng.below(2) == 1},
                                            {"isVul", rng.below(2) == 1},
                                            {"justification", rng.below(8) == 0 ? " " : "because"}});
            } else if (action < 7) {
                svc.api_conflicts("lead");
                svc.route_conflict(case_id, pick(reviewers));
            } else if (action < 8) {
                svc.api_export("lead");
            } else if (action < 9) {
                audits.push_back(svc.create_audit(0.5, rng.below(1000)).audit_id);
            } else {
                if (audits.empty()) throw review::WorkflowError("no audit yet");
                svc.record_audit_review(pick(audits), case_id, pick(reviewers), rng.below(2) == 1, "audit");
            }
            ++out.accepted;
        } catch (const review::WorkflowError&) {
            ++out.rejected;
            const auto after = *svc.get_case(case_id);
            if (after.state != before.state || after.verdicts.size() != before.verdicts.size() ||
                after.arbiter != before.arbiter) {
                out.violation = case_id + ": rejected action mutated state";
                return out;
            }
        } catch (const InvalidArgument&) {
            ++out.rejected;  // e.g. auditing with nothing finalized
        }
        for (const auto& id : cases)
            if (auto v = case_violation(*svc.get_case(id))) {
                out.violation = v;
                return out;
            }
        if (auto blind = svc.check_double_blind()) {
            out.violation = blind;
            return out;
        }
    }
    return out;
}

}  // namespace transec::testkit
