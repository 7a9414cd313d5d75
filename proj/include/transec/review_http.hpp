#pragma once

#include <httplib.h>

#include <map>
#include <optional>
#include <string>

#include "review.hpp"

namespace transec::review {

enum class Role { Reviewer, Lead };

struct Principal {
    std::string id;
    Role role = Role::Reviewer;
};

/// Static bearer-token map. An empty map disables authentication: the caller's
/// identity is then taken from the request and every caller may act as lead.
struct TokenMap {
    std::map<std::string, Principal> tokens;

    bool enabled() const { return !tokens.empty(); }

    /// Lines of {"token": "...", "reviewer_id": "...", "role": "reviewer"|"lead"}.
    static TokenMap from_file(const std::filesystem::path& path) {
        TokenMap m;
        for_each_jsonl_file(path, [&](std::size_t line, const json& j) {
            Principal p;
            p.id = require_string(j, "reviewer_id", line);
            auto role = j.value("role", std::string("reviewer"));
            if (role == "lead")
                p.role = Role::Lead;
            else if (role != "reviewer")
                throw SchemaError(line, "role must be reviewer or lead");
            m.tokens[require_string(j, "token", line)] = p;
        });
        return m;
    }
};

/// Mounts the review API on an httplib server. The service must outlive the server.
class ReviewHttpApi {
public:
    ReviewHttpApi(ReviewService& service, TokenMap tokens = {}) : service_(service), tokens_(std::move(tokens)) {}

    void mount(httplib::Server& srv) {
        srv.Get("/assignments", [this](const httplib::Request& req, httplib::Response& res) {
            handle(res, [&] {
                auto who = caller(req, req.get_param_value("reviewer"));
                if (who.id.empty()) return reply(res, 400, error_body("reviewer query parameter required"));
                reply(res, 200, service_.api_assignments(who.id));
            });
        });
        srv.Post(R"(/cases/([^/]+)/verdicts)", [this](const httplib::Request& req, httplib::Response& res) {
            handle(res, [&] {
                auto body = parse_body(req);
                auto who = caller(req, body.value("reviewer_id", req.get_param_value("reviewer")));
                if (who.id.empty()) return reply(res, 400, error_body("reviewer_id required"));
                reply(res, 200, service_.api_submit_verdict(req.matches[1], who.id, body));
            });
        });
        srv.Get("/conflicts", [this](const httplib::Request& req, httplib::Response& res) {
            handle(res, [&] {
                auto who = lead(req);
                reply(res, 200, service_.api_conflicts(who.id));
            });
        });
        srv.Post(R"(/cases/([^/]+)/arbitration)", [this](const httplib::Request& req, httplib::Response& res) {
            handle(res, [&] {
                auto who = lead(req);
                auto body = parse_body(req);
                auto third = body.value("reviewer_id", std::string{});
                if (third.empty()) return reply(res, 400, error_body("reviewer_id required"));
                reply(res, 200, service_.api_route_conflict(req.matches[1], who.id, third));
            });
        });
        srv.Post("/audits", [this](const httplib::Request& req, httplib::Response& res) {
            handle(res, [&] {
                auto who = lead(req);
                auto body = parse_body(req);
                double fraction = body.value("fraction", 0.10);
                std::uint64_t seed = body.value("seed", std::uint64_t{0});
                reply(res, 201, service_.api_create_audit(who.id, fraction, seed));
            });
        });
        srv.Get(R"(/audits/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
            handle(res, [&] {
                auto who = lead(req);
                auto audit = service_.api_get_audit(who.id, req.matches[1]);
                if (!audit) return reply(res, 404, error_body("unknown audit"));
                reply(res, 200, *audit);
            });
        });
        srv.Post(R"(/audits/([^/]+)/reviews)", [this](const httplib::Request& req, httplib::Response& res) {
            handle(res, [&] {
                auto body = parse_body(req);
                auto who = caller(req, body.value("reviewer_id", std::string{}));
                if (who.id.empty()) return reply(res, 400, error_body("reviewer_id required"));
                if (!body.contains("isVul") || !body["isVul"].is_boolean() || !body.contains("case_id") ||
                    !body["case_id"].is_string())
                    return reply(res, 400, error_body("body needs string case_id and boolean isVul"));
                bool reopened = service_.record_audit_review(req.matches[1], body["case_id"].get<std::string>(), who.id,
                                                             body["isVul"].get<bool>(),
                                                             body.value("justification", std::string{}));
                reply(res, 200, ordered_json{{"case_id", body["case_id"]}, {"reopened", reopened}});
            });
        });
        srv.Get("/export", [this](const httplib::Request& req, httplib::Response& res) {
            handle(res, [&] {
                auto who = lead(req);
                reply(res, 200, service_.api_export(who.id));
            });
        });
    }

private:
    struct HttpError {
        int status;
        std::string message;
    };

    static ordered_json error_body(const std::string& msg) { return ordered_json{{"error", msg}}; }

    static void reply(httplib::Response& res, int status, const ordered_json& body) {
        res.status = status;
        res.set_content(body.dump(), "application/json");
    }

    template <class Fn>
    static void handle(httplib::Response& res, Fn&& fn) {
        try {
            fn();
        } catch (const HttpError& e) {
            reply(res, e.status, error_body(e.message));
        } catch (const WorkflowError& e) {
            reply(res, 409, error_body(e.what()));
        } catch (const InvalidArgument& e) {
            reply(res, 400, error_body(e.what()));
        } catch (const std::exception& e) {
            reply(res, 500, error_body(e.what()));
        }
    }

    static json parse_body(const httplib::Request& req) {
        if (req.body.empty()) return json::object();
        auto j = json::parse(req.body, nullptr, false);
        if (j.is_discarded() || !j.is_object()) throw HttpError{400, "request body must be a JSON object"};
        return j;
    }

    std::optional<Principal> authenticate(const httplib::Request& req) const {
        if (!tokens_.enabled()) return std::nullopt;
        auto header = req.get_header_value("Authorization");
        const std::string prefix = "Bearer ";
        if (header.rfind(prefix, 0) != 0) throw HttpError{401, "missing bearer token"};
        auto it = tokens_.tokens.find(header.substr(prefix.size()));
        if (it == tokens_.tokens.end()) throw HttpError{401, "unknown token"};
        return it->second;
    }

    /// Identity of a reviewer-scoped call. With tokens, a claimed id must match the token.
    Principal caller(const httplib::Request& req, const std::string& claimed) const {
        auto p = authenticate(req);
        if (!p) return Principal{claimed, Role::Lead};
        if (!claimed.empty() && claimed != p->id) throw HttpError{403, "token does not belong to " + claimed};
        return *p;
    }

    Principal lead(const httplib::Request& req) const {
        auto p = authenticate(req);
        if (!p) return Principal{"lead", Role::Lead};
        if (p->role != Role::Lead) throw HttpError{403, "lead role required"};
        return *p;
    }

    ReviewService& service_;
    TokenMap tokens_;
};

}  // namespace transec::review
