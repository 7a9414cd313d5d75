#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "hash.hpp"
#include "jsonl.hpp"
#include "judge.hpp"
#include "translator.hpp"

namespace transec {

inline constexpr std::string_view kToolVersion = "0.3.0";

/// Run configuration (JSON). Relative paths resolve against the config file's directory.
struct RunConfig {
    std::filesystem::path base_dir;
    std::optional<std::filesystem::path> corpus;
    std::filesystem::path output_dir = "out";
    std::vector<ModelProfile> models;
    std::vector<LanguagePair> language_pairs = default_language_pairs();
    std::vector<std::string> judges;
    std::string arbiter;
    JudgeTemplateVariant judge_variant = JudgeTemplateVariant::Standard;
    std::optional<std::filesystem::path> exemplars;
    std::string embedder = "hash-384";
    std::string embedder_endpoint;
    std::string embedder_api_key_env;
    std::size_t embedder_dim = 384;
    std::optional<std::filesystem::path> knowledge_base;
    std::size_t rag_k = 3;
    double rag_threshold = 0.5;
    std::size_t rag_batch_size = 32;
    std::size_t concurrency = 4;
    std::map<std::string, std::uint64_t> seeds{{"assignment", 1}, {"audit", 1}, {"synthetic", 1}};
    std::optional<std::int64_t> fixed_clock;  // set when "clock" is "fixed"
    std::vector<std::string> reviewers;
    std::optional<std::filesystem::path> review_tokens;
    std::optional<std::filesystem::path> review_event_log;
    json raw;  // canonical form used for the config hash

    const ModelProfile& model(const std::string& id) const {
        for (const auto& m : models)
            if (m.model_id == id) return m;
        throw InvalidArgument("model '" + id + "' is not configured");
    }

    std::uint64_t seed(const std::string& name) const {
        auto it = seeds.find(name);
        return it == seeds.end() ? 0 : it->second;
    }

    RunOptions run_options() const {
        RunOptions o;
        if (fixed_clock) o.clock = transec::fixed_clock(*fixed_clock);
        return o;
    }

    /// Hash of the parsed config with keys sorted, so formatting changes do not alter it.
    std::string config_hash() const { return hex64(fnv1a64(raw.dump())); }
};

namespace detail {

inline std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
    std::filesystem::path path(p);
    return path.is_absolute() ? path : base / path;
}

inline void reject_secret_fields(const json& j, const std::string& where) {
    for (const char* k : {"api_key", "apikey", "token", "secret", "password", "authorization"})
        if (j.contains(k)) throw InvalidArgument(where + ": credentials must come from the environment (use api_key_env)");
}

}  // namespace detail

inline ModelProfile parse_model_profile(const json& j) {
    detail::reject_secret_fields(j, "model profile");
    ModelProfile p;
    p.model_id = j.at("model_id").get<std::string>();
    p.endpoint = j.value("endpoint", std::string{});
    p.api_key_env = j.value("api_key_env", std::string{});
    p.sampling.temperature = j.value("temperature", p.sampling.temperature);
    p.sampling.top_p = j.value("top_p", p.sampling.top_p);
    p.sampling.max_tokens = j.value("max_tokens", p.sampling.max_tokens);
    p.max_retries = j.value("max_retries", p.max_retries);
    p.backoff_base = std::chrono::milliseconds(j.value("backoff_base_ms", p.backoff_base.count()));
    p.backoff_cap = std::chrono::milliseconds(j.value("backoff_cap_ms", p.backoff_cap.count()));
    p.request_timeout = std::chrono::milliseconds(j.value("timeout_ms", p.request_timeout.count()));
    p.requests_per_minute = j.value("requests_per_minute", p.requests_per_minute);
    if (p.model_id.empty()) throw InvalidArgument("model profile with empty model_id");
    if (p.max_retries < 0) throw InvalidArgument("max_retries must be >= 0");
    return p;
}

inline LanguagePair parse_language_pair(const std::string& s) {
    auto arrow = s.find("->");
    if (arrow == std::string::npos || arrow == 0 || arrow + 2 >= s.size())
        throw InvalidArgument("language pair '" + s + "' must look like Source->Target");
    LanguagePair p{s.substr(0, arrow), s.substr(arrow + 2)};
    if (p.source != "Java" && p.source != "PHP" && p.source != "C/C++")
        throw InvalidArgument("language pair source must be Java, PHP or C/C++");
    return p;
}

/// Parses and validates; every referenced input path must exist.
inline RunConfig parse_run_config(const json& j, const std::filesystem::path& base_dir) {
    if (!j.is_object()) throw InvalidArgument("config must be a JSON object");
    detail::reject_secret_fields(j, "config");
    RunConfig c;
    c.base_dir = base_dir;
    c.raw = j;
    auto path_field = [&](const char* key) -> std::optional<std::filesystem::path> {
        if (!j.contains(key) || j[key].is_null()) return std::nullopt;
        auto p = detail::resolve(base_dir, j[key].get<std::string>());
        if (!std::filesystem::exists(p)) throw InvalidArgument(std::string(key) + " path does not exist: " + p.string());
        return p;
    };
    c.corpus = path_field("corpus");
    c.exemplars = path_field("exemplars");
    c.knowledge_base = path_field("knowledge_base");
    if (j.contains("output_dir")) c.output_dir = detail::resolve(base_dir, j["output_dir"].get<std::string>());
    else c.output_dir = base_dir / c.output_dir;
    if (j.contains("models"))
        for (const auto& m : j["models"]) c.models.push_back(parse_model_profile(m));
    std::set<std::string> ids;
    for (const auto& m : c.models)
        if (!ids.insert(m.model_id).second) throw InvalidArgument("duplicate model_id '" + m.model_id + "'");
    if (j.contains("language_pairs")) {
        c.language_pairs.clear();
        for (const auto& p : j["language_pairs"]) c.language_pairs.push_back(parse_language_pair(p.get<std::string>()));
    }
    c.judges = j.value("judges", std::vector<std::string>{});
    c.arbiter = j.value("arbiter", std::string{});
    for (const auto& id : c.judges) c.model(id);
    if (!c.arbiter.empty()) c.model(c.arbiter);
    auto variant = j.value("judge_variant", std::string("standard"));
    if (variant == "extended") c.judge_variant = JudgeTemplateVariant::Extended;
    else if (variant != "standard") throw InvalidArgument("judge_variant must be standard or extended");
    if (j.contains("embedder")) {
        const auto& e = j["embedder"];
        if (e.is_string()) {
            c.embedder = e.get<std::string>();
        } else {
            detail::reject_secret_fields(e, "embedder");
            c.embedder = e.at("model").get<std::string>();
            c.embedder_endpoint = e.value("endpoint", std::string{});
            c.embedder_api_key_env = e.value("api_key_env", std::string{});
            c.embedder_dim = e.value("dim", c.embedder_dim);
        }
    }
    if (j.contains("rag")) {
        const auto& r = j["rag"];
        c.rag_k = r.value("k", c.rag_k);
        c.rag_threshold = r.value("threshold", c.rag_threshold);
        c.rag_batch_size = r.value("batch_size", c.rag_batch_size);
    }
    c.concurrency = j.value("concurrency", c.concurrency);
    if (c.concurrency == 0) throw InvalidArgument("concurrency must be >= 1");
    if (j.contains("seeds"))
        for (const auto& [k, v] : j["seeds"].items()) c.seeds[k] = v.get<std::uint64_t>();
    auto clock = j.value("clock", std::string("wall"));
    if (clock == "fixed") c.fixed_clock = j.value("fixed_clock_ms", std::int64_t{0});
    else if (clock != "wall") throw InvalidArgument("clock must be wall or fixed");
    if (j.contains("review")) {
        const auto& r = j["review"];
        c.reviewers = r.value("reviewers", std::vector<std::string>{});
        if (r.contains("tokens")) {
            auto p = detail::resolve(base_dir, r["tokens"].get<std::string>());
            if (!std::filesystem::exists(p)) throw InvalidArgument("review tokens file does not exist: " + p.string());
            c.review_tokens = p;
        }
        if (r.contains("event_log")) c.review_event_log = detail::resolve(base_dir, r["event_log"].get<std::string>());
    }
    return c;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
    auto j = json::parse(read_file(path), nullptr, false);
    if (j.is_discarded()) throw InvalidArgument("config " + path.string() + " is not valid JSON");
    auto base = path.parent_path();
    return parse_run_config(j, base.empty() ? std::filesystem::path(".") : base);
}

/// Provenance header written as the first line of every JSONL output.
inline ordered_json meta_record(const RunConfig& c, const std::string& command) {
    ordered_json seeds = ordered_json::object();
    for (const auto& [k, v] : c.seeds) seeds[k] = v;
    ordered_json meta;
    meta["tool"] = "transec";
    meta["version"] = kToolVersion;
    meta["command"] = command;
    meta["config_hash"] = c.config_hash();
    meta["seeds"] = std::move(seeds);
    return ordered_json{{std::string(kMetaKey), std::move(meta)}};
}

/// The same provenance as '#'-prefixed lines for tabular outputs.
inline std::vector<std::string> meta_lines(const RunConfig& c, const std::string& command) {
    std::vector<std::string> out{"tool=transec", "version=" + std::string(kToolVersion), "command=" + command,
                                 "config_hash=" + c.config_hash()};
    std::string seeds = "seeds=";
    bool first = true;
    for (const auto& [k, v] : c.seeds) {
        seeds += (first ? "" : ",") + k + ":" + std::to_string(v);
        first = false;
    }
    out.push_back(seeds);
    return out;
}

}  // namespace transec
