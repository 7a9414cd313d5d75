#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "config.hpp"
#include "corpus.hpp"
#include "http_clients.hpp"
#include "judge.hpp"
#include "rag.hpp"
#include "scripted_client.hpp"
#include "translator.hpp"
#include "verdict.hpp"

namespace transec {

/// Patch-point text given to judges: the annotated spans followed by the description.
inline std::string patch_point_text(const CodeSample& s) {
    std::string out;
    if (!s.patch_annotation.locations.empty()) {
        out += "Lines ";
        for (std::size_t i = 0; i < s.patch_annotation.locations.size(); ++i) {
            const auto& l = s.patch_annotation.locations[i];
            if (i) out += ", ";
            out += std::to_string(l.start);
            if (l.end != l.start) out += "-" + std::to_string(l.end);
        }
        out += ": ";
    }
    return out + s.patch_annotation.description;
}

inline JudgeCase make_judge_case(const CodeSample& sample, const TranslationResult& result) {
    if (!result.translated_code) throw InvalidArgument("translation " + result.task.key() + " has no code to judge");
    return JudgeCase{result.task.key(), sample.code, *result.translated_code, result.task.target_lang,
                     patch_point_text(sample), sample.cwe};
}

/// Verdict for a translation that produced no code: context only, no judgment.
inline FinalVerdict unjudged_verdict(const TranslationResult& result, const CodeSample* sample) {
    FinalVerdict v;
    attach_context(v, result.task, sample);
    v.parse_status = result.parse_status;
    return v;
}

struct JudgeRun {
    std::vector<FinalVerdict> verdicts;
    std::vector<Exchange> exchanges;
    std::size_t needs_human = 0;
    std::size_t arbitrated = 0;
};

/// Adjudicates every parseable translation; the others get unjudged verdicts.
/// Cases the arbiter could not settle keep context but no judgment or provenance.
inline JudgeRun judge_results(const std::vector<TranslationResult>& results, const Corpus& corpus,
                              const ExemplarStore& exemplars, const std::vector<JudgeEndpoint>& judges,
                              const JudgeEndpoint& arbiter, const AdjudicationOptions& opts = {}) {
    JudgeRun run;
    for (const auto& r : results) {
        const CodeSample& s = corpus.at(r.task.sample_id);
        if (r.parse_status != ParseStatus::Ok) {
            run.verdicts.push_back(unjudged_verdict(r, &s));
            continue;
        }
        auto adj = adjudicate(make_judge_case(s, r), exemplars, judges, arbiter, opts);
        for (auto& e : adj.exchanges) run.exchanges.push_back(std::move(e));
        if (adj.arbiter_calls) ++run.arbitrated;
        if (adj.status == AdjudicationStatus::NeedsHuman) {
            ++run.needs_human;
            auto v = unjudged_verdict(r, &s);
            v.verdict_ids = adj.verdict.verdict_ids;
            run.verdicts.push_back(std::move(v));
            continue;
        }
        auto v = std::move(adj.verdict);
        attach_context(v, r.task, &s);
        v.parse_status = r.parse_status;
        run.verdicts.push_back(std::move(v));
    }
    return run;
}

/// Owns the model clients named by a RunConfig. "script:<file>" endpoints
/// load a ScriptedClient; everything else speaks the chat-completion protocol.
class ClientPool {
public:
    explicit ClientPool(const RunConfig& config) : config_(config) {}

    ModelClient& get(const std::string& model_id) {
        auto it = clients_.find(model_id);
        if (it != clients_.end()) return *it->second;
        const auto& profile = config_.model(model_id);
        std::unique_ptr<ModelClient> base;
        const std::string script = "script:";
        if (profile.endpoint.rfind(script, 0) == 0) {
            auto path = detail::resolve(config_.base_dir, profile.endpoint.substr(script.size()));
            base = ScriptedClient::from_file(path);
        } else if (!profile.endpoint.empty()) {
            base = std::make_unique<ChatCompletionClient>(profile);
        } else {
            throw InvalidArgument("model '" + model_id + "' has no endpoint");
        }
        std::unique_ptr<ModelClient> client = std::move(base);
        if (profile.requests_per_minute > 0) {
            auto& inner = *client;
            owned_.push_back(std::move(client));
            client = std::make_unique<RateLimitedClient>(inner, limiters_.bucket(model_id, profile.requests_per_minute));
        }
        auto& ref = *client;
        clients_[model_id] = std::move(client);
        return ref;
    }

    JudgeEndpoint endpoint(const std::string& model_id) { return JudgeEndpoint{&get(model_id), config_.model(model_id)}; }

private:
    const RunConfig& config_;
    RateLimiterRegistry limiters_;
    std::vector<std::unique_ptr<ModelClient>> owned_;
    std::map<std::string, std::unique_ptr<ModelClient>> clients_;
};

/// "hash-<dim>" selects the offline hashing embedder; other ids need an endpoint.
inline std::unique_ptr<rag::EmbeddingProvider> make_embedder(const RunConfig& config) {
    const std::string prefix = "hash-";
    if (config.embedder.rfind(prefix, 0) == 0) {
        std::size_t dim = 0;
        try {
            dim = std::stoul(config.embedder.substr(prefix.size()));
        } catch (const std::exception&) {
            throw InvalidArgument("embedder id '" + config.embedder + "' must look like hash-<dim>");
        }
        if (config.embedder != prefix + std::to_string(dim))
            throw InvalidArgument("embedder id '" + config.embedder + "' must look like hash-<dim>");
        return std::make_unique<rag::HashingEmbedder>(dim);
    }
    if (config.embedder_endpoint.empty())
        throw InvalidArgument("embedder '" + config.embedder + "' needs an endpoint");
    return std::make_unique<HttpEmbedder>(config.embedder, config.embedder_endpoint, config.embedder_dim,
                                          config.embedder_api_key_env);
}

}  // namespace transec
