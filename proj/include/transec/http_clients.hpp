#pragma once

#include <httplib.h>

#include <cstdlib>
#include <string>
#include <vector>

#include "jsonl.hpp"
#include "rag.hpp"
#include "translator.hpp"

namespace transec {

struct EndpointUrl {
    std::string base;  // scheme://host[:port]
    std::string path;  // starts with '/'
};

inline EndpointUrl parse_endpoint(const std::string& url) {
    auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw InvalidArgument("endpoint '" + url + "' lacks a scheme");
    auto scheme = url.substr(0, scheme_end);
    if (scheme != "http" && scheme != "https") throw InvalidArgument("unsupported endpoint scheme '" + scheme + "'");
#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
    if (scheme == "https") throw InvalidArgument("https endpoints need a TLS-enabled build");
#endif
    auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) return {url, "/"};
    return {url.substr(0, path_start), url.substr(path_start)};
}

/// Reads the bearer token from the environment variable named in config. An
/// empty variable name means the endpoint needs no credentials.
inline std::string api_key_from_env(const std::string& var) {
    if (var.empty()) return {};
    const char* v = std::getenv(var.c_str());
    if (!v || !*v) throw InvalidArgument("environment variable " + var + " is not set");
    return v;
}

namespace detail {

inline json post_json(const EndpointUrl& ep, const std::string& token, const json& body,
                      std::chrono::milliseconds timeout) {
    httplib::Client cli(ep.base);
    auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout);
    auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(timeout - secs);
    cli.set_connection_timeout(secs.count(), usecs.count());
    cli.set_read_timeout(secs.count(), usecs.count());
    cli.set_write_timeout(secs.count(), usecs.count());
    httplib::Headers headers;
    if (!token.empty()) headers.emplace("Authorization", "Bearer " + token);
    auto res = cli.Post(ep.path, headers, body.dump(), "application/json");
    if (!res) throw TransportError("request to " + ep.base + ep.path + " failed: " + httplib::to_string(res.error()));
    if (res->status == 429 || res->status >= 500)
        throw TransportError("endpoint returned HTTP " + std::to_string(res->status));
    if (res->status < 200 || res->status >= 300)
        throw Error("endpoint rejected request with HTTP " + std::to_string(res->status) + ": " + res->body);
    auto j = json::parse(res->body, nullptr, false);
    if (j.is_discarded()) throw TransportError("endpoint returned a non-JSON body");
    return j;
}

}  // namespace detail

/// Chat-completion wire adapter: the prompt is sent as a single user message.
class ChatCompletionClient : public ModelClient {
public:
    explicit ChatCompletionClient(ModelProfile profile)
        : profile_(std::move(profile)), ep_(parse_endpoint(profile_.endpoint)),
          token_(api_key_from_env(profile_.api_key_env)) {}

    static json request_body(const std::string& model, const std::string& prompt, const SamplingParams& p) {
        json body;
        body["model"] = model;
        body["messages"] = json::array({{{"role", "user"}, {"content", prompt}}});
        body["temperature"] = p.temperature;
        body["top_p"] = p.top_p;
        body["max_tokens"] = p.max_tokens;
        return body;
    }

    std::string send(const std::string& prompt, const SamplingParams& params) override {
        auto j = detail::post_json(ep_, token_, request_body(profile_.model_id, prompt, params), profile_.request_timeout);
        try {
            const auto& content = j.at("choices").at(0).at("message").at("content");
            return content.is_string() ? content.get<std::string>() : std::string{};
        } catch (const json::exception&) {
            throw TransportError("chat completion response lacks choices[0].message.content");
        }
    }

private:
    ModelProfile profile_;
    EndpointUrl ep_;
    std::string token_;
};

/// Embedding endpoint adapter: {"model", "input": [...]} -> {"data": [{"embedding": [...]}, ...]}.
class HttpEmbedder : public rag::EmbeddingProvider {
public:
    HttpEmbedder(std::string model, std::string endpoint, std::size_t dim, std::string api_key_env = {},
                 std::chrono::milliseconds timeout = std::chrono::milliseconds(60'000))
        : model_(std::move(model)), ep_(parse_endpoint(endpoint)), dim_(dim), token_(api_key_from_env(api_key_env)),
          timeout_(timeout) {}

    std::string id() const override { return model_; }
    std::size_t dim() const override { return dim_; }

    std::vector<rag::Vector> embed_batch(const std::vector<std::string>& texts) override {
        json body{{"model", model_}, {"input", texts}};
        auto j = detail::post_json(ep_, token_, body, timeout_);
        std::vector<rag::Vector> out;
        try {
            for (const auto& d : j.at("data")) out.push_back(d.at("embedding").get<rag::Vector>());
        } catch (const json::exception&) {
            throw rag::EmbeddingError("embedding response lacks data[].embedding");
        }
        return out;
    }

private:
    std::string model_;
    EndpointUrl ep_;
    std::size_t dim_;
    std::string token_;
    std::chrono::milliseconds timeout_;
};

}  // namespace transec
