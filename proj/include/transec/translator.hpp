#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "corpus.hpp"
#include "hash.hpp"
#include "jsonl.hpp"
#include "prompt_templates.hpp"
#include "template.hpp"
#include "types.hpp"

namespace transec {

// ---------------------------------------------------------------------------
// Model access
// ---------------------------------------------------------------------------

struct SamplingParams {
    double temperature = 0.0;
    int max_tokens = 8192;
    double top_p = 1.0;
    friend bool operator==(const SamplingParams&, const SamplingParams&) = default;
};

struct ModelProfile {
    std::string model_id;
    std::string endpoint;
    std::string api_key_env;  // name of the environment variable holding the bearer token
    SamplingParams sampling;
    std::chrono::milliseconds request_timeout{120'000};
    int max_retries = 3;
    std::chrono::milliseconds backoff_base{1000};
    std::chrono::milliseconds backoff_cap{60'000};
    double requests_per_minute = 0;  // 0 disables rate limiting
};

/// Raised by ModelClient::send for network-level failures (retryable).
class TransportError : public Error {
public:
    using Error::Error;
};

/// One request/response primitive; evaluations are zero-shot single-turn.
class ModelClient {
public:
    virtual ~ModelClient() = default;
    virtual std::string send(const std::string& prompt, const SamplingParams& params) = 0;
    /// False declares single-flight: batch runners then serialize requests.
    virtual bool concurrent_safe() const { return true; }
};

/// Wall or fixed clock in milliseconds since the epoch. Fixed clocks make
/// scripted reruns byte-identical.
using Clock = std::function<std::int64_t()>;

inline std::int64_t wall_clock_ms() {
    return std::chrono::duration_cast<std::chrono::milliseconds>(
               std::chrono::system_clock::now().time_since_epoch())
        .count();
}

inline Clock wall_clock() { return wall_clock_ms; }
inline Clock fixed_clock(std::int64_t value = 0) {
    return [value] { return value; };
}

using Sleeper = std::function<void(std::chrono::milliseconds)>;

inline Sleeper real_sleeper() {
    return [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
}

/// Token bucket: `burst` tokens, refilled at requests_per_minute / 60 per second.
class TokenBucket {
public:
    using Now = std::function<std::chrono::steady_clock::time_point()>;

    TokenBucket(double requests_per_minute, double burst = 1.0,
                Now now = [] { return std::chrono::steady_clock::now(); }, Sleeper sleep = real_sleeper())
        : rate_per_ms_(requests_per_minute / 60'000.0),
          burst_(std::max(1.0, burst)),
          tokens_(std::max(1.0, burst)),
          now_(std::move(now)),
          sleep_(std::move(sleep)),
          last_(now_()) {}

    /// Blocks until a token is available.
    void acquire() {
        if (rate_per_ms_ <= 0) return;
        for (;;) {
            std::chrono::milliseconds wait{};
            {
                std::lock_guard lock(mutex_);
                refill();
                if (tokens_ >= 1.0) {
                    tokens_ -= 1.0;
                    return;
                }
                wait = std::chrono::milliseconds(
                    static_cast<std::int64_t>(std::ceil((1.0 - tokens_) / rate_per_ms_)));
            }
            sleep_(std::max(wait, std::chrono::milliseconds(1)));
        }
    }

private:
    void refill() {
        auto t = now_();
        double elapsed = std::chrono::duration<double, std::milli>(t - last_).count();
        last_ = t;
        tokens_ = std::min(burst_, tokens_ + elapsed * rate_per_ms_);
    }

    double rate_per_ms_;
    double burst_;
    double tokens_;
    Now now_;
    Sleeper sleep_;
    std::chrono::steady_clock::time_point last_;
    std::mutex mutex_;
};

/// Shares one bucket per model_id across every client that talks to it.
class RateLimiterRegistry {
public:
    std::shared_ptr<TokenBucket> bucket(const std::string& model_id, double requests_per_minute) {
        std::lock_guard lock(mutex_);
        auto& slot = buckets_[model_id];
        if (!slot) slot = std::make_shared<TokenBucket>(requests_per_minute);
        return slot;
    }

private:
    std::mutex mutex_;
    std::map<std::string, std::shared_ptr<TokenBucket>> buckets_;
};

class RateLimitedClient : public ModelClient {
public:
    RateLimitedClient(ModelClient& inner, std::shared_ptr<TokenBucket> bucket)
        : inner_(inner), bucket_(std::move(bucket)) {}

    std::string send(const std::string& prompt, const SamplingParams& params) override {
        bucket_->acquire();
        return inner_.send(prompt, params);
    }
    bool concurrent_safe() const override { return inner_.concurrent_safe(); }

private:
    ModelClient& inner_;
    std::shared_ptr<TokenBucket> bucket_;
};

// ---------------------------------------------------------------------------
// Tasks and prompts
// ---------------------------------------------------------------------------

struct LanguagePair {
    std::string source;  // reporting group: "Java", "PHP", "C/C++"
    std::string target;
    std::string label() const { return source + "->" + target; }
    friend bool operator==(const LanguagePair&, const LanguagePair&) = default;
};

inline std::vector<LanguagePair> default_language_pairs() {
    return {{"Java", "Python"}, {"Java", "Go"}, {"PHP", "Python"}, {"PHP", "Go"}, {"C/C++", "Rust"}};
}

struct TranslationTask {
    std::string sample_id;
    std::string source_lang;  // reporting group of the sample
    std::string target_lang;
    std::string model_id;

    /// Identity used for resumable runs.
    std::string key() const { return sample_id + "|" + source_lang + "|" + target_lang + "|" + model_id; }
    friend bool operator==(const TranslationTask&, const TranslationTask&) = default;
};

/// One task per (sample, pair) where the sample's language group matches the pair source.
/// Ordered by sample then pair.
inline std::vector<TranslationTask> make_tasks(const Corpus& corpus, const std::vector<LanguagePair>& pairs,
                                               const std::string& model_id) {
    std::vector<TranslationTask> tasks;
    for (const auto& s : corpus.samples())
        for (const auto& p : pairs)
            if (language_group(s.language) == p.source)
                tasks.push_back({s.id, p.source, p.target, model_id});
    return tasks;
}

/// Fills the translation template. The prompt names the sample's own language
/// (e.g. "C" rather than the "C/C++" reporting group).
inline std::string build_translation_prompt(const CodeSample& sample, std::string_view source_lang,
                                            std::string_view target_lang) {
    if (sample.code.empty()) throw InvalidArgument("sample '" + sample.id + "' has empty code");
    return render_template(kTranslationTemplate, {{"source_lang", std::string(source_lang)},
                                                  {"target_lang", std::string(target_lang)},
                                                  {"source_code", sample.code}});
}

// ---------------------------------------------------------------------------
// Output extraction
// ---------------------------------------------------------------------------

enum class ParseStatus { Ok, MalformedJson, MissingField, Refusal, TransportFailure };

inline std::string_view to_string(ParseStatus s) {
    switch (s) {
        case ParseStatus::Ok: return "ok";
        case ParseStatus::MalformedJson: return "malformed_json";
        case ParseStatus::MissingField: return "missing_field";
        case ParseStatus::Refusal: return "refusal";
        case ParseStatus::TransportFailure: return "transport_failure";
    }
    return "?";
}

inline std::optional<ParseStatus> parse_parse_status(std::string_view s) {
    for (auto v : {ParseStatus::Ok, ParseStatus::MalformedJson, ParseStatus::MissingField, ParseStatus::Refusal,
                   ParseStatus::TransportFailure})
        if (to_string(v) == s) return v;
    return std::nullopt;
}

namespace detail {

/// End (exclusive) of the balanced {...} starting at `open`, string-aware; npos if unbalanced.
inline std::size_t balanced_object_end(std::string_view text, std::size_t open) {
    int depth = 0;
    bool in_string = false;
    bool escaped = false;
    for (std::size_t i = open; i < text.size(); ++i) {
        char c = text[i];
        if (in_string) {
            if (escaped)
                escaped = false;
            else if (c == '\\')
                escaped = true;
            else if (c == '"')
                in_string = false;
            continue;
        }
        if (c == '"')
            in_string = true;
        else if (c == '{')
            ++depth;
        else if (c == '}' && --depth == 0)
            return i + 1;
    }
    return std::string_view::npos;
}

/// Escapes raw control characters inside string literals, a common defect in
/// model output that is otherwise valid JSON.
inline std::string escape_raw_controls(std::string_view text) {
    std::string out;
    out.reserve(text.size());
    bool in_string = false;
    bool escaped = false;
    for (char c : text) {
        if (in_string) {
            if (escaped) {
                escaped = false;
            } else if (c == '\\') {
                escaped = true;
            } else if (c == '"') {
                in_string = false;
            } else if (c == '\n') {
                out += "\\n";
                continue;
            } else if (c == '\r') {
                out += "\\r";
                continue;
            } else if (c == '\t') {
                out += "\\t";
                continue;
            }
        } else if (c == '"') {
            in_string = true;
        }
        out += c;
    }
    return out;
}

}  // namespace detail

enum class JsonScan { Found, NoObject, Malformed };

/// Locates the outermost JSON object in free text: the first `{` (scanning left
/// to right) whose balanced span parses as an object. Prose and code fences
/// around it are ignored.
inline JsonScan find_json_object(std::string_view raw, json& out) {
    std::size_t pos = raw.find('{');
    if (pos == std::string_view::npos) return JsonScan::NoObject;
    while (pos != std::string_view::npos) {
        std::size_t end = detail::balanced_object_end(raw, pos);
        if (end != std::string_view::npos) {
            auto span = raw.substr(pos, end - pos);
            for (const auto& candidate : {std::string(span), detail::escape_raw_controls(span)}) {
                auto parsed = json::parse(candidate, nullptr, false);
                if (!parsed.is_discarded() && parsed.is_object()) {
                    out = std::move(parsed);
                    return JsonScan::Found;
                }
            }
        }
        pos = raw.find('{', pos + 1);
    }
    return JsonScan::Malformed;
}

struct Extraction {
    ParseStatus status = ParseStatus::Refusal;
    std::optional<std::string> code;
};

/// Reads "trans_code" (a string) from the outermost JSON object.
inline Extraction extract_translation(std::string_view raw_output) {
    json obj;
    switch (find_json_object(raw_output, obj)) {
        case JsonScan::NoObject: return {ParseStatus::Refusal, std::nullopt};
        case JsonScan::Malformed: return {ParseStatus::MalformedJson, std::nullopt};
        case JsonScan::Found: break;
    }
    auto it = obj.find("trans_code");
    if (it == obj.end() || !it->is_string()) return {ParseStatus::MissingField, std::nullopt};
    return {ParseStatus::Ok, it->get<std::string>()};
}

// ---------------------------------------------------------------------------
// Execution
// ---------------------------------------------------------------------------

struct AttemptRecord {
    std::int64_t started_at = 0;
    std::int64_t finished_at = 0;
    std::optional<std::string> error;  // transport error message
};

struct TranslationResult {
    TranslationTask task;
    std::string raw_output;
    std::optional<std::string> translated_code;  // present iff status == Ok
    ParseStatus parse_status = ParseStatus::Refusal;
    int attempt_count = 0;
    std::vector<AttemptRecord> attempts;
    std::string prompt_hash;
    std::int64_t started_at = 0;
    std::int64_t finished_at = 0;
    /// Retrieval hits recorded by RAG-augmented runs (knowledge entry ids).
    std::vector<std::string> retrieval_hits;
};

struct RunOptions {
    Clock clock = wall_clock();
    Sleeper sleep = real_sleeper();
};

inline std::chrono::milliseconds backoff_delay(const ModelProfile& p, int failed_attempts) {
    auto d = p.backoff_base.count();
    for (int i = 1; i < failed_attempts && d < p.backoff_cap.count(); ++i) d *= 2;
    return std::chrono::milliseconds(std::min<std::int64_t>(d, p.backoff_cap.count()));
}

/// Sends `prompt` with up to 1 + max_retries attempts on transport errors,
/// exponential backoff between attempts. Never throws for model-side failures.
inline TranslationResult run_translation(const TranslationTask& task, const std::string& prompt,
                                         ModelClient& client, const ModelProfile& profile,
                                         const RunOptions& opts = {}) {
    TranslationResult r;
    r.task = task;
    r.prompt_hash = prompt_hash(prompt);
    r.started_at = opts.clock();
    const int max_attempts = 1 + std::max(0, profile.max_retries);
    for (int attempt = 1; attempt <= max_attempts; ++attempt) {
        AttemptRecord rec;
        rec.started_at = opts.clock();
        try {
            r.raw_output = client.send(prompt, profile.sampling);
            rec.finished_at = opts.clock();
            r.attempts.push_back(rec);
            r.attempt_count = attempt;
            auto ex = extract_translation(r.raw_output);
            r.parse_status = ex.status;
            r.translated_code = std::move(ex.code);
            r.finished_at = opts.clock();
            return r;
        } catch (const TransportError& e) {
            rec.finished_at = opts.clock();
            rec.error = e.what();
            r.attempts.push_back(rec);
            r.attempt_count = attempt;
            if (attempt < max_attempts) opts.sleep(backoff_delay(profile, attempt));
        }
    }
    r.parse_status = ParseStatus::TransportFailure;
    r.raw_output.clear();
    r.finished_at = opts.clock();
    return r;
}

inline TranslationResult run_translation(const TranslationTask& task, const CodeSample& sample,
                                         ModelClient& client, const ModelProfile& profile,
                                         const RunOptions& opts = {}) {
    return run_translation(task, build_translation_prompt(sample, to_string(sample.language), task.target_lang),
                           client, profile, opts);
}

/// Runs `jobs` on at most `limit` threads. Results keep input order.
template <typename Result>
std::vector<Result> run_bounded(std::size_t count, std::size_t limit, const std::function<Result(std::size_t)>& job) {
    if (limit == 0) throw InvalidArgument("concurrency limit must be >= 1");
    std::vector<Result> results(count);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < count; i = next++) results[i] = job(i);
    };
    const std::size_t threads = std::min(limit, count);
    if (threads <= 1) {
        worker();
        return results;
    }
    std::vector<std::jthread> pool;
    pool.reserve(threads);
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    pool.clear();
    return results;
}

/// Bounded-parallel translation. `prompt_for(task)` builds each prompt. A
/// single-flight client forces sequential execution.
inline std::vector<TranslationResult> run_batch(const std::vector<TranslationTask>& tasks,
                                                const std::function<std::string(const TranslationTask&)>& prompt_for,
                                                ModelClient& client, const ModelProfile& profile,
                                                std::size_t concurrency_limit, const RunOptions& opts = {}) {
    if (concurrency_limit == 0) throw InvalidArgument("concurrency limit must be >= 1");
    std::size_t limit = client.concurrent_safe() ? concurrency_limit : 1;
    return run_bounded<TranslationResult>(tasks.size(), limit, [&](std::size_t i) {
        TranslationResult r;
        try {
            r = run_translation(tasks[i], prompt_for(tasks[i]), client, profile, opts);
        } catch (const std::exception& e) {
            // prompt construction or client bug; the batch continues
            r.task = tasks[i];
            r.parse_status = ParseStatus::TransportFailure;
            r.attempts.push_back({opts.clock(), opts.clock(), std::string(e.what())});
        }
        return r;
    });
}

inline std::vector<TranslationResult> run_batch(const std::vector<TranslationTask>& tasks, const Corpus& corpus,
                                                ModelClient& client, const ModelProfile& profile,
                                                std::size_t concurrency_limit, const RunOptions& opts = {}) {
    return run_batch(
        tasks,
        [&](const TranslationTask& t) {
            const auto& s = corpus.at(t.sample_id);
            return build_translation_prompt(s, to_string(s.language), t.target_lang);
        },
        client, profile, concurrency_limit, opts);
}

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------

inline ordered_json to_json(const TranslationResult& r) {
    ordered_json j;
    j["sample_id"] = r.task.sample_id;
    j["source_lang"] = r.task.source_lang;
    j["target_lang"] = r.task.target_lang;
    j["model_id"] = r.task.model_id;
    j["raw_output"] = r.raw_output;
    j["parse_status"] = to_string(r.parse_status);
    j["translated_code"] = r.translated_code ? ordered_json(*r.translated_code) : ordered_json(nullptr);
    j["attempt_count"] = r.attempt_count;
    ordered_json attempts = ordered_json::array();
    for (const auto& a : r.attempts) {
        ordered_json aj;
        aj["started_at"] = a.started_at;
        aj["finished_at"] = a.finished_at;
        aj["error"] = a.error ? ordered_json(*a.error) : ordered_json(nullptr);
        attempts.push_back(std::move(aj));
    }
    j["attempts"] = std::move(attempts);
    j["prompt_hash"] = r.prompt_hash;
    j["started_at"] = r.started_at;
    j["finished_at"] = r.finished_at;
    if (!r.retrieval_hits.empty()) j["retrieval_hits"] = r.retrieval_hits;
    return j;
}

inline TranslationResult translation_result_from_json(const json& j, std::size_t line = 0) {
    TranslationResult r;
    r.task.sample_id = require_string(j, "sample_id", line);
    r.task.source_lang = require_string(j, "source_lang", line);
    r.task.target_lang = require_string(j, "target_lang", line);
    r.task.model_id = require_string(j, "model_id", line);
    r.raw_output = require_string(j, "raw_output", line);
    auto st = parse_parse_status(require_string(j, "parse_status", line));
    if (!st) throw SchemaError(line, "unknown parse_status");
    r.parse_status = *st;
    r.translated_code = optional_string(j, "translated_code", line);
    if (r.translated_code.has_value() != (r.parse_status == ParseStatus::Ok))
        throw SchemaError(line, "translated_code must be present iff parse_status is ok");
    r.attempt_count = static_cast<int>(require_int(j, "attempt_count", line));
    if (auto it = j.find("attempts"); it != j.end())
        for (const auto& a : *it)
            r.attempts.push_back({a.value("started_at", std::int64_t{0}), a.value("finished_at", std::int64_t{0}),
                                  a.contains("error") && a["error"].is_string()
                                      ? std::optional<std::string>(a["error"].get<std::string>())
                                      : std::nullopt});
    r.prompt_hash = j.value("prompt_hash", std::string{});
    r.started_at = j.value("started_at", std::int64_t{0});
    r.finished_at = j.value("finished_at", std::int64_t{0});
    if (auto it = j.find("retrieval_hits"); it != j.end()) r.retrieval_hits = it->get<std::vector<std::string>>();
    return r;
}

inline std::vector<TranslationResult> load_translation_results(const std::filesystem::path& path) {
    std::vector<TranslationResult> out;
    for_each_jsonl_file(path, [&](std::size_t line, const json& j) {
        out.push_back(translation_result_from_json(j, line));
    });
    return out;
}

}  // namespace transec
