#pragma once

#include <chrono>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "hash.hpp"
#include "jsonl.hpp"
#include "translator.hpp"

namespace transec {

/// Test double for ModelClient. Responses are scripted per prompt hash (or
/// prompt substring), consumed in order; the last step of a script repeats.
/// Every request is logged with begin/end sequence numbers so tests can check
/// ordering and in-flight bounds.
class ScriptedClient : public ModelClient {
public:
    struct Step {
        bool fail = false;
        std::string text;  // response body, or error message when fail
        std::chrono::milliseconds delay{0};

        static Step respond(std::string body, std::chrono::milliseconds delay = {}) {
            return {false, std::move(body), delay};
        }
        static Step transport_error(std::string msg = "connection reset", std::chrono::milliseconds delay = {}) {
            return {true, std::move(msg), delay};
        }
    };

    struct LogEntry {
        std::string prompt_hash;
        std::uint64_t begin_seq = 0;
        std::uint64_t end_seq = 0;
        SamplingParams params;
    };

    void on_hash(const std::string& hash, std::vector<Step> steps) {
        std::lock_guard lock(mutex_);
        by_hash_[hash] = {steps.begin(), steps.end()};
    }
    void on_prompt(const std::string& prompt, std::vector<Step> steps) { on_hash(prompt_hash(prompt), std::move(steps)); }
    void on_contains(std::string needle, std::vector<Step> steps) {
        std::lock_guard lock(mutex_);
        by_substring_.push_back({std::move(needle), {steps.begin(), steps.end()}});
    }
    void on_default(std::vector<Step> steps) {
        std::lock_guard lock(mutex_);
        default_ = {steps.begin(), steps.end()};
    }
    /// Fallback consulted when no script matches.
    void set_responder(std::function<std::string(const std::string&)> fn) {
        std::lock_guard lock(mutex_);
        responder_ = std::move(fn);
    }
    void set_single_flight(bool v) { single_flight_ = v; }

    std::string send(const std::string& prompt, const SamplingParams& params) override {
        LogEntry entry;
        entry.prompt_hash = prompt_hash(prompt);
        entry.params = params;
        Step step;
        std::size_t index;
        {
            std::lock_guard lock(mutex_);
            entry.begin_seq = ++seq_;
            ++in_flight_;
            max_in_flight_ = std::max(max_in_flight_, in_flight_);
            index = log_.size();
            log_.push_back(entry);
            step = next_step(prompt);
        }
        if (step.delay.count() > 0) std::this_thread::sleep_for(step.delay);
        {
            std::lock_guard lock(mutex_);
            log_[index].end_seq = ++seq_;
            --in_flight_;
        }
        if (step.fail) throw TransportError(step.text);
        return step.text;
    }

    bool concurrent_safe() const override { return !single_flight_; }

    std::vector<LogEntry> log() const {
        std::lock_guard lock(mutex_);
        return log_;
    }
    std::size_t call_count() const {
        std::lock_guard lock(mutex_);
        return log_.size();
    }
    std::size_t max_in_flight() const {
        std::lock_guard lock(mutex_);
        return max_in_flight_;
    }

    /// Script file: one record per line,
    ///   {"prompt_hash": "...", "steps": [...]}  or  {"contains": "...", "steps": [...]}
    ///   or {"default": true, "steps": [...]}
    /// where a step is {"respond": "text"} or {"fail": "message"}, with optional "delay_ms".
    static std::unique_ptr<ScriptedClient> from_file(const std::filesystem::path& path) {
        auto client = std::make_unique<ScriptedClient>();
        for_each_jsonl_file(path, [&](std::size_t line, const json& j) {
            std::vector<Step> steps;
            for (const auto& s : require_field(j, "steps", line)) {
                Step st;
                st.delay = std::chrono::milliseconds(s.value("delay_ms", 0));
                if (s.contains("respond")) {
                    st.text = s["respond"].get<std::string>();
                } else if (s.contains("fail")) {
                    st.fail = true;
                    st.text = s["fail"].get<std::string>();
                } else {
                    throw SchemaError(line, "step needs 'respond' or 'fail'");
                }
                steps.push_back(std::move(st));
            }
            if (steps.empty()) throw SchemaError(line, "empty steps");
            if (j.contains("prompt_hash"))
                client->on_hash(j["prompt_hash"].get<std::string>(), std::move(steps));
            else if (j.contains("contains"))
                client->on_contains(j["contains"].get<std::string>(), std::move(steps));
            else if (j.value("default", false))
                client->on_default(std::move(steps));
            else
                throw SchemaError(line, "script record needs prompt_hash, contains or default");
        });
        return client;
    }

private:
    static Step pop(std::deque<Step>& q) {
        Step s = q.front();
        if (q.size() > 1) q.pop_front();
        return s;
    }

    Step next_step(const std::string& prompt) {
        if (auto it = by_hash_.find(prompt_hash(prompt)); it != by_hash_.end() && !it->second.empty())
            return pop(it->second);
        for (auto& [needle, q] : by_substring_)
            if (!q.empty() && prompt.find(needle) != std::string::npos) return pop(q);
        if (!default_.empty()) return pop(default_);
        if (responder_) return Step::respond(responder_(prompt));
        return Step::transport_error("no script for prompt " + prompt_hash(prompt));
    }

    mutable std::mutex mutex_;
    std::map<std::string, std::deque<Step>> by_hash_;
    std::vector<std::pair<std::string, std::deque<Step>>> by_substring_;
    std::deque<Step> default_;
    std::function<std::string(const std::string&)> responder_;
    bool single_flight_ = false;
    std::vector<LogEntry> log_;
    std::uint64_t seq_ = 0;
    std::size_t in_flight_ = 0;
    std::size_t max_in_flight_ = 0;
};

}  // namespace transec
