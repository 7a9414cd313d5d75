#pragma once

// Independent reference implementations. Each one restates a definition in the
// most direct form available, without sharing code with the library.

#include <algorithm>
#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "transec/metrics.hpp"
#include "transec/rag.hpp"
#include "transec/random.hpp"

namespace transec::oracle {

/// Smallest observed value v such that at least p percent of the data is <= v.
inline std::size_t nearest_rank(const std::vector<std::size_t>& data, unsigned p) {
    std::vector<std::size_t> candidates = data;
    std::sort(candidates.begin(), candidates.end());
    for (auto v : candidates) {
        std::size_t at_most = 0;
        for (auto x : data) at_most += x <= v;
        if (100 * at_most >= static_cast<std::size_t>(p) * data.size()) return v;
    }
    return candidates.back();
}

inline std::string tier(std::size_t tokens) {
    if (tokens <= 949) return "simple";
    if (tokens <= 1600) return "medium";
    return "complex";
}

struct Counts {
    std::size_t fcr_num = 0, fcr_den = 0, vir_num = 0, vir_den = 0, vpr_num = 0, vpr_den = 0;
    bool operator==(const Counts&) const = default;
};

/// Counts straight from the rate definitions, one record at a time.
inline Counts brute_force(const std::vector<metrics::OutcomeRecord>& records) {
    Counts c;
    for (const auto& r : records) {
        if (r.is_functional.has_value()) {
            c.fcr_den += 1;
            c.fcr_num += r.is_functional.value() ? 1 : 0;
        }
        if (!r.translated_is_vulnerable.has_value()) continue;
        const bool vul = r.translated_is_vulnerable.value();
        if (r.source_status == SecurityStatus::Patched) {
            c.vir_den += 1;
            c.vir_num += vul ? 1 : 0;
        } else {
            c.vpr_den += 1;
            c.vpr_num += vul ? 1 : 0;
        }
    }
    return c;
}

/// Filter, sort, truncate over every entry.
inline std::vector<std::pair<std::size_t, double>> retrieve(const std::vector<rag::Vector>& vectors,
                                                            const rag::Vector& q, std::size_t k, double threshold) {
    std::vector<std::tuple<double, std::size_t>> all;
    for (std::size_t i = 0; i < vectors.size(); ++i) {
        double dot = 0;
        for (std::size_t d = 0; d < q.size(); ++d) dot += double(vectors[i][d]) * double(q[d]);
        if (dot > threshold) all.emplace_back(-dot, i);  // ascending on -dot then index
    }
    std::sort(all.begin(), all.end());
    std::vector<std::pair<std::size_t, double>> out;
    for (std::size_t i = 0; i < all.size() && i < k; ++i) out.emplace_back(std::get<1>(all[i]), -std::get<0>(all[i]));
    return out;
}

/// Random outcome records covering every optional combination and all slice keys.
inline std::vector<metrics::OutcomeRecord> random_outcomes(SeededRng& rng, std::size_t n) {
    static const char* models[] = {"m-a", "m-b", "m-c"};
    static const char* langs[] = {"C/C++", "Go", "Java", "PHP", "Python", "Rust"};
    static const char* cwes[] = {"CWE-20", "CWE-22", "CWE-79", "CWE-416", "CWE-787"};
    std::vector<metrics::OutcomeRecord> out;
    for (std::size_t i = 0; i < n; ++i) {
        metrics::OutcomeRecord r;
        r.case_id = "case-" + std::to_string(i);
        r.model = models[rng.below(3)];
        r.source_lang = langs[rng.below(6)];
        r.target_lang = langs[rng.below(6)];
        r.cwe = cwes[rng.below(5)];
        r.token_count = 500 + rng.below(1600);
        r.complexity = tier(*r.token_count);
        r.source_status = rng.below(2) ? SecurityStatus::Patched : SecurityStatus::Vulnerable;
        r.parseable = rng.below(10) != 0;
        auto tri = [&]() -> std::optional<bool> {
            auto x = rng.below(3);
            if (x == 2) return std::nullopt;
            return x == 1;
        };
        if (r.parseable) {
            r.translated_is_vulnerable = tri();
            r.is_functional = tri();
        } else {
            r.is_functional = false;
        }
        out.push_back(std::move(r));
    }
    return out;
}

}  // namespace transec::oracle
