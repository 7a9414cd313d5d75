#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "corpus.hpp"
#include "hash.hpp"
#include "jsonl.hpp"
#include "prompt_templates.hpp"
#include "template.hpp"
#include "tokenizer.hpp"
#include "translator.hpp"

namespace transec::rag {

struct KnowledgeEntry {
    std::string id;
    std::optional<Cwe> cwe;
    std::string code;
    std::string vulnerability_type;
    std::string severity;
    std::string report;

    friend bool operator==(const KnowledgeEntry&, const KnowledgeEntry&) = default;
};

inline ordered_json to_json(const KnowledgeEntry& e) {
    ordered_json j;
    j["id"] = e.id;
    j["cwe"] = e.cwe ? ordered_json(to_string(*e.cwe)) : ordered_json(nullptr);
    j["code"] = e.code;
    j["vulnerability_type"] = e.vulnerability_type;
    j["severity"] = e.severity;
    j["report"] = e.report;
    return j;
}

inline KnowledgeEntry entry_from_json(const json& j, std::size_t line = 0) {
    KnowledgeEntry e;
    e.id = require_string(j, "id", line);
    if (auto c = optional_string(j, "cwe", line)) {
        e.cwe = parse_cwe(*c);
        if (!e.cwe) throw SchemaError(line, "uncovered cwe '" + *c + "'");
    }
    e.code = require_string(j, "code", line);
    e.vulnerability_type = require_string(j, "vulnerability_type", line);
    e.severity = require_string(j, "severity", line);
    e.report = require_string(j, "report", line);
    if (e.id.empty()) throw SchemaError(line, "empty knowledge entry id");
    if (e.report.find_first_not_of(" \t\r\n") == std::string::npos) throw SchemaError(line, "empty report");
    return e;
}

inline std::vector<KnowledgeEntry> parse_knowledge_base(std::string_view text) {
    std::vector<KnowledgeEntry> out;
    std::set<std::string> seen;
    for_each_jsonl(text, [&](std::size_t line, const json& j) {
        auto e = entry_from_json(j, line);
        if (!seen.insert(e.id).second) throw SchemaError(line, "duplicate knowledge entry '" + e.id + "'");
        out.push_back(std::move(e));
    });
    return out;
}

inline std::vector<KnowledgeEntry> load_knowledge_base(const std::filesystem::path& path) {
    return parse_knowledge_base(read_file(path));
}

// ---------------------------------------------------------------------------
// Embedding
// ---------------------------------------------------------------------------

using Vector = std::vector<float>;

class EmbeddingError : public Error {
public:
    using Error::Error;
};

class EmbeddingProvider {
public:
    virtual ~EmbeddingProvider() = default;
    virtual std::string id() const = 0;
    virtual std::size_t dim() const = 0;
    /// Raw (not necessarily normalized) vectors, one per input, each of dim().
    virtual std::vector<Vector> embed_batch(const std::vector<std::string>& texts) = 0;
};

inline double l2_norm(const Vector& v) {
    double s = 0;
    for (float x : v) s += static_cast<double>(x) * static_cast<double>(x);
    return std::sqrt(s);
}

/// Unit-length copy. A zero vector has no direction and is rejected.
inline Vector normalize(const Vector& v) {
    double n = l2_norm(v);
    if (!(n > 0) || !std::isfinite(n)) throw EmbeddingError("cannot normalize a zero or non-finite vector");
    Vector out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = static_cast<float>(static_cast<double>(v[i]) / n);
    return out;
}

inline double cosine(const Vector& u, const Vector& v) {
    if (u.size() != v.size())
        throw InvalidArgument("dimension mismatch: " + std::to_string(u.size()) + " vs " + std::to_string(v.size()));
    double s = 0;
    for (std::size_t i = 0; i < u.size(); ++i) s += static_cast<double>(u[i]) * static_cast<double>(v[i]);
    return s;
}

/// Deterministic offline embedder: every token contributes a pseudo-random
/// +-1 projection derived from its hash. Shared tokens give similar vectors.
class HashingEmbedder : public EmbeddingProvider {
public:
    explicit HashingEmbedder(std::size_t dim = 384, std::uint64_t seed = 0) : dim_(dim), seed_(seed) {
        if (dim == 0) throw InvalidArgument("embedding dimension must be positive");
    }

    std::string id() const override {
        return "hash-" + std::to_string(dim_) + (seed_ ? "-s" + std::to_string(seed_) : std::string{});
    }
    std::size_t dim() const override { return dim_; }

    std::vector<Vector> embed_batch(const std::vector<std::string>& texts) override {
        std::vector<Vector> out;
        out.reserve(texts.size());
        for (const auto& t : texts) out.push_back(embed_one(t));
        return out;
    }

private:
    Vector embed_one(std::string_view text) const {
        std::vector<double> acc(dim_, 0.0);
        for (auto tok : wordpunct_tokens(text)) {
            std::uint64_t state = fnv1a64(tok) ^ seed_;
            for (std::size_t d = 0; d < dim_; d += 64) {
                std::uint64_t bits = splitmix64(state);
                for (std::size_t b = 0; b < 64 && d + b < dim_; ++b) acc[d + b] += (bits >> b & 1) ? 1.0 : -1.0;
            }
        }
        Vector v(dim_);
        bool any = false;
        for (std::size_t i = 0; i < dim_; ++i) {
            v[i] = static_cast<float>(acc[i]);
            any = any || acc[i] != 0.0;
        }
        if (!any) v[0] = 1.0f;  // empty or perfectly cancelling input
        return v;
    }

    std::size_t dim_;
    std::uint64_t seed_;
};

// ---------------------------------------------------------------------------
// Index
// ---------------------------------------------------------------------------

struct KnowledgeIndex {
    std::string embedder_id;
    std::size_t dim = 0;
    std::vector<KnowledgeEntry> entries;
    std::vector<Vector> vectors;  // unit-norm, parallel to entries

    std::size_t size() const { return entries.size(); }
    friend bool operator==(const KnowledgeIndex&, const KnowledgeIndex&) = default;
};

/// Thrown when the embedder fails mid-build. `partial` holds every entry
/// embedded before the failing batch and is also written to the checkpoint path.
class IndexBuildError : public EmbeddingError {
public:
    IndexBuildError(std::string msg, KnowledgeIndex partial)
        : EmbeddingError(std::move(msg)), partial(std::move(partial)) {}
    KnowledgeIndex partial;
};

inline void save_index(const KnowledgeIndex& index, const std::filesystem::path& path);

struct BuildOptions {
    std::size_t batch_size = 32;
    std::optional<std::filesystem::path> checkpoint;
    /// A previous partial index; its entries are reused when they form a prefix of the input.
    const KnowledgeIndex* resume = nullptr;
};

inline KnowledgeIndex build_index(const std::vector<KnowledgeEntry>& entries, EmbeddingProvider& embedder,
                                  const BuildOptions& opts = {}) {
    if (opts.batch_size == 0) throw InvalidArgument("batch size must be >= 1");
    KnowledgeIndex idx;
    idx.embedder_id = embedder.id();
    idx.dim = embedder.dim();
    std::size_t start = 0;
    if (opts.resume) {
        const auto& r = *opts.resume;
        if (r.embedder_id != idx.embedder_id || r.dim != idx.dim)
            throw InvalidArgument("resume index was built with a different embedder");
        if (r.size() > entries.size() || !std::equal(r.entries.begin(), r.entries.end(), entries.begin()))
            throw InvalidArgument("resume index is not a prefix of the knowledge base");
        idx.entries = r.entries;
        idx.vectors = r.vectors;
        start = r.size();
    }
    for (std::size_t b = start; b < entries.size(); b += opts.batch_size) {
        const std::size_t e = std::min(entries.size(), b + opts.batch_size);
        std::vector<std::string> texts;
        for (std::size_t i = b; i < e; ++i) texts.push_back(entries[i].code);
        std::vector<Vector> raw;
        try {
            raw = embedder.embed_batch(texts);
            if (raw.size() != texts.size()) throw EmbeddingError("embedder returned wrong batch size");
            for (const auto& v : raw)
                if (v.size() != idx.dim) throw EmbeddingError("embedder returned wrong dimension");
        } catch (const std::exception& ex) {
            if (opts.checkpoint) save_index(idx, *opts.checkpoint);
            throw IndexBuildError("embedding failed at entry " + std::to_string(b) + ": " + ex.what(), idx);
        }
        for (std::size_t i = b; i < e; ++i) {
            idx.entries.push_back(entries[i]);
            idx.vectors.push_back(normalize(raw[i - b]));
        }
    }
    return idx;
}

inline Vector embed_query(const std::string& code, EmbeddingProvider& embedder, const KnowledgeIndex& index) {
    if (embedder.id() != index.embedder_id)
        throw InvalidArgument("embedder '" + embedder.id() + "' does not match index embedder '" + index.embedder_id +
                              "'");
    auto raw = embedder.embed_batch({code});
    if (raw.size() != 1 || raw[0].size() != index.dim) throw EmbeddingError("embedder returned wrong shape");
    return normalize(raw[0]);
}

struct Match {
    std::size_t index = 0;
    std::string entry_id;
    double similarity = 0;
};

/// Exact scan: similarity strictly above `threshold`, best first, ties in index order, at most k.
inline std::vector<Match> retrieve(const KnowledgeIndex& index, const Vector& query, std::size_t k = 3,
                                   double threshold = 0.5) {
    if (query.size() != index.dim) throw InvalidArgument("query dimension does not match index");
    std::vector<Match> hits;
    for (std::size_t i = 0; i < index.size(); ++i) {
        double s = cosine(index.vectors[i], query);
        if (s > threshold) hits.push_back({i, index.entries[i].id, s});
    }
    std::stable_sort(hits.begin(), hits.end(), [](const Match& a, const Match& b) { return a.similarity > b.similarity; });
    if (hits.size() > k) hits.resize(k);
    return hits;
}

// ---------------------------------------------------------------------------
// Persistence
//
// Little-endian binary layout:
//   bytes 0..7   magic "TSECIDX1"
//   u32          format version (1)
//   u32          dim
//   u32          entry count N
//   u32          embedder id length L, then L bytes of embedder id
//   u64          metadata length M
//   N x u64      byte offset of each entry's metadata line within the metadata block
//   N x dim f32  unit vectors, entry-major
//   M bytes      metadata block: one JSON object per line, in entry order
// ---------------------------------------------------------------------------

inline constexpr char kIndexMagic[8] = {'T', 'S', 'E', 'C', 'I', 'D', 'X', '1'};
inline constexpr std::uint32_t kIndexVersion = 1;

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>(v >> (8 * i) & 0xff));
}
inline void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>(v >> (8 * i) & 0xff));
}

class Reader {
public:
    explicit Reader(std::string_view data) : data_(data) {}
    std::string_view take(std::size_t n) {
        if (n > data_.size() - pos_) throw Error("index file truncated");
        auto s = data_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    std::uint64_t uint(int bytes) {
        auto s = take(static_cast<std::size_t>(bytes));
        std::uint64_t v = 0;
        for (int i = bytes - 1; i >= 0; --i) v = v << 8 | static_cast<unsigned char>(s[static_cast<std::size_t>(i)]);
        return v;
    }
    bool done() const { return pos_ == data_.size(); }

private:
    std::string_view data_;
    std::size_t pos_ = 0;
};

}  // namespace detail

inline std::string serialize_index(const KnowledgeIndex& index) {
    std::string meta;
    std::vector<std::uint64_t> offsets;
    for (const auto& e : index.entries) {
        offsets.push_back(meta.size());
        meta += to_json(e).dump() + "\n";
    }
    std::string out(kIndexMagic, sizeof kIndexMagic);
    detail::put_u32(out, kIndexVersion);
    detail::put_u32(out, static_cast<std::uint32_t>(index.dim));
    detail::put_u32(out, static_cast<std::uint32_t>(index.size()));
    detail::put_u32(out, static_cast<std::uint32_t>(index.embedder_id.size()));
    out += index.embedder_id;
    detail::put_u64(out, meta.size());
    for (auto o : offsets) detail::put_u64(out, o);
    for (const auto& v : index.vectors) {
        if (v.size() != index.dim) throw InvalidArgument("index vector has wrong dimension");
        for (float f : v) {
            std::uint32_t bits;
            std::memcpy(&bits, &f, sizeof bits);
            detail::put_u32(out, bits);
        }
    }
    out += meta;
    return out;
}

inline KnowledgeIndex deserialize_index(std::string_view data) {
    detail::Reader r(data);
    if (r.take(8) != std::string_view(kIndexMagic, 8)) throw Error("not a knowledge index (bad magic)");
    if (r.uint(4) != kIndexVersion) throw Error("unsupported knowledge index version");
    KnowledgeIndex idx;
    idx.dim = r.uint(4);
    const auto n = static_cast<std::size_t>(r.uint(4));
    idx.embedder_id = std::string(r.take(r.uint(4)));
    const auto meta_len = static_cast<std::size_t>(r.uint(8));
    std::vector<std::size_t> offsets(n);
    for (auto& o : offsets) o = static_cast<std::size_t>(r.uint(8));
    idx.vectors.assign(n, Vector(idx.dim));
    for (auto& v : idx.vectors)
        for (auto& f : v) {
            auto bits = static_cast<std::uint32_t>(r.uint(4));
            std::memcpy(&f, &bits, sizeof f);
        }
    auto meta = r.take(meta_len);
    if (!r.done()) throw Error("trailing bytes after knowledge index");
    for (std::size_t i = 0; i < n; ++i) {
        const auto end = i + 1 < n ? offsets[i + 1] : meta.size();
        if (offsets[i] > end || end > meta.size()) throw Error("corrupt entry offsets in knowledge index");
        auto line = meta.substr(offsets[i], end - offsets[i]);
        auto j = json::parse(line, nullptr, false);
        if (j.is_discarded()) throw Error("corrupt entry metadata in knowledge index");
        idx.entries.push_back(entry_from_json(j, i + 1));
    }
    return idx;
}

inline void save_index(const KnowledgeIndex& index, const std::filesystem::path& path) {
    write_file(path, serialize_index(index));
}

inline KnowledgeIndex load_index(const std::filesystem::path& path) { return deserialize_index(read_file(path)); }

// ---------------------------------------------------------------------------
// Prompt assembly
// ---------------------------------------------------------------------------

inline constexpr std::string_view kNoMatchesSentinel = "No similar vulnerability cases were found.";

/// The security-augmented template split at its repeating item block.
struct RagTemplateParts {
    std::string head;      // through the "Security Considerations" heading line
    std::string intro;     // the line introducing the enumerated items
    std::string item;      // one enumerated item, placeholders {i} and {result.*}
    std::string tail;      // output instruction, after the item list
};

inline RagTemplateParts split_rag_template(std::string_view tpl = kRagTemplate) {
    const std::string_view heading = "**Security Considerations:**\n";
    const std::string_view item_start = "{i}. ";
    const std::string_view ellipsis = "...\n";
    auto h = tpl.find(heading);
    auto i = tpl.find(item_start);
    auto e = tpl.find(ellipsis, i == std::string_view::npos ? 0 : i);
    if (h == std::string_view::npos || i == std::string_view::npos || e == std::string_view::npos || !(h < i && i < e))
        throw Error("security-augmented template does not have the expected item block");
    RagTemplateParts p;
    p.head = std::string(tpl.substr(0, h + heading.size()));
    p.intro = std::string(tpl.substr(h + heading.size(), i - h - heading.size()));
    p.item = std::string(tpl.substr(i, e - i));
    p.tail = std::string(tpl.substr(e + ellipsis.size()));
    return p;
}

/// One enumerated item per match; the template's "..." continuation line is not emitted.
/// With no matches the intro and items are replaced by the sentinel line.
inline std::string build_rag_prompt(const CodeSample& sample, std::string_view source_lang, std::string_view target_lang,
                                    const std::vector<const KnowledgeEntry*>& matches) {
    if (sample.code.empty()) throw InvalidArgument("sample '" + sample.id + "' has empty code");
    static const RagTemplateParts parts = split_rag_template();
    std::string body;
    if (matches.empty()) {
        body = std::string(kNoMatchesSentinel) + "\n";
    } else {
        body = parts.intro;
        for (std::size_t n = 0; n < matches.size(); ++n) {
            const auto& m = *matches[n];
            body += render_template(parts.item, {{"i", std::to_string(n + 1)},
                                                 {"result.vulnerability_type", m.vulnerability_type},
                                                 {"result.severity", m.severity},
                                                 {"result.report", m.report}});
        }
    }
    std::string head = render_template(parts.head, {{"source_lang", std::string(source_lang)},
                                                    {"target_lang", std::string(target_lang)},
                                                    {"source_code", sample.code}});
    return head + body + render_template(parts.tail, {});
}

inline std::vector<const KnowledgeEntry*> matched_entries(const KnowledgeIndex& index, const std::vector<Match>& hits) {
    std::vector<const KnowledgeEntry*> out;
    for (const auto& h : hits) out.push_back(&index.entries.at(h.index));
    return out;
}

struct RagSettings {
    std::size_t k = 3;
    double threshold = 0.5;
};

/// Retrieval plus augmented prompt for one sample; hit ids are returned through `hits`.
inline std::string rag_prompt_for(const CodeSample& sample, std::string_view target_lang, const KnowledgeIndex& index,
                                  EmbeddingProvider& embedder, std::vector<std::string>& hits,
                                  const RagSettings& settings = {}) {
    auto q = embed_query(sample.code, embedder, index);
    auto matches = retrieve(index, q, settings.k, settings.threshold);
    hits.clear();
    for (const auto& m : matches) hits.push_back(m.entry_id);
    return build_rag_prompt(sample, to_string(sample.language), target_lang, matched_entries(index, matches));
}

/// Runs RAG-augmented translation of each task, recording retrieval hits per task.
inline std::vector<TranslationResult> run_rag_batch(const std::vector<TranslationTask>& tasks, const Corpus& corpus,
                                                    const KnowledgeIndex& index, EmbeddingProvider& embedder,
                                                    ModelClient& client, const ModelProfile& profile,
                                                    std::size_t concurrency_limit, const RunOptions& opts = {},
                                                    const RagSettings& settings = {}) {
    // Retrieval runs up front on the calling thread: embedders need not be thread-safe.
    std::map<std::string, std::pair<std::string, std::vector<std::string>>> prepared;
    for (const auto& t : tasks) {
        std::vector<std::string> hits;
        auto prompt = rag_prompt_for(corpus.at(t.sample_id), t.target_lang, index, embedder, hits, settings);
        prepared[t.key()] = {std::move(prompt), std::move(hits)};
    }
    auto results = run_batch(
        tasks, [&](const TranslationTask& t) { return prepared.at(t.key()).first; }, client, profile,
        concurrency_limit, opts);
    for (auto& r : results) r.retrieval_hits = prepared.at(r.task.key()).second;
    return results;
}

}  // namespace transec::rag
