#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "types.hpp"

namespace transec {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

/// Key of the optional provenance header line written by the CLI.
inline constexpr std::string_view kMetaKey = "_meta";

inline bool is_meta_record(const json& j) { return j.is_object() && j.contains(kMetaKey); }

/// Parses line-delimited JSON text. Blank lines and `_meta` headers are skipped.
/// `fn(line_number, record)` is called for every other line.
inline void for_each_jsonl(std::string_view text, const std::function<void(std::size_t, const json&)>& fn) {
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t end = text.find('\n', pos);
        if (end == std::string_view::npos) end = text.size();
        std::string_view line = text.substr(pos, end - pos);
        pos = end + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.find_first_not_of(" \t") == std::string_view::npos) continue;
        json record;
        try {
            record = json::parse(line);
        } catch (const json::parse_error& e) {
            throw SchemaError(line_no, std::string("malformed record: ") + e.what());
        }
        if (!record.is_object()) throw SchemaError(line_no, "record is not an object");
        if (is_meta_record(record)) continue;
        fn(line_no, record);
    }
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::filesystem::path& path, std::string_view data) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + path.string());
    out.write(data.data(), static_cast<std::streamsize>(data.size()));
}

inline void for_each_jsonl_file(const std::filesystem::path& path,
                                const std::function<void(std::size_t, const json&)>& fn) {
    for_each_jsonl(read_file(path), fn);
}

/// Typed field access with schema errors that name the line.
inline const json& require_field(const json& j, std::string_view key, std::size_t line) {
    auto it = j.find(key);
    if (it == j.end()) throw SchemaError(line, "missing field '" + std::string(key) + "'");
    return *it;
}

inline std::string require_string(const json& j, std::string_view key, std::size_t line) {
    const auto& v = require_field(j, key, line);
    if (!v.is_string()) throw SchemaError(line, "field '" + std::string(key) + "' must be a string");
    return v.get<std::string>();
}

inline std::optional<std::string> optional_string(const json& j, std::string_view key, std::size_t line) {
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) return std::nullopt;
    if (!it->is_string()) throw SchemaError(line, "field '" + std::string(key) + "' must be a string or null");
    return it->get<std::string>();
}

inline bool require_bool(const json& j, std::string_view key, std::size_t line) {
    const auto& v = require_field(j, key, line);
    if (!v.is_boolean()) throw SchemaError(line, "field '" + std::string(key) + "' must be a boolean");
    return v.get<bool>();
}

inline std::optional<bool> optional_bool(const json& j, std::string_view key, std::size_t line) {
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) return std::nullopt;
    if (!it->is_boolean()) throw SchemaError(line, "field '" + std::string(key) + "' must be a boolean or null");
    return it->get<bool>();
}

inline std::int64_t require_int(const json& j, std::string_view key, std::size_t line) {
    const auto& v = require_field(j, key, line);
    if (!v.is_number_integer()) throw SchemaError(line, "field '" + std::string(key) + "' must be an integer");
    return v.get<std::int64_t>();
}

}  // namespace transec
