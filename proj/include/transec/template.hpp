#pragma once

#include <map>
#include <string>
#include <string_view>

#include "types.hpp"

namespace transec {

using TemplateVars = std::map<std::string, std::string, std::less<>>;

namespace detail {
inline bool is_placeholder_char(char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_' || c == '.';
}
}  // namespace detail

/// Single-pass substitution. `{name}` is replaced by vars[name]; `{{` and `}}`
/// emit one literal brace; any other brace is copied as-is. Substituted values
/// are never rescanned, so code containing braces passes through verbatim.
/// Throws InvalidArgument for a `{name}` with no binding.
inline std::string render_template(std::string_view tpl, const TemplateVars& vars) {
    std::string out;
    out.reserve(tpl.size() + 256);
    std::size_t i = 0;
    while (i < tpl.size()) {
        char c = tpl[i];
        if (c == '{' && i + 1 < tpl.size() && tpl[i + 1] == '{') {
            out += '{';
            i += 2;
            continue;
        }
        if (c == '}' && i + 1 < tpl.size() && tpl[i + 1] == '}') {
            out += '}';
            i += 2;
            continue;
        }
        if (c == '{') {
            std::size_t j = i + 1;
            while (j < tpl.size() && detail::is_placeholder_char(tpl[j])) ++j;
            if (j > i + 1 && j < tpl.size() && tpl[j] == '}') {
                auto name = tpl.substr(i + 1, j - i - 1);
                auto it = vars.find(name);
                if (it == vars.end()) throw InvalidArgument("unbound template placeholder {" + std::string(name) + "}");
                out += it->second;
                i = j + 1;
                continue;
            }
        }
        out += c;
        ++i;
    }
    return out;
}

}  // namespace transec
