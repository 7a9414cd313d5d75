#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace transec {

/// Base class for every error the library raises.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A record or file violates its schema. `line` is 1-based, 0 when unknown.
class SchemaError : public Error {
public:
    SchemaError(std::size_t line, const std::string& what)
        : Error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// A precondition of an operation does not hold.
class InvalidArgument : public Error {
public:
    using Error::Error;
};

enum class Language { Java, PHP, C, Cpp };

inline constexpr std::array<Language, 4> kSourceLanguages{Language::Java, Language::PHP, Language::C,
                                                          Language::Cpp};

inline std::string_view to_string(Language l) {
    switch (l) {
        case Language::Java: return "Java";
        case Language::PHP: return "PHP";
        case Language::C: return "C";
        case Language::Cpp: return "C++";
    }
    return "?";
}

inline std::optional<Language> parse_language(std::string_view s) {
    for (auto l : kSourceLanguages)
        if (to_string(l) == s) return l;
    return std::nullopt;
}

/// Reporting group: C and C++ are reported together.
inline std::string_view language_group(Language l) {
    switch (l) {
        case Language::Java: return "Java";
        case Language::PHP: return "PHP";
        case Language::C:
        case Language::Cpp: return "C/C++";
    }
    return "?";
}

/// The nine covered weakness identifiers, stored as the bare CWE number.
enum class Cwe : int {
    InputValidation = 20,
    PathTraversal = 22,
    Xss = 79,
    SqlInjection = 89,
    CodeInjection = 94,
    InfoExposure = 200,
    UseAfterFree = 416,
    OutOfBoundsRead = 125,
    OutOfBoundsWrite = 787,
};

inline constexpr std::array<Cwe, 9> kCoveredCwes{Cwe::InputValidation, Cwe::PathTraversal, Cwe::Xss,
                                                 Cwe::SqlInjection,    Cwe::CodeInjection, Cwe::InfoExposure,
                                                 Cwe::UseAfterFree,    Cwe::OutOfBoundsWrite,
                                                 Cwe::OutOfBoundsRead};

inline int cwe_number(Cwe c) { return static_cast<int>(c); }

inline std::string to_string(Cwe c) { return "CWE-" + std::to_string(cwe_number(c)); }

inline std::optional<Cwe> cwe_from_number(int n) {
    for (auto c : kCoveredCwes)
        if (cwe_number(c) == n) return c;
    return std::nullopt;
}

/// Accepts "CWE-79" or "79".
inline std::optional<Cwe> parse_cwe(std::string_view s) {
    if (s.starts_with("CWE-")) s.remove_prefix(4);
    if (s.empty() || s.size() > 6) return std::nullopt;
    int n = 0;
    for (char ch : s) {
        if (ch < '0' || ch > '9') return std::nullopt;
        n = n * 10 + (ch - '0');
    }
    return cwe_from_number(n);
}

enum class SecurityStatus { Patched, Vulnerable };

inline std::string_view to_string(SecurityStatus s) {
    return s == SecurityStatus::Patched ? "patched" : "vulnerable";
}

inline std::optional<SecurityStatus> parse_security_status(std::string_view s) {
    if (s == "patched") return SecurityStatus::Patched;
    if (s == "vulnerable") return SecurityStatus::Vulnerable;
    return std::nullopt;
}

enum class ComplexityTier { Simple, Medium, Complex };

inline std::string_view to_string(ComplexityTier t) {
    switch (t) {
        case ComplexityTier::Simple: return "simple";
        case ComplexityTier::Medium: return "medium";
        case ComplexityTier::Complex: return "complex";
    }
    return "?";
}

}  // namespace transec
