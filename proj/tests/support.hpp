#pragma once

// Helpers shared by the unit tests and the acceptance binary.

#include <cstdio>
#include <filesystem>
#include <random>
#include <sys/wait.h>
#include <string>
#include <vector>

#include "transec/corpus.hpp"
#include "transec/hash.hpp"
#include "transec/jsonl.hpp"

namespace transec::testkit {

inline std::filesystem::path source_dir() { return TRANSEC_SOURCE_DIR; }
inline std::filesystem::path cli_path() { return TRANSEC_CLI_PATH; }

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag = "t") {
        static std::uint64_t counter = 0;
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() /
                ("transec-" + tag + "-" + hex64(fnv1a64(std::to_string(rd()) + std::to_string(++counter))).substr(0, 12));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

struct CommandResult {
    int exit_code = -1;
    std::string output;  // stdout and stderr interleaved
};

/// Runs a shell command and captures its output.
inline CommandResult run_command(const std::string& cmd) {
    CommandResult r;
    FILE* pipe = popen((cmd + " 2>&1").c_str(), "r");
    if (!pipe) return r;
    char buf[4096];
    std::size_t n;
    while ((n = fread(buf, 1, sizeof buf, pipe)) > 0) r.output.append(buf, n);
    int status = pclose(pipe);
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

inline std::string quote(const std::filesystem::path& p) { return "'" + p.string() + "'"; }

/// Minimal valid sample with the given code.
inline CodeSample make_sample(const std::string& id, Language lang, Cwe cwe, SecurityStatus status,
                              const std::string& code) {
    CodeSample s;
    s.id = id;
    s.language = lang;
    s.cwe = cwe;
    s.security_status = status;
    s.code = code;
    s.patch_annotation.description = "input length checked before copy";
    s.patch_annotation.locations = {{1, 1}};
    s.token_count = count_tokens(code);
    return s;
}

}  // namespace transec::testkit
