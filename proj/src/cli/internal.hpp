#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "uniscale/cli/cli.hpp"

namespace uniscale::cli {

// ---- logging ---------------------------------------------------------------
// Plain leveled stderr logging, no timestamps: artifact bytes must not depend
// on when a command ran, and keeping the log stream time-free removes the
// temptation to ever fold it into an output.
enum class LogLevel { debug = 0, info = 1, warn = 2, error = 3 };
void set_log_level(const std::string& name);  // throws ConfigError on unknown name
void log_line(LogLevel level, const std::string& message);
inline void log_debug(const std::string& m) { log_line(LogLevel::debug, m); }
inline void log_info(const std::string& m) { log_line(LogLevel::info, m); }

// ---- files -----------------------------------------------------------------
// Whole-file read; throws MissingInputError when absent or unreadable.
std::string read_file_bytes(const std::string& path);
// Creates the directory (and parents) if needed; throws std::runtime_error on
// failure. Never touches existing contents.
void ensure_dir(const std::string& path);

// ---- run manifests ---------------------------------------------------------
// FNV-1a 64 over the file's bytes, rendered as 16 hex digits.
std::string file_hash_hex(const std::string& path);

struct ManifestFile {
    std::string path;  // as referenced on the command line / in out_dir
    std::string hash;  // file_hash_hex at write time
};

// Writes <out_dir>/run_manifest.json recording everything needed to reproduce
// the artifacts byte-for-byte: tool version, command, effective seed, config
// hash, and input/output content hashes. Paths are recorded as given.
void write_run_manifest(const std::string& out_dir, const std::string& command, uint64_t seed,
                        const std::string& config_path, const std::vector<ManifestFile>& inputs,
                        const std::vector<ManifestFile>& outputs);

// ---- shared command plumbing ----------------------------------------------
// Applies --threads / --log-level, loads and validates the config.
RunConfig setup(const CommonArgs& args);

// Maps exceptions to the exit-code contract, printing one machine-parseable
// "error: <category>: <detail>" line on stderr.
int exit_code_for(const std::exception_ptr& error);

template <typename Body>
int guarded(Body&& body) {
    try {
        body();
        return kExitOk;
    } catch (...) {
        return exit_code_for(std::current_exception());
    }
}

}  // namespace uniscale::cli
