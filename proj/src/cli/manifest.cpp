#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <json.hpp>

#include "internal.hpp"
#include "uniscale/es3/es3.hpp"
#include "uniscale/harness/harness.hpp"
#include "uniscale/nncore/kernels.hpp"

namespace uniscale::cli {
namespace {

LogLevel g_level = LogLevel::info;

const char* level_name(LogLevel level) {
    switch (level) {
        case LogLevel::debug: return "debug";
        case LogLevel::info: return "info";
        case LogLevel::warn: return "warn";
        case LogLevel::error: return "error";
    }
    return "?";
}

void print_error(const char* category, const std::string& detail) {
    std::cerr << "error: " << category << ": " << detail << "\n";
}

}  // namespace

void set_log_level(const std::string& name) {
    if (name == "debug")
        g_level = LogLevel::debug;
    else if (name == "info")
        g_level = LogLevel::info;
    else if (name == "warn")
        g_level = LogLevel::warn;
    else if (name == "error")
        g_level = LogLevel::error;
    else
        throw ConfigError("unknown log level \"" + name + "\" (debug|info|warn|error)");
}

void log_line(LogLevel level, const std::string& message) {
    if (static_cast<int>(level) < static_cast<int>(g_level)) return;
    std::cerr << "[" << level_name(level) << "] " << message << "\n";
}

std::string read_file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MissingInputError("cannot open \"" + path + "\"");
    std::ostringstream buf;
    buf << in.rdbuf();
    if (in.bad()) throw MissingInputError("cannot read \"" + path + "\"");
    return std::move(buf).str();
}

void ensure_dir(const std::string& path) {
    std::error_code ec;
    std::filesystem::create_directories(path, ec);
    if (ec) throw std::runtime_error("cannot create directory \"" + path + "\": " + ec.message());
}

std::string file_hash_hex(const std::string& path) {
    const uint64_t h = es3::fnv1a64(read_file_bytes(path));
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

void write_run_manifest(const std::string& out_dir, const std::string& command, uint64_t seed,
                        const std::string& config_path, const std::vector<ManifestFile>& inputs,
                        const std::vector<ManifestFile>& outputs) {
    nlohmann::json doc;
    doc["tool_version"] = kToolVersion;
    doc["schema_version"] = kSchemaVersion;
    doc["command"] = command;
    doc["seed"] = seed;
    doc["config"] = {{"path", config_path}, {"fnv1a64", file_hash_hex(config_path)}};
    auto file_list = [](const std::vector<ManifestFile>& files) {
        nlohmann::json arr = nlohmann::json::array();
        for (const auto& f : files) arr.push_back({{"path", f.path}, {"fnv1a64", f.hash}});
        return arr;
    };
    doc["inputs"] = file_list(inputs);
    doc["outputs"] = file_list(outputs);

    const std::string path = out_dir + "/run_manifest.json";
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write \"" + path + "\"");
    out << doc.dump(2) << "\n";
}

RunConfig setup(const CommonArgs& args) {
    set_log_level(args.log_level);
    if (args.threads < 0) throw ConfigError("--threads must be non-negative");
    if (args.threads > 0) nncore::set_threads(args.threads);
    RunConfig cfg = load_config(args.config_path, args.seed);
    if (args.out_dir.empty()) throw ConfigError("--out is required");
    ensure_dir(args.out_dir);
    return cfg;
}

int exit_code_for(const std::exception_ptr& error) {
    try {
        std::rethrow_exception(error);
    } catch (const ConfigError& e) {
        print_error("config_schema", e.what());
        return kExitConfig;
    } catch (const MissingInputError& e) {
        print_error("missing_input", e.what());
        return kExitMissingInput;
    } catch (const harness::TrainDiverged& e) {
        print_error("numeric_abort", e.what());
        return kExitNumeric;
    } catch (const std::exception& e) {
        print_error("internal", e.what());
        return kExitInternal;
    }
}

}  // namespace uniscale::cli
