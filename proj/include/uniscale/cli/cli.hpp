#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "uniscale/es3/es3.hpp"
#include "uniscale/harness/harness.hpp"
#include "uniscale/hhsft/hhsft.hpp"
#include "uniscale/synthlog/synthlog.hpp"

namespace uniscale::cli {

inline constexpr const char* kToolVersion = "uniscale 1.0.0";
inline constexpr const char* kSchemaVersion = "1";

// Exit codes form the stable scripting interface.
inline constexpr int kExitOk = 0;
inline constexpr int kExitInternal = 1;
inline constexpr int kExitConfig = 2;        // config schema violation
inline constexpr int kExitMissingInput = 3;  // referenced input path absent or unreadable
inline constexpr int kExitNumeric = 4;       // numeric abort (non-finite loss)

// Thrown on any config schema violation: bad JSON, wrong schema_version,
// unknown key, wrong type, or a value the modules reject.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Thrown when a referenced input file does not exist or cannot be read.
struct MissingInputError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Everything a run needs, parsed from one JSON document. Sections: world,
// sim, es3, model, optimizer, harness; plus a global seed and schema_version.
// The global seed is the only randomness knob — every stage derives its own
// substream from it, so one (config, seed) pair pins the whole pipeline.
struct RunConfig {
    std::string schema_version;
    uint64_t seed = 1;
    synthlog::WorldConfig world;
    synthlog::SimConfig sim;
    es3::DatasetConfig es3;  // .seed is derived, never read from JSON
    hhsft::ModelConfig model;
    nncore::Adam::Config optimizer;
    harness::TrainConfig train;  // .adam mirrors optimizer
    harness::EvalConfig eval;
    size_t n_seeds = 10;          // seeds per experiment cell
    std::vector<size_t> scaling_ratios = {1, 2, 4};
};

// Named substreams of the global seed, one per pipeline stage.
uint64_t derived_seed(uint64_t seed, std::string_view stage);

// Parses and validates a config document. `seed_override` replaces the
// config's global seed before derivation. Throws ConfigError on any schema
// violation and MissingInputError when the file itself is absent.
RunConfig load_config(const std::string& path, std::optional<uint64_t> seed_override);

// Flags shared by every subcommand.
struct CommonArgs {
    std::string config_path;
    std::string out_dir;
    std::optional<uint64_t> seed;  // --seed overrides the config's global seed
    int threads = 0;               // 0 = leave the kernel thread count alone
    std::string log_level = "info";
};

// Subcommand bodies. Each validates inputs, writes its artifacts plus a
// run_manifest.json into out_dir, and returns an exit code; errors print one
// "error: <category>: <detail>" line on stderr. Inputs are never modified,
// and re-running with identical inputs reproduces identical output bytes.
int cmd_gen_logs(const CommonArgs& args);
int cmd_build_samples(const CommonArgs& args, const std::string& logs_dir);
int cmd_train(const CommonArgs& args, const std::string& samples_dir);
int cmd_eval(const CommonArgs& args, const std::string& checkpoint_prefix,
             const std::string& samples_dir);
int cmd_ablate(const CommonArgs& args, const std::string& logs_dir);
int cmd_scaling(const CommonArgs& args, const std::string& logs_dir);

}  // namespace uniscale::cli
