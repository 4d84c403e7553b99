#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "internal.hpp"
#include "uniscale/cli/cli.hpp"
#include "uniscale/es3/es3.hpp"
#include "uniscale/harness/harness.hpp"
#include "uniscale/hhsft/hhsft.hpp"
#include "uniscale/synthlog/synthlog.hpp"

namespace uniscale::cli {
namespace {

using nlohmann::json;

// Artifact names are part of the stable interface between subcommands.
constexpr const char* kWorldFile = "world.ndjson";
constexpr const char* kTrainEvents = "train_events.ndjson";
constexpr const char* kTrainCandidates = "train_candidates.ndjson";
constexpr const char* kEvalEvents = "eval_events.ndjson";
constexpr const char* kEvalCandidates = "eval_candidates.ndjson";
constexpr const char* kTrainSamples = "train_samples.ndjson";
constexpr const char* kTrainStats = "train_stats.json";
constexpr const char* kEvalSamples = "eval_samples.ndjson";
constexpr const char* kEvalStats = "eval_stats.json";
constexpr const char* kCheckpoint = "checkpoint";  // prefix: .bin + .json
constexpr const char* kLosses = "losses.csv";
constexpr const char* kEvalReport = "eval_report.json";
constexpr const char* kScores = "scores.csv";
constexpr const char* kAblation = "ablation.json";
constexpr const char* kScaling = "scaling.json";

std::string join(const std::string& dir, const char* name) { return dir + "/" + name; }

void require_input(const std::string& path) {
    if (!std::filesystem::exists(path))
        throw MissingInputError("required input \"" + path + "\" does not exist");
}

ManifestFile manifest_entry(const std::string& path) { return {path, file_hash_hex(path)}; }

std::vector<ManifestFile> manifest_entries(const std::vector<std::string>& paths) {
    std::vector<ManifestFile> out;
    for (const auto& p : paths) out.push_back(manifest_entry(p));
    return out;
}

void write_text(const std::string& path, const std::string& body) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write \"" + path + "\"");
    out << body;
}

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

json json_metric(const harness::MetricValue& m) {
    return m.defined ? json(m.value) : json(nullptr);
}

struct Logs {
    synthlog::World world;
    synthlog::EventLog train;
    synthlog::EventLog eval;
    std::vector<std::string> paths;  // for the manifest, in read order
};

Logs read_logs(const std::string& logs_dir) {
    Logs logs;
    logs.paths = {join(logs_dir, kWorldFile),      join(logs_dir, kTrainEvents),
                  join(logs_dir, kTrainCandidates), join(logs_dir, kEvalEvents),
                  join(logs_dir, kEvalCandidates)};
    for (const auto& p : logs.paths) require_input(p);
    logs.world = synthlog::read_world(logs.paths[0]);
    logs.train = synthlog::read_events(logs.paths[1], logs.paths[2]);
    logs.eval = synthlog::read_events(logs.paths[3], logs.paths[4]);
    return logs;
}

// The held-out evaluation set is always constructed search-only: attribution
// would rewrite the genuine search labels, and expanded/synthetic entries are
// skipped by the scorer anyway, so the fixed test set stays comparable across
// every training-data mode.
es3::DatasetConfig eval_dataset_config(const es3::DatasetConfig& base) {
    es3::DatasetConfig cfg = base;
    cfg.enable_unexposed_expansion = false;
    cfg.enable_attribution = false;
    cfg.enable_searchify = false;
    return cfg;
}

harness::ExperimentConfig experiment_config(const RunConfig& cfg) {
    harness::ExperimentConfig xcfg;
    xcfg.train = cfg.train;
    xcfg.eval = cfg.eval;
    xcfg.n_seeds = cfg.n_seeds;
    xcfg.seed0 = derived_seed(cfg.seed, "experiment");
    return xcfg;
}

}  // namespace

int cmd_gen_logs(const CommonArgs& args) {
    return guarded([&] {
        RunConfig cfg = setup(args);
        log_info("generating world and behavior logs into " + args.out_dir);
        const synthlog::World world = synthlog::generate_world(cfg.world, derived_seed(cfg.seed, "world"));
        const synthlog::EventLog train = synthlog::simulate(world, cfg.sim, derived_seed(cfg.seed, "sim.train"));
        const synthlog::EventLog eval = synthlog::simulate(world, cfg.sim, derived_seed(cfg.seed, "sim.eval"));

        synthlog::write_world(world, join(args.out_dir, kWorldFile));
        synthlog::write_events(train, join(args.out_dir, kTrainEvents), join(args.out_dir, kTrainCandidates));
        synthlog::write_events(eval, join(args.out_dir, kEvalEvents), join(args.out_dir, kEvalCandidates));
        log_info("train log: " + std::to_string(train.events.size()) + " events; eval log: " +
                 std::to_string(eval.events.size()) + " events");

        write_run_manifest(args.out_dir, "gen-logs", cfg.seed, args.config_path, {},
                           manifest_entries({join(args.out_dir, kWorldFile), join(args.out_dir, kTrainEvents),
                                             join(args.out_dir, kTrainCandidates), join(args.out_dir, kEvalEvents),
                                             join(args.out_dir, kEvalCandidates)}));
    });
}

int cmd_build_samples(const CommonArgs& args, const std::string& logs_dir) {
    return guarded([&] {
        RunConfig cfg = setup(args);
        const Logs logs = read_logs(logs_dir);

        log_info("building training samples (entire-space construction)");
        auto [train_records, train_stats] = es3::build_dataset(logs.world, logs.train, cfg.es3);
        log_info("building evaluation samples (search-only construction)");
        auto [eval_records, eval_stats] =
            es3::build_dataset(logs.world, logs.eval, eval_dataset_config(cfg.es3));

        es3::write_dataset(train_records, join(args.out_dir, kTrainSamples));
        es3::write_stats(train_stats, join(args.out_dir, kTrainStats));
        es3::write_dataset(eval_records, join(args.out_dir, kEvalSamples));
        es3::write_stats(eval_stats, join(args.out_dir, kEvalStats));
        log_info("train records: " + std::to_string(train_records.size()) + "; eval records: " +
                 std::to_string(eval_records.size()));

        write_run_manifest(args.out_dir, "build-samples", cfg.seed, args.config_path,
                           manifest_entries(logs.paths),
                           manifest_entries({join(args.out_dir, kTrainSamples), join(args.out_dir, kTrainStats),
                                             join(args.out_dir, kEvalSamples), join(args.out_dir, kEvalStats)}));
    });
}

int cmd_train(const CommonArgs& args, const std::string& samples_dir) {
    return guarded([&] {
        RunConfig cfg = setup(args);
        const std::string samples_path = join(samples_dir, kTrainSamples);
        require_input(samples_path);
        const std::vector<es3::RequestRecord> records = es3::read_dataset(samples_path);
        const std::vector<hhsft::SampleInput> samples = harness::samples_of(records, cfg.model);
        log_info("training on " + std::to_string(samples.size()) + " samples from " +
                 std::to_string(records.size()) + " records");

        harness::TrainResult result =
            harness::train(cfg.model, derived_seed(cfg.seed, "model.init"), samples, cfg.train);

        hhsft::save_model(result.model, join(args.out_dir, kCheckpoint));
        std::string csv = "step,loss\n";
        for (size_t i = 0; i < result.losses.size(); ++i)
            csv += std::to_string(i) + "," + format_double(result.losses[i]) + "\n";
        write_text(join(args.out_dir, kLosses), csv);
        log_info("final batch loss " + format_double(result.losses.back()));

        write_run_manifest(args.out_dir, "train", cfg.seed, args.config_path,
                           manifest_entries({samples_path}),
                           manifest_entries({join(args.out_dir, kCheckpoint) + ".bin",
                                             join(args.out_dir, kCheckpoint) + ".json",
                                             join(args.out_dir, kLosses)}));
    });
}

int cmd_eval(const CommonArgs& args, const std::string& checkpoint_prefix,
             const std::string& samples_dir) {
    return guarded([&] {
        RunConfig cfg = setup(args);
        const std::string samples_path = join(samples_dir, kEvalSamples);
        require_input(samples_path);
        require_input(checkpoint_prefix + ".bin");
        require_input(checkpoint_prefix + ".json");

        const hhsft::Model model = hhsft::load_model(cfg.model, checkpoint_prefix);
        const std::vector<es3::RequestRecord> records = es3::read_dataset(samples_path);
        const harness::EvalReport report = harness::evaluate(model, records, cfg.eval);
        log_info("scored " + std::to_string(report.n_samples) + " samples in " +
                 std::to_string(report.n_lists) + " lists");

        json doc;
        doc["auc"] = json_metric(report.auc);
        doc["gauc"] = {{"value", report.gauc.value.defined ? json(report.gauc.value.value) : json(nullptr)},
                       {"eligible_groups", report.gauc.eligible_groups},
                       {"excluded_groups", report.gauc.excluded_groups}};
        json hits = json::object();
        for (const auto& [k, v] : report.hitrate) hits[std::to_string(k)] = json_metric(v);
        doc["hitrate"] = hits;
        doc["n_lists"] = report.n_lists;
        doc["n_samples"] = report.n_samples;
        write_text(join(args.out_dir, kEvalReport), doc.dump(2) + "\n");

        // Per-item score dump over the same slice the metrics saw.
        std::string csv = "request_id,item_id,score\n";
        for (const auto& r : records) {
            if (r.synthetic || r.domain_id != static_cast<uint32_t>(synthlog::Domain::search)) continue;
            for (const auto& e : r.items) {
                if (e.exposure_flag != es3::ExposureFlag::exposed) continue;
                csv += std::to_string(r.request_id) + "," + std::to_string(e.item_id) + "," +
                       format_double(hhsft::predict_search(model, hhsft::sample_from_entry(r, e, model.config))) +
                       "\n";
            }
        }
        write_text(join(args.out_dir, kScores), csv);

        write_run_manifest(args.out_dir, "eval", cfg.seed, args.config_path,
                           manifest_entries({samples_path, checkpoint_prefix + ".bin",
                                             checkpoint_prefix + ".json"}),
                           manifest_entries({join(args.out_dir, kEvalReport), join(args.out_dir, kScores)}));
    });
}

int cmd_ablate(const CommonArgs& args, const std::string& logs_dir) {
    return guarded([&] {
        RunConfig cfg = setup(args);
        const Logs logs = read_logs(logs_dir);
        log_info("running the data-construction x architecture grid over " +
                 std::to_string(cfg.n_seeds) + " seeds");
        const harness::AblationResult result = harness::ablation_run(
            logs.world, logs.train, logs.eval, cfg.model, cfg.es3, experiment_config(cfg));

        json cells = json::array();
        for (const auto& c : result.cells) {
            cells.push_back({{"data_mode", c.data_mode},
                             {"model_mode", c.model_mode},
                             {"aucs", c.aucs},
                             {"mean_auc", c.mean},
                             {"se", c.se},
                             {"deltas", c.deltas},
                             {"delta_mean", c.delta_mean},
                             {"delta_se", c.delta_se}});
            log_info(c.data_mode + "/" + c.model_mode + ": mean AUC " + format_double(c.mean) +
                     " (se " + format_double(c.se) + ")");
        }
        json doc;
        doc["n_seeds"] = cfg.n_seeds;
        doc["cells"] = cells;
        write_text(join(args.out_dir, kAblation), doc.dump(2) + "\n");

        write_run_manifest(args.out_dir, "ablate", cfg.seed, args.config_path,
                           manifest_entries(logs.paths),
                           manifest_entries({join(args.out_dir, kAblation)}));
    });
}

int cmd_scaling(const CommonArgs& args, const std::string& logs_dir) {
    return guarded([&] {
        RunConfig cfg = setup(args);
        const Logs logs = read_logs(logs_dir);
        log_info("running width-scaling sweeps over " + std::to_string(cfg.n_seeds) + " seeds");
        const harness::ScalingResult result =
            harness::scaling_run(logs.world, logs.train, logs.eval, cfg.model, cfg.es3,
                                 experiment_config(cfg), cfg.scaling_ratios);

        json points = json::array();
        for (const auto& p : result.points) {
            points.push_back({{"axis", p.axis},
                              {"ratio", p.ratio},
                              {"data_mode", p.data_mode},
                              {"params", p.params},
                              {"aucs", p.aucs},
                              {"mean_auc", p.mean_auc},
                              {"se", p.se},
                              {"delta_auc", p.delta_auc}});
            log_info(p.axis + " x" + std::to_string(p.ratio) + " [" + p.data_mode + "]: mean AUC " +
                     format_double(p.mean_auc) + " (" + std::to_string(p.params) + " params)");
        }
        json doc;
        doc["ratios"] = cfg.scaling_ratios;
        doc["points"] = points;
        write_text(join(args.out_dir, kScaling), doc.dump(2) + "\n");

        write_run_manifest(args.out_dir, "scaling", cfg.seed, args.config_path,
                           manifest_entries(logs.paths),
                           manifest_entries({join(args.out_dir, kScaling)}));
    });
}

}  // namespace uniscale::cli
