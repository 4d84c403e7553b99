#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "uniscale/es3/es3.hpp"
#include "uniscale/harness/metrics.hpp"
#include "uniscale/hhsft/hhsft.hpp"
#include "uniscale/nncore/adam.hpp"
#include "uniscale/synthlog/synthlog.hpp"

namespace uniscale::harness {

// ---- training -------------------------------------------------------------

struct TrainConfig {
    size_t steps = 300;
    size_t batch_size = 64;
    // Batches are split into fixed-size shards; each shard runs its own tape
    // and shard gradients always reduce in ascending shard order, so the
    // result is byte-identical for any thread count.
    size_t shard_size = 8;
    nncore::Adam::Config adam;
};

// Raised when a batch loss stops being finite; names the first bad step.
struct TrainDiverged : std::runtime_error {
    TrainDiverged(size_t step_, double loss_)
        : std::runtime_error("training diverged at step " + std::to_string(step_) +
                             ": batch loss " + std::to_string(loss_) + " is not finite"),
          step(step_),
          loss(loss_) {}
    size_t step;
    double loss;
};

struct TrainResult {
    hhsft::Model model;
    std::vector<double> losses;  // mean batch loss at the params before each step's update
};

// Flattens list-wise request records into per-item model samples, in record
// order then item order. Training consumes every entry: genuine exposures,
// appended unexposed items, and synthetic records alike.
std::vector<hhsft::SampleInput> samples_of(const std::vector<es3::RequestRecord>& records,
                                           const hhsft::ModelConfig& cfg);

// Deterministic minibatch Adam on the masked per-domain loss. Data order is
// fixed (sequential wrap-around over the samples), initialization is seeded,
// and gradient reduction follows shard order; reruns are byte-identical.
TrainResult train(const hhsft::ModelConfig& mcfg, uint64_t init_seed,
                  const std::vector<hhsft::SampleInput>& samples, const TrainConfig& tcfg);

// ---- evaluation -----------------------------------------------------------

struct EvalConfig {
    std::vector<size_t> hit_ks = {1, 3, 5};
};

struct EvalReport {
    MetricValue auc;
    GaucResult gauc;
    std::map<size_t, MetricValue> hitrate;
    size_t n_lists = 0;
    size_t n_samples = 0;
};

// Scores the evaluable slice of a dataset: genuine (non-synthetic) search
// requests, exposed entries only — their labels reflect what actually
// happened, while appended unexposed items carry fabricated negatives that
// would contaminate a ranking metric.
std::vector<ScoredList> score_records(const hhsft::Model& model,
                                      const std::vector<es3::RequestRecord>& records);

EvalReport evaluate(const hhsft::Model& model, const std::vector<es3::RequestRecord>& records,
                    const EvalConfig& cfg);

// ---- experiments ----------------------------------------------------------

struct ExperimentConfig {
    TrainConfig train;
    EvalConfig eval;
    size_t n_seeds = 10;
    uint64_t seed0 = 1;
};

// One grid cell aggregated over seeds. Deltas are paired per seed against the
// reference cell (search_only data, base model).
struct CellSummary {
    std::string data_mode;   // "search_only" | "es3"
    std::string model_mode;  // "base" | "dref" | "dapga" | "dref+dapga"
    std::vector<double> aucs;
    double mean = 0.0;
    double se = 0.0;  // standard error of the mean over seeds
    std::vector<double> deltas;
    double delta_mean = 0.0;
    double delta_se = 0.0;
};

struct AblationResult {
    std::vector<CellSummary> cells;  // 2 data modes x 4 model variants
};

// Trains every (data construction, model variant) cell for n_seeds seeds on
// the training log and scores held-out AUC on the evaluation log. Model
// variants share identical initialization per seed by construction.
AblationResult ablation_run(const synthlog::World& world, const synthlog::EventLog& train_log,
                            const synthlog::EventLog& eval_log,
                            const hhsft::ModelConfig& base_model,
                            const es3::DatasetConfig& es3_cfg, const ExperimentConfig& xcfg);

// One point on a width-scaling curve.
struct ScalePoint {
    std::string axis;       // "d_H" (token width) | "d_G" (global width)
    size_t ratio = 1;       // width multiplier
    std::string data_mode;  // "search_only" | "es3"
    size_t params = 0;      // parameter count of the scaled model
    std::vector<double> aucs;
    double mean_auc = 0.0;
    double se = 0.0;
    double delta_auc = 0.0;  // mean_auc minus the same curve's ratio-1 anchor
};

struct ScalingResult {
    std::vector<ScalePoint> points;
};

// Scales token width and global width separately by the given ratios, for
// both data constructions. Scaling d_G carries d_E with it (the expert width
// follows the fused representation); the ratio-1 anchor is computed once per
// data mode and shared by both axes.
ScalingResult scaling_run(const synthlog::World& world, const synthlog::EventLog& train_log,
                          const synthlog::EventLog& eval_log,
                          const hhsft::ModelConfig& base_model,
                          const es3::DatasetConfig& es3_cfg, const ExperimentConfig& xcfg,
                          const std::vector<size_t>& ratios = {1, 2, 4});

// Mean and standard error of the mean; se is 0 for fewer than two values.
std::pair<double, double> mean_se(const std::vector<double>& xs);

}  // namespace uniscale::harness
