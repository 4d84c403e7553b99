#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "uniscale/harness/harness.hpp"

namespace uniscale::harness {

namespace {

es3::DatasetConfig search_only_config(const es3::DatasetConfig& like) {
    es3::DatasetConfig cfg = like;
    cfg.enable_unexposed_expansion = false;
    cfg.enable_attribution = false;
    cfg.enable_searchify = false;
    return cfg;
}

// Training data and held-out evaluation slice for one data construction.
struct PreparedData {
    std::vector<hhsft::SampleInput> samples;
    std::vector<es3::RequestRecord> eval_records;
};

PreparedData prepare(const synthlog::World& world, const synthlog::EventLog& train_log,
                     const synthlog::EventLog& eval_log, const hhsft::ModelConfig& blocks_like,
                     const es3::DatasetConfig& data_cfg) {
    PreparedData out;
    out.samples = samples_of(es3::build_dataset(world, train_log, data_cfg).first, blocks_like);
    // Evaluation always scores the genuine search slice, independent of how
    // the training set was constructed.
    out.eval_records =
        es3::build_dataset(world, eval_log, search_only_config(data_cfg)).first;
    return out;
}

double cell_auc(const hhsft::ModelConfig& mcfg, uint64_t seed,
                const std::vector<hhsft::SampleInput>& samples,
                const std::vector<es3::RequestRecord>& eval_records,
                const ExperimentConfig& xcfg) {
    const TrainResult tr = train(mcfg, seed, samples, xcfg.train);
    const EvalReport rep = evaluate(tr.model, eval_records, xcfg.eval);
    if (!rep.auc.defined)
        throw std::runtime_error("experiment: held-out AUC is undefined (single-class eval slice)");
    return rep.auc.value;
}

}  // namespace

std::pair<double, double> mean_se(const std::vector<double>& xs) {
    if (xs.empty()) return {0.0, 0.0};
    double mean = 0.0;
    for (double x : xs) mean += x;
    mean /= static_cast<double>(xs.size());
    if (xs.size() < 2) return {mean, 0.0};
    double var = 0.0;
    for (double x : xs) var += (x - mean) * (x - mean);
    var /= static_cast<double>(xs.size() - 1);
    return {mean, std::sqrt(var / static_cast<double>(xs.size()))};
}

AblationResult ablation_run(const synthlog::World& world, const synthlog::EventLog& train_log,
                            const synthlog::EventLog& eval_log,
                            const hhsft::ModelConfig& base_model,
                            const es3::DatasetConfig& es3_cfg, const ExperimentConfig& xcfg) {
    hhsft::validate(base_model);
    if (xcfg.n_seeds == 0) throw std::invalid_argument("ablation_run: n_seeds must be positive");

    const PreparedData search_only =
        prepare(world, train_log, eval_log, base_model, search_only_config(es3_cfg));
    const PreparedData es3_data = prepare(world, train_log, eval_log, base_model, es3_cfg);

    struct Variant {
        const char* name;
        bool dref, dapga;
    };
    const Variant variants[] = {
        {"base", false, false},
        {"dref", true, false},
        {"dapga", false, true},
        {"dref+dapga", true, true},
    };

    AblationResult result;
    std::vector<double> reference;  // (search_only, base) AUC per seed
    for (const char* data_mode : {"search_only", "es3"}) {
        const PreparedData& data =
            std::string(data_mode) == "search_only" ? search_only : es3_data;
        for (const Variant& v : variants) {
            hhsft::ModelConfig mcfg = base_model;
            mcfg.use_dref = v.dref;
            mcfg.use_dapga = v.dapga;

            CellSummary cell;
            cell.data_mode = data_mode;
            cell.model_mode = v.name;
            for (size_t s = 0; s < xcfg.n_seeds; ++s)
                cell.aucs.push_back(
                    cell_auc(mcfg, xcfg.seed0 + s, data.samples, data.eval_records, xcfg));
            std::tie(cell.mean, cell.se) = mean_se(cell.aucs);
            if (reference.empty()) reference = cell.aucs;  // first cell is the reference
            for (size_t s = 0; s < xcfg.n_seeds; ++s)
                cell.deltas.push_back(cell.aucs[s] - reference[s]);
            std::tie(cell.delta_mean, cell.delta_se) = mean_se(cell.deltas);
            result.cells.push_back(std::move(cell));
        }
    }
    return result;
}

ScalingResult scaling_run(const synthlog::World& world, const synthlog::EventLog& train_log,
                          const synthlog::EventLog& eval_log,
                          const hhsft::ModelConfig& base_model,
                          const es3::DatasetConfig& es3_cfg, const ExperimentConfig& xcfg,
                          const std::vector<size_t>& ratios) {
    hhsft::validate(base_model);
    if (xcfg.n_seeds == 0) throw std::invalid_argument("scaling_run: n_seeds must be positive");
    if (ratios.empty() || ratios.front() != 1 ||
        !std::is_sorted(ratios.begin(), ratios.end()) ||
        std::adjacent_find(ratios.begin(), ratios.end()) != ratios.end())
        throw std::invalid_argument(
            "scaling_run: ratios must be strictly increasing and start at 1");

    const PreparedData search_only =
        prepare(world, train_log, eval_log, base_model, search_only_config(es3_cfg));
    const PreparedData es3_data = prepare(world, train_log, eval_log, base_model, es3_cfg);

    auto scaled = [&](const std::string& axis, size_t ratio) {
        hhsft::ModelConfig mcfg = base_model;
        if (axis == "d_H") {
            mcfg.d_H *= ratio;
        } else {
            mcfg.d_G *= ratio;
            // The expert width follows the fused representation, so global
            // scaling grows the whole post-attention pathway.
            mcfg.d_E = mcfg.m * mcfg.d_G;
        }
        hhsft::validate(mcfg);
        return mcfg;
    };

    ScalingResult result;
    for (const char* data_mode : {"search_only", "es3"}) {
        const PreparedData& data =
            std::string(data_mode) == "search_only" ? search_only : es3_data;

        // Shared ratio-1 anchor: both axes leave the config untouched at 1x.
        ScalePoint anchor;
        anchor.ratio = 1;
        anchor.data_mode = data_mode;
        anchor.params = hhsft::init_model(base_model, xcfg.seed0).param_count();
        for (size_t s = 0; s < xcfg.n_seeds; ++s)
            anchor.aucs.push_back(
                cell_auc(base_model, xcfg.seed0 + s, data.samples, data.eval_records, xcfg));
        std::tie(anchor.mean_auc, anchor.se) = mean_se(anchor.aucs);
        anchor.delta_auc = 0.0;  // by definition at the anchor

        for (const char* axis : {"d_H", "d_G"}) {
            ScalePoint at_one = anchor;
            at_one.axis = axis;
            result.points.push_back(at_one);
            for (size_t ratio : ratios) {
                if (ratio == 1) continue;
                ScalePoint pt;
                pt.axis = axis;
                pt.ratio = ratio;
                pt.data_mode = data_mode;
                const hhsft::ModelConfig mcfg = scaled(axis, ratio);
                pt.params = hhsft::init_model(mcfg, xcfg.seed0).param_count();
                for (size_t s = 0; s < xcfg.n_seeds; ++s)
                    pt.aucs.push_back(
                        cell_auc(mcfg, xcfg.seed0 + s, data.samples, data.eval_records, xcfg));
                std::tie(pt.mean_auc, pt.se) = mean_se(pt.aucs);
                pt.delta_auc = pt.mean_auc - anchor.mean_auc;
                result.points.push_back(std::move(pt));
            }
        }
    }
    return result;
}

}  // namespace uniscale::harness
