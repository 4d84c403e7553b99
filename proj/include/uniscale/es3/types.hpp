#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "uniscale/synthlog/types.hpp"

namespace uniscale::es3 {

enum class ExposureFlag : uint8_t { exposed = 0, unexposed = 1 };
enum class LabelSource : uint8_t { in_domain = 0, cross_domain_attributed = 1, synthetic_negative = 2, none = 3 };
enum class Origin : uint8_t { search = 0, searchified = 1 };

const char* exposure_flag_name(ExposureFlag f);
const char* label_source_name(LabelSource s);
const char* origin_name(Origin o);
ExposureFlag exposure_flag_from_name(const std::string&);
LabelSource label_source_from_name(const std::string&);
Origin origin_from_name(const std::string&);

struct ItemEntry {
    uint32_t item_id = 0;
    std::vector<uint64_t> feature_hashes;
    std::vector<double> dense_features;
    ExposureFlag exposure_flag = ExposureFlag::exposed;
    int click_label = 0;
    int conversion_label = 0;
    LabelSource label_source = LabelSource::none;
    Origin origin = Origin::search;

    bool operator==(const ItemEntry&) const = default;
};

// List-wise training record: user/query features stored once per request, with
// all candidate entries of that request inlined.
struct RequestRecord {
    uint64_t request_id = 0;
    uint32_t domain_id = 0;
    uint32_t user_id = 0;
    uint32_t query_id = synthlog::kNoQuery;
    uint64_t tick = 0;  // request start tick; attribution windows are measured against it
    std::vector<uint64_t> user_feature_hashes;
    std::vector<uint64_t> query_feature_hashes;
    std::vector<double> context_features;
    std::vector<ItemEntry> items;
    bool synthetic = false;

    bool operator==(const RequestRecord&) const = default;
};

struct AttributionWindow {
    uint64_t max_lag = 7000;  // ticks; default spans seven simulated days at 1000 ticks/day
};

// item_id -> (query_id, click count), rows sorted by descending count then
// ascending query_id.
struct CooccurrenceTable {
    std::map<uint32_t, std::vector<std::pair<uint32_t, uint32_t>>> rows;
};

// One search-domain click of a user, for historical query reuse.
struct SearchClick {
    uint64_t tick = 0;
    uint32_t query_id = 0;
    uint32_t item_id = 0;
};

// Per-stage dataset size report. Multipliers are relative to the first stage.
struct StageStats {
    std::string stage;
    uint64_t requests = 0;
    uint64_t samples = 0;
    uint64_t click_positives = 0;
    uint64_t conversion_positives = 0;
};

struct DatasetStats {
    std::vector<StageStats> stages;
    uint64_t expansion_skipped_empty_pool = 0;
    uint64_t attribution_skipped_unknown_user = 0;
    uint64_t attribution_skipped_no_target = 0;
    uint64_t attribution_clicks_applied = 0;
    uint64_t attribution_conversions_applied = 0;
    uint64_t searchify_skipped_no_negatives = 0;
};

}  // namespace uniscale::es3
