#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "uniscale/es3/types.hpp"
#include "uniscale/synthlog/synthlog.hpp"

namespace uniscale::es3 {

// FNV-1a 64-bit over a byte string. Fixed constants, platform independent.
uint64_t fnv1a64(std::string_view bytes);

// Each (field, value) pair is hashed as FNV-1a over "field=value".
std::vector<uint64_t> prehash_features(const std::vector<std::pair<std::string, std::string>>& raw);

// Canonical featurization used everywhere a record or entry is built, so
// synthetic records are schema-aligned with genuine search records.
std::vector<uint64_t> user_feature_hashes(const synthlog::World& world, uint32_t user_id);
std::vector<uint64_t> query_feature_hashes(const synthlog::World& world, uint32_t query_id);
// Unlabeled entry carrying the item's hashes and dense features.
ItemEntry make_item_entry(const synthlog::World& world, uint32_t item_id);

using ItemFeaturizer = std::function<ItemEntry(uint32_t item_id)>;

// Appends min(k_unexp, |candidates \ exposed|) distinct unexposed items, drawn
// uniformly without replacement from the candidate list (list order defines
// the pool indexing), using substream (seed, request_id). Appended entries are
// unlabeled. An empty pool returns the record unchanged and bumps
// *empty_pool_count when provided.
RequestRecord expand_unexposed(const RequestRecord& record, const std::vector<uint32_t>& candidates,
                               uint32_t k_unexp, uint64_t rng_seed, const ItemFeaturizer& featurize,
                               uint64_t* empty_pool_count = nullptr);

struct AttributionStats {
    uint64_t clicks_applied = 0;
    uint64_t conversions_applied = 0;
    uint64_t skipped_unknown_user = 0;
    uint64_t skipped_no_target = 0;
};

// Hierarchical cross-domain label attribution. For every non-search click
// (user u, item v, time t): the most recent genuine search record of u that
// contains v and started within [t - max_lag, t] gets click_label=1 on v's
// entry. Non-search conversions attribute the same way, set
// conversion_label=1, and raise click_label to 1 if needed so a conversion
// always implies a click. Existing positive labels are never demoted, and the
// pass is idempotent.
std::vector<RequestRecord> attribute_labels(std::vector<RequestRecord> records,
                                            const synthlog::EventLog& events,
                                            const AttributionWindow& window,
                                            AttributionStats* stats = nullptr);

CooccurrenceTable build_cooccurrence(const synthlog::EventLog& events);

// Three-tier query synthesis. history holds the user's search clicks that
// happened strictly before the event being searchified, in time order.
uint32_t synthesize_query(uint32_t user_id, uint32_t item_id, const std::vector<SearchClick>& history,
                          const CooccurrenceTable& cooc, const synthlog::World& world);

struct SearchifyDeps {
    const CooccurrenceTable* cooc = nullptr;
    const std::vector<SearchClick>* user_history = nullptr;  // clicks before the event
};

// Converts one non-search click into a search-schema record: a synthesized
// query, the clicked item as the single positive, and the k_neg most
// title-similar unclicked co-exposed items as negatives. Returns false (and
// bumps *skip_count) when no unclicked co-exposed item exists.
bool searchify(const synthlog::BehaviorEvent& click_event,
               const std::vector<uint32_t>& same_request_exposures,
               const std::vector<uint32_t>& same_request_clicks, const synthlog::World& world,
               uint32_t k_neg, const SearchifyDeps& deps, RequestRecord* out,
               uint64_t* skip_count = nullptr);

struct DatasetConfig {
    bool enable_unexposed_expansion = true;
    bool enable_attribution = true;
    bool enable_searchify = true;
    uint32_t unexposed_per_exposed = 2;  // Table-1 default: 2 extra entries per exposed entry
    uint32_t searchify_negatives = 4;
    AttributionWindow window;
    uint64_t seed = 0;  // expansion sampling substreams derive from this
};

// Full pipeline: base search records from exposures (with in-domain labels),
// unexposed expansion, cross-domain attribution, searchification of non-search
// clicks. Emits per-stage statistics in Table-1 layout.
std::pair<std::vector<RequestRecord>, DatasetStats> build_dataset(const synthlog::World& world,
                                                                  const synthlog::EventLog& log,
                                                                  const DatasetConfig& config);

// NDJSON dataset file with a versioned header line; stats as a JSON document.
void write_dataset(const std::vector<RequestRecord>& records, const std::string& path);
std::vector<RequestRecord> read_dataset(const std::string& path);
void write_stats(const DatasetStats& stats, const std::string& path);

// Synthetic records use request ids offset by this base so they never collide
// with simulator request ids.
inline constexpr uint64_t kSyntheticRequestBase = 1ull << 32;

}  // namespace uniscale::es3
