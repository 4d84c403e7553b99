#include <algorithm>
#include <stdexcept>
#include <unordered_set>

#include "uniscale/es3/es3.hpp"
#include "uniscale/rng.hpp"

namespace uniscale::es3 {

RequestRecord expand_unexposed(const RequestRecord& record, const std::vector<uint32_t>& candidates,
                               uint32_t k_unexp, uint64_t rng_seed, const ItemFeaturizer& featurize,
                               uint64_t* empty_pool_count) {
    if (!featurize) throw std::invalid_argument("expand_unexposed: featurize callback is empty");
    RequestRecord out = record;
    if (k_unexp == 0) return out;

    std::unordered_set<uint32_t> present;
    present.reserve(record.items.size());
    for (const ItemEntry& e : record.items) present.insert(e.item_id);

    // Candidates not already in the record, kept in candidate-list order so the
    // index-based draw below is reproducible.
    std::vector<uint32_t> pool;
    pool.reserve(candidates.size());
    for (uint32_t v : candidates)
        if (!present.count(v)) pool.push_back(v);

    if (pool.empty()) {
        if (empty_pool_count) ++*empty_pool_count;
        return out;
    }

    const size_t take = std::min<size_t>(k_unexp, pool.size());
    Rng rng(rng_seed, record.request_id);
    const std::vector<uint64_t> picks = rng.sample_distinct(pool.size(), take);

    for (uint64_t idx : picks) {
        ItemEntry e = featurize(pool[idx]);
        e.exposure_flag = ExposureFlag::unexposed;
        e.click_label = 0;
        e.conversion_label = 0;
        e.label_source = LabelSource::none;
        e.origin = Origin::search;
        out.items.push_back(std::move(e));
    }
    return out;
}

}  // namespace uniscale::es3
