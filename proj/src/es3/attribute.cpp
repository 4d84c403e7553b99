#include <algorithm>
#include <unordered_map>

#include "uniscale/es3/es3.hpp"

namespace uniscale::es3 {

namespace {

struct RecordRef {
    uint64_t tick;
    uint64_t request_id;
    size_t record_index;
};

}  // namespace

std::vector<RequestRecord> attribute_labels(std::vector<RequestRecord> records,
                                            const synthlog::EventLog& events,
                                            const AttributionWindow& window,
                                            AttributionStats* stats) {
    AttributionStats local;

    // Only genuine search records can receive attributed labels.
    std::unordered_map<uint32_t, std::vector<RecordRef>> by_user;
    std::vector<std::unordered_map<uint32_t, size_t>> entry_index(records.size());
    for (size_t i = 0; i < records.size(); ++i) {
        const RequestRecord& r = records[i];
        if (r.synthetic || r.domain_id != static_cast<uint32_t>(synthlog::Domain::search)) continue;
        by_user[r.user_id].push_back({r.tick, r.request_id, i});
        auto& idx = entry_index[i];
        idx.reserve(r.items.size());
        for (size_t j = 0; j < r.items.size(); ++j) idx.emplace(r.items[j].item_id, j);
    }
    // Recency order: later tick wins, request id breaks ties deterministically.
    for (auto& [uid, refs] : by_user)
        std::sort(refs.begin(), refs.end(), [](const RecordRef& a, const RecordRef& b) {
            if (a.tick != b.tick) return a.tick < b.tick;
            return a.request_id < b.request_id;
        });

    for (const synthlog::BehaviorEvent& ev : events.events) {
        if (ev.domain == synthlog::Domain::search) continue;
        const bool is_click = ev.kind == synthlog::EventKind::click;
        const bool is_conv = ev.kind == synthlog::EventKind::conversion;
        if (!is_click && !is_conv) continue;

        auto uit = by_user.find(ev.user_id);
        if (uit == by_user.end()) {
            ++local.skipped_unknown_user;
            continue;
        }

        const uint64_t t = ev.timestamp;
        const uint64_t lo = t >= window.max_lag ? t - window.max_lag : 0;
        const std::vector<RecordRef>& refs = uit->second;
        // First record at or before t, scanning backwards until the window closes.
        auto start = std::upper_bound(refs.begin(), refs.end(), t,
                                      [](uint64_t value, const RecordRef& r) { return value < r.tick; });
        bool applied = false;
        for (auto it = std::make_reverse_iterator(start); it != refs.rend(); ++it) {
            if (it->tick < lo) break;
            const auto& idx = entry_index[it->record_index];
            auto eit = idx.find(ev.item_id);
            if (eit == idx.end()) continue;
            ItemEntry& entry = records[it->record_index].items[eit->second];
            if (entry.click_label == 0) {
                entry.click_label = 1;
                if (entry.label_source == LabelSource::none)
                    entry.label_source = LabelSource::cross_domain_attributed;
            }
            if (is_conv) entry.conversion_label = 1;
            applied = true;
            break;
        }
        if (!applied) {
            ++local.skipped_no_target;
        } else if (is_click) {
            ++local.clicks_applied;
        } else {
            ++local.conversions_applied;
        }
    }

    if (stats) *stats = local;
    return records;
}

}  // namespace uniscale::es3
