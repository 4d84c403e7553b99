#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>
#include <unordered_set>

#include "uniscale/es3/es3.hpp"

namespace uniscale::es3 {

namespace {

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size())
        throw std::invalid_argument("cosine: dimension mismatch");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    const double denom = std::sqrt(na) * std::sqrt(nb);
    if (denom <= 0.0) return 0.0;
    return dot / denom;
}

}  // namespace

CooccurrenceTable build_cooccurrence(const synthlog::EventLog& events) {
    std::map<uint32_t, std::map<uint32_t, uint32_t>> counts;  // item -> query -> clicks
    for (const synthlog::BehaviorEvent& ev : events.events) {
        if (ev.kind != synthlog::EventKind::click) continue;
        if (ev.domain != synthlog::Domain::search) continue;
        if (ev.query_id == synthlog::kNoQuery) continue;
        ++counts[ev.item_id][ev.query_id];
    }
    CooccurrenceTable table;
    for (const auto& [item, row] : counts) {
        std::vector<std::pair<uint32_t, uint32_t>> entries(row.begin(), row.end());
        std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
            if (a.second != b.second) return a.second > b.second;
            return a.first < b.first;
        });
        table.rows.emplace(item, std::move(entries));
    }
    return table;
}

uint32_t synthesize_query(uint32_t user_id, uint32_t item_id, const std::vector<SearchClick>& history,
                          const CooccurrenceTable& cooc, const synthlog::World& world) {
    if (user_id >= world.users.size())
        throw std::out_of_range("synthesize_query: unknown user id " + std::to_string(user_id));
    if (item_id >= world.items.size())
        throw std::out_of_range("synthesize_query: unknown item id " + std::to_string(item_id));

    // Tier 1: the user's own most recent search click on this exact item.
    for (auto it = history.rbegin(); it != history.rend(); ++it)
        if (it->item_id == item_id) return it->query_id;

    // Tier 2: the query most often co-clicked with this item across all users.
    auto rit = cooc.rows.find(item_id);
    if (rit != cooc.rows.end() && !rit->second.empty()) return rit->second.front().first;

    // Tier 3: nearest query by embedding similarity to the item title.
    const std::vector<double>& title = world.items[item_id].title_emb;
    uint32_t best = 0;
    double best_sim = -2.0;
    for (const synthlog::QueryRec& q : world.queries) {
        const double sim = cosine(title, q.emb);
        if (sim > best_sim) {
            best_sim = sim;
            best = q.id;
        }
    }
    return best;
}

bool searchify(const synthlog::BehaviorEvent& click_event,
               const std::vector<uint32_t>& same_request_exposures,
               const std::vector<uint32_t>& same_request_clicks, const synthlog::World& world,
               uint32_t k_neg, const SearchifyDeps& deps, RequestRecord* out,
               uint64_t* skip_count) {
    if (click_event.kind != synthlog::EventKind::click)
        throw std::invalid_argument("searchify: event is not a click");
    if (click_event.domain == synthlog::Domain::search)
        throw std::invalid_argument("searchify: search clicks are already search samples");
    if (!deps.cooc || !deps.user_history)
        throw std::invalid_argument("searchify: deps.cooc and deps.user_history are required");
    if (!out) throw std::invalid_argument("searchify: out record is required");

    std::unordered_set<uint32_t> clicked(same_request_clicks.begin(), same_request_clicks.end());
    clicked.insert(click_event.item_id);

    std::vector<uint32_t> pool;
    pool.reserve(same_request_exposures.size());
    for (uint32_t v : same_request_exposures)
        if (!clicked.count(v)) pool.push_back(v);

    if (pool.empty()) {
        if (skip_count) ++*skip_count;
        return false;
    }

    const std::vector<double>& anchor = world.items.at(click_event.item_id).title_emb;
    std::vector<std::pair<double, uint32_t>> ranked;  // (similarity, item)
    ranked.reserve(pool.size());
    for (uint32_t v : pool) ranked.emplace_back(cosine(anchor, world.items.at(v).title_emb), v);
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    const size_t take = std::min<size_t>(k_neg, ranked.size());

    const uint32_t qid = synthesize_query(click_event.user_id, click_event.item_id,
                                          *deps.user_history, *deps.cooc, world);

    RequestRecord rec;
    rec.request_id = kSyntheticRequestBase + click_event.event_id;
    rec.domain_id = static_cast<uint32_t>(click_event.domain);
    rec.user_id = click_event.user_id;
    rec.query_id = qid;
    rec.tick = click_event.timestamp;
    rec.user_feature_hashes = user_feature_hashes(world, click_event.user_id);
    rec.query_feature_hashes = query_feature_hashes(world, qid);
    rec.context_features = world.users.at(click_event.user_id).latent;
    rec.synthetic = true;

    ItemEntry pos = make_item_entry(world, click_event.item_id);
    pos.exposure_flag = ExposureFlag::exposed;
    pos.click_label = 1;
    pos.conversion_label = 0;
    pos.label_source = LabelSource::in_domain;
    pos.origin = Origin::searchified;
    rec.items.push_back(std::move(pos));

    for (size_t i = 0; i < take; ++i) {
        ItemEntry neg = make_item_entry(world, ranked[i].second);
        neg.exposure_flag = ExposureFlag::exposed;
        neg.click_label = 0;
        neg.conversion_label = 0;
        neg.label_source = LabelSource::synthetic_negative;
        neg.origin = Origin::searchified;
        rec.items.push_back(std::move(neg));
    }

    *out = rec;
    return true;
}

}  // namespace uniscale::es3
