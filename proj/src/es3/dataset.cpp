#include <algorithm>
#include <map>
#include <stdexcept>
#include <unordered_map>

#include "uniscale/es3/es3.hpp"

namespace uniscale::es3 {

namespace {

struct RequestAgg {
    synthlog::Domain domain = synthlog::Domain::search;
    uint32_t user_id = 0;
    uint32_t query_id = synthlog::kNoQuery;
    uint64_t tick = 0;
    std::vector<uint32_t> exposed;    // event order == ascending item id within the request
    std::vector<uint32_t> clicked;    // clicks in the request's own domain
    std::vector<uint32_t> converted;  // conversions landing in the request's own domain
    bool has_exposures = false;
};

StageStats stage_of(const std::string& name, const std::vector<RequestRecord>& records) {
    StageStats s;
    s.stage = name;
    s.requests = records.size();
    for (const RequestRecord& r : records) {
        s.samples += r.items.size();
        for (const ItemEntry& e : r.items) {
            s.click_positives += static_cast<uint64_t>(e.click_label);
            s.conversion_positives += static_cast<uint64_t>(e.conversion_label);
        }
    }
    return s;
}

}  // namespace

std::pair<std::vector<RequestRecord>, DatasetStats> build_dataset(const synthlog::World& world,
                                                                  const synthlog::EventLog& log,
                                                                  const DatasetConfig& config) {
    DatasetStats stats;

    // Pass 1: fold the flat event stream into per-request aggregates.
    std::map<uint64_t, RequestAgg> reqs;
    for (const synthlog::BehaviorEvent& ev : log.events) {
        RequestAgg& agg = reqs[ev.request_id];
        switch (ev.kind) {
            case synthlog::EventKind::exposure:
                if (!agg.has_exposures) {
                    agg.domain = ev.domain;
                    agg.user_id = ev.user_id;
                    agg.query_id = ev.query_id;
                    agg.tick = ev.timestamp;
                    agg.has_exposures = true;
                }
                agg.exposed.push_back(ev.item_id);
                break;
            case synthlog::EventKind::click:
                agg.clicked.push_back(ev.item_id);
                break;
            case synthlog::EventKind::conversion:
                // A conversion keeps its originating request id but may land in
                // another domain; only same-domain landings are in-domain labels.
                if (agg.has_exposures && ev.domain == agg.domain) agg.converted.push_back(ev.item_id);
                break;
        }
    }

    // Base records: one list-wise record per search request, exposed items only,
    // labels straight from same-request search events.
    std::vector<RequestRecord> records;
    for (const auto& [rid, agg] : reqs) {
        if (!agg.has_exposures) continue;
        if (agg.domain != synthlog::Domain::search) continue;
        RequestRecord rec;
        rec.request_id = rid;
        rec.domain_id = static_cast<uint32_t>(synthlog::Domain::search);
        rec.user_id = agg.user_id;
        rec.query_id = agg.query_id;
        rec.tick = agg.tick;
        rec.user_feature_hashes = user_feature_hashes(world, agg.user_id);
        rec.query_feature_hashes = query_feature_hashes(world, agg.query_id);
        rec.context_features = world.users.at(agg.user_id).latent;
        rec.synthetic = false;
        std::unordered_map<uint32_t, size_t> where;
        for (uint32_t v : agg.exposed) {
            ItemEntry e = make_item_entry(world, v);
            e.exposure_flag = ExposureFlag::exposed;
            e.origin = Origin::search;
            where.emplace(v, rec.items.size());
            rec.items.push_back(std::move(e));
        }
        for (uint32_t v : agg.clicked) {
            auto it = where.find(v);
            if (it == where.end())
                throw std::runtime_error("build_dataset: click on unexposed item in request " +
                                         std::to_string(rid));
            ItemEntry& e = rec.items[it->second];
            e.click_label = 1;
            e.label_source = LabelSource::in_domain;
        }
        for (uint32_t v : agg.converted) {
            auto it = where.find(v);
            if (it == where.end())
                throw std::runtime_error("build_dataset: conversion on unexposed item in request " +
                                         std::to_string(rid));
            ItemEntry& e = rec.items[it->second];
            e.conversion_label = 1;
            e.click_label = 1;
            e.label_source = LabelSource::in_domain;
        }
        records.push_back(std::move(rec));
    }
    stats.stages.push_back(stage_of("baseline", records));

    if (config.enable_unexposed_expansion) {
        const ItemFeaturizer featurize = [&world](uint32_t v) { return make_item_entry(world, v); };
        for (RequestRecord& rec : records) {
            auto cit = log.candidate_lists.find(rec.request_id);
            if (cit == log.candidate_lists.end())
                throw std::runtime_error("build_dataset: no candidate list for request " +
                                         std::to_string(rec.request_id));
            const uint32_t k_unexp =
                config.unexposed_per_exposed * static_cast<uint32_t>(rec.items.size());
            rec = expand_unexposed(rec, cit->second, k_unexp, config.seed, featurize,
                                   &stats.expansion_skipped_empty_pool);
        }
        stats.stages.push_back(stage_of("+unexposed_expansion", records));
    }

    if (config.enable_attribution) {
        AttributionStats astats;
        records = attribute_labels(std::move(records), log, config.window, &astats);
        stats.attribution_clicks_applied = astats.clicks_applied;
        stats.attribution_conversions_applied = astats.conversions_applied;
        stats.attribution_skipped_unknown_user = astats.skipped_unknown_user;
        stats.attribution_skipped_no_target = astats.skipped_no_target;
        stats.stages.push_back(stage_of("+label_attribution", records));
    }

    if (config.enable_searchify) {
        const CooccurrenceTable cooc = build_cooccurrence(log);

        std::unordered_map<uint32_t, std::vector<SearchClick>> search_clicks;  // time order
        for (const synthlog::BehaviorEvent& ev : log.events) {
            if (ev.kind != synthlog::EventKind::click) continue;
            if (ev.domain != synthlog::Domain::search) continue;
            search_clicks[ev.user_id].push_back({ev.timestamp, ev.query_id, ev.item_id});
        }

        for (const synthlog::BehaviorEvent& ev : log.events) {
            if (ev.kind != synthlog::EventKind::click) continue;
            if (ev.domain == synthlog::Domain::search) continue;
            auto rit = reqs.find(ev.request_id);
            if (rit == reqs.end() || !rit->second.has_exposures)
                throw std::runtime_error("build_dataset: click for unknown request " +
                                         std::to_string(ev.request_id));

            // Only the user's search clicks strictly before this event may seed
            // the query, so a synthesized query never peeks into the future.
            std::vector<SearchClick> history;
            auto hit = search_clicks.find(ev.user_id);
            if (hit != search_clicks.end())
                for (const SearchClick& sc : hit->second) {
                    if (sc.tick >= ev.timestamp) break;
                    history.push_back(sc);
                }

            SearchifyDeps deps;
            deps.cooc = &cooc;
            deps.user_history = &history;
            RequestRecord rec;
            if (searchify(ev, rit->second.exposed, rit->second.clicked, world,
                          config.searchify_negatives, deps, &rec,
                          &stats.searchify_skipped_no_negatives))
                records.push_back(std::move(rec));
        }
        stats.stages.push_back(stage_of("+searchification", records));
    }

    return {std::move(records), stats};
}

}  // namespace uniscale::es3
