#include "uniscale/harness/harness.hpp"

namespace uniscale::harness {

std::vector<ScoredList> score_records(const hhsft::Model& model,
                                      const std::vector<es3::RequestRecord>& records) {
    std::vector<ScoredList> lists;
    for (const es3::RequestRecord& r : records) {
        if (r.synthetic || r.domain_id != static_cast<uint32_t>(synthlog::Domain::search)) continue;
        ScoredList l;
        l.user_id = r.user_id;
        l.query_id = r.query_id;
        for (const es3::ItemEntry& e : r.items) {
            if (e.exposure_flag != es3::ExposureFlag::exposed) continue;
            l.item_ids.push_back(e.item_id);
            l.scores.push_back(hhsft::predict_search(model, hhsft::sample_from_entry(r, e, model.config)));
            l.labels.push_back(static_cast<double>(e.click_label));
        }
        if (!l.scores.empty()) lists.push_back(std::move(l));
    }
    return lists;
}

EvalReport evaluate(const hhsft::Model& model, const std::vector<es3::RequestRecord>& records,
                    const EvalConfig& cfg) {
    const std::vector<ScoredList> lists = score_records(model, records);
    EvalReport report;
    report.n_lists = lists.size();
    std::vector<double> all_scores, all_labels;
    for (const ScoredList& l : lists) {
        report.n_samples += l.scores.size();
        all_scores.insert(all_scores.end(), l.scores.begin(), l.scores.end());
        all_labels.insert(all_labels.end(), l.labels.begin(), l.labels.end());
    }
    report.auc = harness::auc(all_scores, all_labels);
    report.gauc = harness::gauc(lists);
    report.hitrate = hitrate_at(lists, cfg.hit_ks);
    return report;
}

}  // namespace uniscale::harness
