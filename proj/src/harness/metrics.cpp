#include "uniscale/harness/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>
#include <string>
#include <unordered_set>

namespace uniscale::harness {

namespace {

void require_binary(const std::vector<double>& labels, const char* who) {
    for (double l : labels)
        if (l != 0.0 && l != 1.0)
            throw std::invalid_argument(std::string(who) + ": labels must be 0 or 1, got " +
                                        std::to_string(l));
}

}  // namespace

MetricValue auc(const std::vector<double>& scores, const std::vector<double>& labels) {
    if (scores.size() != labels.size())
        throw std::invalid_argument("auc: " + std::to_string(scores.size()) + " scores vs " +
                                    std::to_string(labels.size()) + " labels");
    require_binary(labels, "auc");
    const size_t n = scores.size();
    size_t n_pos = 0;
    for (double l : labels) n_pos += l == 1.0;
    const size_t n_neg = n - n_pos;
    if (n_pos == 0 || n_neg == 0) return {0.0, false};

    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](size_t a, size_t b) { return scores[a] < scores[b]; });

    // Average ranks over tied score runs, summed for positives.
    double rank_sum_pos = 0.0;
    size_t i = 0;
    while (i < n) {
        size_t j = i;
        while (j < n && scores[order[j]] == scores[order[i]]) ++j;
        const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);  // 1-based (i+1 .. j)
        for (size_t k = i; k < j; ++k)
            if (labels[order[k]] == 1.0) rank_sum_pos += avg_rank;
        i = j;
    }
    const double np = static_cast<double>(n_pos);
    const double value = (rank_sum_pos - np * (np + 1.0) / 2.0) /
                         (np * static_cast<double>(n_neg));
    return {value, true};
}

GaucResult gauc(const std::vector<ScoredList>& lists) {
    // Ordered grouping keeps the weighted accumulation deterministic.
    std::map<std::pair<uint64_t, uint32_t>, ScoredList> groups;
    for (const ScoredList& l : lists) {
        if (l.scores.size() != l.labels.size())
            throw std::invalid_argument("gauc: score/label length mismatch in a list");
        ScoredList& g = groups[{l.user_id, l.query_id}];
        g.scores.insert(g.scores.end(), l.scores.begin(), l.scores.end());
        g.labels.insert(g.labels.end(), l.labels.begin(), l.labels.end());
    }

    GaucResult res;
    double weighted = 0.0;
    double weight_total = 0.0;
    for (const auto& [key, g] : groups) {
        const MetricValue a = auc(g.scores, g.labels);
        if (!a.defined) {
            ++res.excluded_groups;
            continue;
        }
        ++res.eligible_groups;
        const double w = static_cast<double>(g.scores.size());
        weighted += w * a.value;
        weight_total += w;
    }
    if (res.eligible_groups == 0) return res;
    res.value = {weighted / weight_total, true};
    return res;
}

MetricValue hitrate_at_k(const std::vector<ScoredList>& lists, size_t k) {
    if (k == 0) throw std::invalid_argument("hitrate_at_k: k must be positive");
    size_t eligible = 0;
    size_t hits = 0;
    for (const ScoredList& l : lists) {
        if (l.scores.size() != l.labels.size() || l.scores.size() != l.item_ids.size())
            throw std::invalid_argument("hitrate_at_k: list arrays must have equal length");
        require_binary(l.labels, "hitrate_at_k");
        std::unordered_set<uint32_t> seen(l.item_ids.begin(), l.item_ids.end());
        if (seen.size() != l.item_ids.size())
            throw std::invalid_argument("hitrate_at_k: ranking contains duplicate item ids");
        if (std::none_of(l.labels.begin(), l.labels.end(), [](double x) { return x == 1.0; }))
            continue;
        ++eligible;

        std::vector<size_t> order(l.scores.size());
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
            if (l.scores[a] != l.scores[b]) return l.scores[a] > l.scores[b];
            return l.item_ids[a] < l.item_ids[b];
        });
        const size_t top = std::min(k, order.size());
        for (size_t i = 0; i < top; ++i) {
            if (l.labels[order[i]] == 1.0) {
                ++hits;
                break;
            }
        }
    }
    if (eligible == 0) return {0.0, false};
    return {static_cast<double>(hits) / static_cast<double>(eligible), true};
}

std::map<size_t, MetricValue> hitrate_at(const std::vector<ScoredList>& lists,
                                         const std::vector<size_t>& ks) {
    std::map<size_t, MetricValue> out;
    for (size_t k : ks) out[k] = hitrate_at_k(lists, k);
    return out;
}

}  // namespace uniscale::harness
