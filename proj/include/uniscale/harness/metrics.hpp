#pragma once

#include <cstdint>
#include <map>
#include <vector>

namespace uniscale::harness {

// A metric that can be genuinely undefined (e.g. AUC over a single class).
// Undefined is a distinct signal, never conflated with 0.0.
struct MetricValue {
    double value = 0.0;
    bool defined = false;
};

// One scored ranking for one request: parallel arrays, one entry per item.
struct ScoredList {
    uint64_t user_id = 0;
    uint32_t query_id = 0;
    std::vector<uint32_t> item_ids;
    std::vector<double> scores;
    std::vector<double> labels;  // binary
};

// Pointwise ROC-AUC via the rank-sum formulation; tied scores contribute 1/2
// per pair through average ranks. Undefined when either class is absent.
// Invariant under strictly monotone score transforms.
MetricValue auc(const std::vector<double>& scores, const std::vector<double>& labels);

struct GaucResult {
    MetricValue value;
    size_t eligible_groups = 0;  // groups carrying both classes
    size_t excluded_groups = 0;  // single-class groups, excluded but counted
};

// Grouped AUC: lists sharing (user_id, query_id) merge into one group, each
// eligible group's AUC is weighted by its impression count, and single-class
// groups are excluded from the average but reported. Undefined when no group
// is eligible. With exactly one group this equals auc() on that group.
GaucResult gauc(const std::vector<ScoredList>& lists);

// Request-level hit rate: the fraction of lists holding at least one positive
// whose top-k (score descending, item id ascending on ties) contains one.
// Lists must be duplicate-free rankings; repeated item ids are an error.
// Undefined when no list holds a positive. Non-decreasing in k.
MetricValue hitrate_at_k(const std::vector<ScoredList>& lists, size_t k);

// Convenience: hitrate at several cutoffs in one pass over the same lists.
std::map<size_t, MetricValue> hitrate_at(const std::vector<ScoredList>& lists,
                                         const std::vector<size_t>& ks);

}  // namespace uniscale::harness
