#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "uniscale/rng.hpp"
#include "uniscale/synthlog/synthlog.hpp"

namespace uniscale::synthlog {

double position_discount(uint32_t pos) { return 1.0 / std::log2(static_cast<double>(pos) + 2.0); }

namespace {

constexpr uint64_t kShuffleStream = 2;
constexpr uint64_t kPermStreamBase = 10;       // + domain id
constexpr uint64_t kRequestStreamBase = 1000;  // + request id

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

// Indices of the `count` largest scores, ties broken by ascending index.
std::vector<uint32_t> top_by_score(const std::vector<double>& scores, uint32_t count) {
    std::vector<uint32_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), 0u);
    std::stable_sort(idx.begin(), idx.end(), [&](uint32_t a, uint32_t b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return a < b;
    });
    idx.resize(std::min<size_t>(count, idx.size()));
    return idx;
}

int kind_rank(EventKind k) { return static_cast<int>(k); }

}  // namespace

EventLog simulate(const World& world, const SimConfig& config, uint64_t seed) {
    if (config.k_exp >= config.candidate_size)
        throw std::invalid_argument("simulate: k_exp (" + std::to_string(config.k_exp) +
                                    ") must be smaller than candidate_size (" +
                                    std::to_string(config.candidate_size) + ")");
    if (config.candidate_size > world.items.size())
        throw std::invalid_argument("simulate: candidate_size exceeds the item count");
    if (config.k_exp == 0) throw std::invalid_argument("simulate: k_exp must be at least 1");
    if (config.max_conv_lag == 0) throw std::invalid_argument("simulate: max_conv_lag must be at least 1");

    const uint64_t total =
        config.n_search_requests + config.n_rec_requests + config.n_detail_requests;

    // Interleave the domains deterministically.
    std::vector<Domain> labels;
    labels.reserve(total);
    labels.insert(labels.end(), config.n_search_requests, Domain::search);
    labels.insert(labels.end(), config.n_rec_requests, Domain::recommendation);
    labels.insert(labels.end(), config.n_detail_requests, Domain::detail_page);
    Rng shuffle_rng(seed, kShuffleStream);
    for (uint64_t i = total; i > 1; --i) {
        uint64_t j = shuffle_rng.below(i);
        std::swap(labels[i - 1], labels[j]);
    }

    // Outside search, preferences follow a partially permuted item identity:
    // eff = normalize((1-s) * latent(v) + s * latent(perm_d(v))). With s > 0
    // the domains genuinely disagree about what a user likes, which is what
    // makes naive cross-domain pooling harmful and attribution informative.
    const double s = config.domain_shift;
    std::vector<std::vector<std::vector<double>>> eff(kNumDomains);
    for (uint32_t d = 1; d < kNumDomains; ++d) {
        Rng perm_rng(seed, kPermStreamBase + d);
        std::vector<uint32_t> perm(world.items.size());
        std::iota(perm.begin(), perm.end(), 0u);
        for (size_t i = perm.size(); i > 1; --i) std::swap(perm[i - 1], perm[perm_rng.below(i)]);
        eff[d].resize(world.items.size());
        for (size_t v = 0; v < world.items.size(); ++v) {
            std::vector<double> e(world.d_lat);
            const auto& own = world.items[v].latent;
            const auto& other = world.items[perm[v]].latent;
            double norm = 0.0;
            for (uint32_t i = 0; i < world.d_lat; ++i) {
                e[i] = (1.0 - s) * own[i] + s * other[i];
                norm += e[i] * e[i];
            }
            norm = std::sqrt(norm);
            if (norm == 0.0) {
                e = own;
            } else {
                for (double& x : e) x /= norm;
            }
            eff[d][v] = std::move(e);
        }
    }

    auto local_relevance = [&](Domain d, uint32_t user, uint32_t query, uint32_t item) {
        if (d == Domain::search) return ground_truth_relevance(world, user, query, item);
        const double ui = dot(world.users[user].latent, eff[static_cast<uint32_t>(d)][item]);
        return 1.0 / (1.0 + std::exp(-(kRelevanceUserWeight * ui + kRelevanceBias)));
    };

    // Each request is generated from its own substream, so the loop could run
    // in any order (or in parallel) and produce the same per-request events.
    std::vector<std::vector<BehaviorEvent>> per_request(total);
    std::vector<std::vector<uint32_t>> per_request_candidates(total);
    for (uint64_t r = 0; r < total; ++r) {
        Rng rng(seed, kRequestStreamBase + r);
        const Domain d = labels[r];
        const uint64_t t0 = r * config.tick_stride;
        const uint32_t user = static_cast<uint32_t>(rng.below(world.users.size()));
        uint32_t query = kNoQuery;

        std::vector<double> retrieval(world.items.size());
        if (d == Domain::search) {
            query = static_cast<uint32_t>(rng.below(world.queries.size()));
            for (size_t v = 0; v < world.items.size(); ++v)
                retrieval[v] = dot(world.queries[query].emb, world.items[v].title_emb);
        } else {
            for (size_t v = 0; v < world.items.size(); ++v)
                retrieval[v] = dot(world.users[user].latent, world.items[v].latent);
        }
        std::vector<uint32_t> candidates = top_by_score(retrieval, config.candidate_size);
        per_request_candidates[r] = candidates;

        // Noisy relevance picks the slate: the closed-loop selection bias.
        std::vector<double> slate_score(candidates.size());
        for (size_t i = 0; i < candidates.size(); ++i)
            slate_score[i] =
                local_relevance(d, user, query, candidates[i]) + config.exposure_noise * rng.normal();
        std::vector<uint32_t> slate_pos = top_by_score(slate_score, config.k_exp);

        std::vector<BehaviorEvent>& out = per_request[r];
        for (uint32_t pos = 0; pos < slate_pos.size(); ++pos) {
            const uint32_t item = candidates[slate_pos[pos]];
            out.push_back({0, t0, d, r, user, query, item, EventKind::exposure});
        }
        for (uint32_t pos = 0; pos < slate_pos.size(); ++pos) {
            const uint32_t item = candidates[slate_pos[pos]];
            const double rel = config.override_relevance >= 0.0 ? config.override_relevance
                                                                : local_relevance(d, user, query, item);
            const double disc = config.flat_position_discount ? 1.0 : position_discount(pos);
            if (!rng.bernoulli(rel * disc)) continue;
            out.push_back({0, t0 + 1, d, r, user, query, item, EventKind::click});
            if (!rng.bernoulli(config.conv_rate)) continue;
            Domain conv_domain = d;
            if (rng.bernoulli(config.cross_domain_prob)) {
                // Land in a non-search domain other than the click's own.
                if (d == Domain::search) {
                    conv_domain = rng.below(2) == 0 ? Domain::recommendation : Domain::detail_page;
                } else if (d == Domain::recommendation) {
                    conv_domain = Domain::detail_page;
                } else {
                    conv_domain = Domain::recommendation;
                }
            }
            const uint64_t lag = 1 + rng.below(config.max_conv_lag);
            const uint32_t conv_query = conv_domain == Domain::search ? query : kNoQuery;
            out.push_back({0, t0 + 1 + lag, conv_domain, r, user, conv_query, item, EventKind::conversion});
        }
    }

    EventLog log;
    for (uint64_t r = 0; r < total; ++r) {
        log.candidate_lists.emplace(r, std::move(per_request_candidates[r]));
        log.events.insert(log.events.end(), per_request[r].begin(), per_request[r].end());
    }
    std::sort(log.events.begin(), log.events.end(), [](const BehaviorEvent& a, const BehaviorEvent& b) {
        if (a.timestamp != b.timestamp) return a.timestamp < b.timestamp;
        if (a.request_id != b.request_id) return a.request_id < b.request_id;
        if (kind_rank(a.kind) != kind_rank(b.kind)) return kind_rank(a.kind) < kind_rank(b.kind);
        return a.item_id < b.item_id;
    });
    for (size_t i = 0; i < log.events.size(); ++i) log.events[i].event_id = i;
    return log;
}

}  // namespace uniscale::synthlog
