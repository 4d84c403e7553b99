#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "uniscale/synthlog/types.hpp"

namespace uniscale::synthlog {

struct WorldConfig {
    uint32_t n_users = 200;
    uint32_t n_items = 400;
    uint32_t n_queries = 60;
    uint32_t n_categories = 8;
    uint32_t d_lat = 8;
    uint32_t d_emb = 8;
    uint32_t n_user_attrs = 3;       // static categorical attributes per user
    uint64_t attr_vocab = 1000;      // id space those attributes draw from
    double category_coherence = 2.0; // weight of the category center vs noise in each vector
};

// Deterministic world synthesis: same (config, seed) gives a bit-identical
// World. Items and queries inside one category share a direction in both the
// latent and the text-side space, so retrieval and behavior are coherent.
World generate_world(const WorldConfig& config, uint64_t seed);

// Probability the oracle assigns to a positive interaction:
//   sigma(a * <user_latent, item_latent> + b * <query_emb, title_emb> + c0)
// with a = 3.0, b = 2.0, c0 = -2.0. Without a query the middle term is absent.
inline constexpr double kRelevanceUserWeight = 3.0;
inline constexpr double kRelevanceQueryWeight = 2.0;
inline constexpr double kRelevanceBias = -2.0;
double ground_truth_relevance(const World& world, uint32_t user_id,
                              std::optional<uint32_t> query_id, uint32_t item_id);

struct SimConfig {
    uint64_t n_search_requests = 600;
    uint64_t n_rec_requests = 300;
    uint64_t n_detail_requests = 300;
    uint32_t candidate_size = 30;    // retrieval set per request
    uint32_t k_exp = 8;              // slate size actually shown
    double exposure_noise = 0.3;     // gaussian jitter on the exposure score
    double conv_rate = 0.25;         // conversion probability after a click
    double cross_domain_prob = 0.5;  // conversion emitted outside the click domain
    uint32_t max_conv_lag = 200;     // conversion delay drawn uniform in [1, max_conv_lag]
    uint64_t tick_stride = 10;       // ticks between consecutive request starts
    // Strength of the per-domain preference shift outside the search domain:
    // 0 = identical behavior everywhere, 1 = fully permuted item identities.
    double domain_shift = 0.7;
    // Test knobs. Negative disables the override.
    double override_relevance = -1.0;     // force every click probability's relevance term
    bool flat_position_discount = false;  // disable the 1/log2(pos+2) slate discount
};

// Position discount applied to the click probability of slate position `pos`
// (0-based): 1 / log2(pos + 2).
double position_discount(uint32_t pos);

// Closed-loop behavior simulation with explicit bias mechanisms: the slate is
// chosen by (noisy) relevance, clicks decay with position, and conversions can
// surface in a different domain after a lag. Deterministic given the seed;
// each request draws an independent substream, so any execution order gives
// the same log.
EventLog simulate(const World& world, const SimConfig& config, uint64_t seed);

// NDJSON serialization. write_world/write_events emit a versioned header line
// followed by one record per line; candidate lists go to a separate file keyed
// by request_id. Readers validate the header and reject unknown versions.
void write_world(const World& world, const std::string& path);
World read_world(const std::string& path);
void write_events(const EventLog& log, const std::string& events_path, const std::string& candidates_path);
EventLog read_events(const std::string& events_path, const std::string& candidates_path);

}  // namespace uniscale::synthlog
