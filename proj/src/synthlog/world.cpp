#include <cmath>
#include <stdexcept>
#include <string>

#include "uniscale/rng.hpp"
#include "uniscale/synthlog/synthlog.hpp"

namespace uniscale::synthlog {

const char* domain_name(Domain d) {
    switch (d) {
        case Domain::search: return "search";
        case Domain::recommendation: return "recommendation";
        case Domain::detail_page: return "detail_page";
    }
    throw std::invalid_argument("domain_name: bad domain value");
}

Domain domain_from_name(const std::string& name) {
    if (name == "search") return Domain::search;
    if (name == "recommendation") return Domain::recommendation;
    if (name == "detail_page") return Domain::detail_page;
    throw std::invalid_argument("domain_from_name: unknown domain '" + name + "'");
}

const char* event_kind_name(EventKind k) {
    switch (k) {
        case EventKind::exposure: return "exposure";
        case EventKind::click: return "click";
        case EventKind::conversion: return "conversion";
    }
    throw std::invalid_argument("event_kind_name: bad kind value");
}

EventKind event_kind_from_name(const std::string& name) {
    if (name == "exposure") return EventKind::exposure;
    if (name == "click") return EventKind::click;
    if (name == "conversion") return EventKind::conversion;
    throw std::invalid_argument("event_kind_from_name: unknown kind '" + name + "'");
}

namespace {

void normalize(std::vector<double>& v) {
    double n = 0.0;
    for (double x : v) n += x * x;
    n = std::sqrt(n);
    if (n == 0.0) {
        v[0] = 1.0;  // degenerate draw: pin to the first axis
        return;
    }
    for (double& x : v) x /= n;
}

std::vector<double> random_unit(Rng& rng, uint32_t d) {
    std::vector<double> v(d);
    for (double& x : v) x = rng.normal();
    normalize(v);
    return v;
}

// Unit vector near a category center: center * coherence + standard noise.
std::vector<double> near_center(Rng& rng, const std::vector<double>& center, double coherence) {
    std::vector<double> v(center.size());
    for (size_t i = 0; i < v.size(); ++i) v[i] = coherence * center[i] + rng.normal();
    normalize(v);
    return v;
}

void require_positive(uint64_t value, const char* field) {
    if (value == 0)
        throw std::invalid_argument(std::string("generate_world: config field '") + field +
                                    "' must be at least 1");
}

}  // namespace

World generate_world(const WorldConfig& config, uint64_t seed) {
    require_positive(config.n_users, "n_users");
    require_positive(config.n_items, "n_items");
    require_positive(config.n_queries, "n_queries");
    require_positive(config.n_categories, "n_categories");
    require_positive(config.attr_vocab, "attr_vocab");
    if (config.d_lat < 2)
        throw std::invalid_argument("generate_world: config field 'd_lat' must be at least 2");
    if (config.d_emb < 2)
        throw std::invalid_argument("generate_world: config field 'd_emb' must be at least 2");

    World w;
    w.n_categories = config.n_categories;
    w.d_lat = config.d_lat;
    w.d_emb = config.d_emb;
    w.seed = seed;

    // Category anchor directions in both spaces.
    Rng cat_rng(seed, 0);
    std::vector<std::vector<double>> cat_lat(config.n_categories), cat_emb(config.n_categories);
    for (uint32_t c = 0; c < config.n_categories; ++c) {
        cat_lat[c] = random_unit(cat_rng, config.d_lat);
        cat_emb[c] = random_unit(cat_rng, config.d_emb);
    }

    Rng user_rng(seed, 1);
    w.users.resize(config.n_users);
    for (uint32_t i = 0; i < config.n_users; ++i) {
        UserRec& u = w.users[i];
        u.id = i;
        u.attr_ids.resize(config.n_user_attrs);
        for (uint64_t& a : u.attr_ids) a = user_rng.below(config.attr_vocab);
        uint32_t fav = static_cast<uint32_t>(user_rng.below(config.n_categories));
        u.latent = near_center(user_rng, cat_lat[fav], config.category_coherence);
    }

    Rng item_rng(seed, 2);
    w.items.resize(config.n_items);
    for (uint32_t i = 0; i < config.n_items; ++i) {
        ItemRec& it = w.items[i];
        it.id = i;
        it.category_id = static_cast<uint32_t>(item_rng.below(config.n_categories));
        it.price_bucket = static_cast<uint32_t>(item_rng.below(10));
        it.latent = near_center(item_rng, cat_lat[it.category_id], config.category_coherence);
        it.title_emb = near_center(item_rng, cat_emb[it.category_id], config.category_coherence);
    }

    Rng query_rng(seed, 3);
    w.queries.resize(config.n_queries);
    for (uint32_t i = 0; i < config.n_queries; ++i) {
        QueryRec& q = w.queries[i];
        q.id = i;
        q.category_id = static_cast<uint32_t>(query_rng.below(config.n_categories));
        q.emb = near_center(query_rng, cat_emb[q.category_id], config.category_coherence);
    }
    return w;
}

double ground_truth_relevance(const World& world, uint32_t user_id, std::optional<uint32_t> query_id,
                              uint32_t item_id) {
    if (user_id >= world.users.size())
        throw std::out_of_range("ground_truth_relevance: unknown user id " + std::to_string(user_id));
    if (item_id >= world.items.size())
        throw std::out_of_range("ground_truth_relevance: unknown item id " + std::to_string(item_id));
    const UserRec& u = world.users[user_id];
    const ItemRec& v = world.items[item_id];
    double z = kRelevanceBias;
    double ui = 0.0;
    for (uint32_t i = 0; i < world.d_lat; ++i) ui += u.latent[i] * v.latent[i];
    z += kRelevanceUserWeight * ui;
    if (query_id.has_value()) {
        if (*query_id >= world.queries.size())
            throw std::out_of_range("ground_truth_relevance: unknown query id " + std::to_string(*query_id));
        const QueryRec& q = world.queries[*query_id];
        double qm = 0.0;
        for (uint32_t i = 0; i < world.d_emb; ++i) qm += q.emb[i] * v.title_emb[i];
        z += kRelevanceQueryWeight * qm;
    }
    return 1.0 / (1.0 + std::exp(-z));
}

}  // namespace uniscale::synthlog
