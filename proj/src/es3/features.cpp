#include <stdexcept>

#include "uniscale/es3/es3.hpp"

namespace uniscale::es3 {

const char* exposure_flag_name(ExposureFlag f) {
    switch (f) {
        case ExposureFlag::exposed: return "exposed";
        case ExposureFlag::unexposed: return "unexposed";
    }
    throw std::invalid_argument("exposure_flag_name: bad value");
}

const char* label_source_name(LabelSource s) {
    switch (s) {
        case LabelSource::in_domain: return "in_domain";
        case LabelSource::cross_domain_attributed: return "cross_domain_attributed";
        case LabelSource::synthetic_negative: return "synthetic_negative";
        case LabelSource::none: return "none";
    }
    throw std::invalid_argument("label_source_name: bad value");
}

const char* origin_name(Origin o) {
    switch (o) {
        case Origin::search: return "search";
        case Origin::searchified: return "searchified";
    }
    throw std::invalid_argument("origin_name: bad value");
}

ExposureFlag exposure_flag_from_name(const std::string& n) {
    if (n == "exposed") return ExposureFlag::exposed;
    if (n == "unexposed") return ExposureFlag::unexposed;
    throw std::invalid_argument("exposure_flag_from_name: unknown '" + n + "'");
}

LabelSource label_source_from_name(const std::string& n) {
    if (n == "in_domain") return LabelSource::in_domain;
    if (n == "cross_domain_attributed") return LabelSource::cross_domain_attributed;
    if (n == "synthetic_negative") return LabelSource::synthetic_negative;
    if (n == "none") return LabelSource::none;
    throw std::invalid_argument("label_source_from_name: unknown '" + n + "'");
}

Origin origin_from_name(const std::string& n) {
    if (n == "search") return Origin::search;
    if (n == "searchified") return Origin::searchified;
    throw std::invalid_argument("origin_from_name: unknown '" + n + "'");
}

uint64_t fnv1a64(std::string_view bytes) {
    uint64_t h = 0xcbf29ce484222325ull;  // offset basis
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ull;  // FNV prime
    }
    return h;
}

std::vector<uint64_t> prehash_features(const std::vector<std::pair<std::string, std::string>>& raw) {
    std::vector<uint64_t> out;
    out.reserve(raw.size());
    for (const auto& [field, value] : raw) out.push_back(fnv1a64(field + "=" + value));
    return out;
}

std::vector<uint64_t> user_feature_hashes(const synthlog::World& world, uint32_t user_id) {
    if (user_id >= world.users.size())
        throw std::out_of_range("user_feature_hashes: unknown user id " + std::to_string(user_id));
    const synthlog::UserRec& u = world.users[user_id];
    std::vector<std::pair<std::string, std::string>> raw;
    raw.emplace_back("user_id", std::to_string(u.id));
    for (size_t i = 0; i < u.attr_ids.size(); ++i)
        raw.emplace_back("user_attr" + std::to_string(i), std::to_string(u.attr_ids[i]));
    return prehash_features(raw);
}

std::vector<uint64_t> query_feature_hashes(const synthlog::World& world, uint32_t query_id) {
    if (query_id >= world.queries.size())
        throw std::out_of_range("query_feature_hashes: unknown query id " + std::to_string(query_id));
    const synthlog::QueryRec& q = world.queries[query_id];
    return prehash_features({{"query_id", std::to_string(q.id)},
                             {"query_cat", std::to_string(q.category_id)}});
}

ItemEntry make_item_entry(const synthlog::World& world, uint32_t item_id) {
    if (item_id >= world.items.size())
        throw std::out_of_range("make_item_entry: unknown item id " + std::to_string(item_id));
    const synthlog::ItemRec& it = world.items[item_id];
    ItemEntry e;
    e.item_id = item_id;
    e.feature_hashes = prehash_features({{"item_id", std::to_string(it.id)},
                                         {"item_cat", std::to_string(it.category_id)},
                                         {"price_bucket", std::to_string(it.price_bucket)}});
    e.dense_features = it.latent;
    return e;
}

}  // namespace uniscale::es3
