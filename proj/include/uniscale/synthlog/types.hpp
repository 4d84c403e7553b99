#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace uniscale::synthlog {

// Behavior domains. Integer values are part of the serialized schema.
enum class Domain : uint32_t { search = 0, recommendation = 1, detail_page = 2 };
inline constexpr uint32_t kNumDomains = 3;
inline constexpr uint32_t kNoQuery = 0xffffffffu;

const char* domain_name(Domain d);
Domain domain_from_name(const std::string& name);

struct UserRec {
    uint32_t id = 0;
    std::vector<uint64_t> attr_ids;    // static categorical attributes
    std::vector<double> latent;        // unit-norm interest vector
};

struct ItemRec {
    uint32_t id = 0;
    uint32_t category_id = 0;
    uint32_t price_bucket = 0;
    std::vector<double> latent;        // unit-norm behavior vector
    std::vector<double> title_emb;     // unit-norm text-side vector
};

struct QueryRec {
    uint32_t id = 0;
    uint32_t category_id = 0;
    std::vector<double> emb;           // unit-norm text-side vector
};

struct World {
    std::vector<UserRec> users;
    std::vector<ItemRec> items;
    std::vector<QueryRec> queries;
    uint32_t n_categories = 0;
    uint32_t d_lat = 0;
    uint32_t d_emb = 0;
    uint64_t seed = 0;
};

enum class EventKind : uint32_t { exposure = 0, click = 1, conversion = 2 };

const char* event_kind_name(EventKind k);
EventKind event_kind_from_name(const std::string& name);

struct BehaviorEvent {
    uint64_t event_id = 0;
    uint64_t timestamp = 0;            // logical tick
    Domain domain = Domain::search;
    uint64_t request_id = 0;
    uint32_t user_id = 0;
    uint32_t query_id = kNoQuery;      // kNoQuery outside the search domain
    uint32_t item_id = 0;
    EventKind kind = EventKind::exposure;

    bool operator==(const BehaviorEvent&) const = default;
};

struct EventLog {
    std::vector<BehaviorEvent> events;                         // time-ordered
    std::map<uint64_t, std::vector<uint32_t>> candidate_lists; // request_id -> retrieval set
};

}  // namespace uniscale::synthlog
