#include <fstream>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "uniscale/synthlog/synthlog.hpp"

namespace uniscale::synthlog {

namespace {

using nlohmann::json;

constexpr int kSchemaVersion = 1;

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    return out;
}

std::ifstream open_in(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path + " for reading");
    return in;
}

json parse_line(const std::string& line, const std::string& path, size_t lineno) {
    try {
        return json::parse(line);
    } catch (const json::exception& e) {
        throw std::runtime_error(path + ":" + std::to_string(lineno) + ": bad JSON: " + e.what());
    }
}

void check_header(const json& h, const char* expected_kind, const std::string& path) {
    if (!h.contains("kind") || h["kind"] != expected_kind)
        throw std::runtime_error(path + ": first line is not a '" + expected_kind + "' header");
    if (!h.contains("schema_version") || h["schema_version"].get<int>() != kSchemaVersion)
        throw std::runtime_error(path + ": unsupported schema_version");
}

}  // namespace

void write_world(const World& world, const std::string& path) {
    std::ofstream out = open_out(path);
    out << json{{"kind", "world_header"},
                {"schema_version", kSchemaVersion},
                {"n_categories", world.n_categories},
                {"d_lat", world.d_lat},
                {"d_emb", world.d_emb},
                {"seed", world.seed}}
               .dump()
        << "\n";
    for (const UserRec& u : world.users)
        out << json{{"kind", "user"}, {"id", u.id}, {"attrs", u.attr_ids}, {"latent", u.latent}}.dump()
            << "\n";
    for (const ItemRec& it : world.items)
        out << json{{"kind", "item"},
                    {"id", it.id},
                    {"category", it.category_id},
                    {"price_bucket", it.price_bucket},
                    {"latent", it.latent},
                    {"title_emb", it.title_emb}}
                   .dump()
            << "\n";
    for (const QueryRec& q : world.queries)
        out << json{{"kind", "query"}, {"id", q.id}, {"category", q.category_id}, {"emb", q.emb}}.dump()
            << "\n";
    if (!out) throw std::runtime_error("write failed for " + path);
}

World read_world(const std::string& path) {
    std::ifstream in = open_in(path);
    std::string line;
    size_t lineno = 0;
    if (!std::getline(in, line)) throw std::runtime_error(path + ": empty file");
    ++lineno;
    json h = parse_line(line, path, lineno);
    check_header(h, "world_header", path);

    World w;
    w.n_categories = h["n_categories"].get<uint32_t>();
    w.d_lat = h["d_lat"].get<uint32_t>();
    w.d_emb = h["d_emb"].get<uint32_t>();
    w.seed = h["seed"].get<uint64_t>();

    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        json j = parse_line(line, path, lineno);
        const std::string kind = j["kind"].get<std::string>();
        if (kind == "user") {
            UserRec u;
            u.id = j["id"].get<uint32_t>();
            u.attr_ids = j["attrs"].get<std::vector<uint64_t>>();
            u.latent = j["latent"].get<std::vector<double>>();
            if (u.id != w.users.size())
                throw std::runtime_error(path + ": user ids must be dense and ascending");
            w.users.push_back(std::move(u));
        } else if (kind == "item") {
            ItemRec it;
            it.id = j["id"].get<uint32_t>();
            it.category_id = j["category"].get<uint32_t>();
            it.price_bucket = j["price_bucket"].get<uint32_t>();
            it.latent = j["latent"].get<std::vector<double>>();
            it.title_emb = j["title_emb"].get<std::vector<double>>();
            if (it.id != w.items.size())
                throw std::runtime_error(path + ": item ids must be dense and ascending");
            w.items.push_back(std::move(it));
        } else if (kind == "query") {
            QueryRec q;
            q.id = j["id"].get<uint32_t>();
            q.category_id = j["category"].get<uint32_t>();
            q.emb = j["emb"].get<std::vector<double>>();
            if (q.id != w.queries.size())
                throw std::runtime_error(path + ": query ids must be dense and ascending");
            w.queries.push_back(std::move(q));
        } else {
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": unknown record kind '" +
                                     kind + "'");
        }
    }
    return w;
}

void write_events(const EventLog& log, const std::string& events_path,
                  const std::string& candidates_path) {
    {
        std::ofstream out = open_out(events_path);
        out << json{{"kind", "events_header"},
                    {"schema_version", kSchemaVersion},
                    {"count", log.events.size()}}
                   .dump()
            << "\n";
        for (const BehaviorEvent& e : log.events) {
            json j{{"event_id", e.event_id}, {"t", e.timestamp},
                   {"domain", domain_name(e.domain)}, {"request_id", e.request_id},
                   {"user_id", e.user_id},   {"item_id", e.item_id},
                   {"event", event_kind_name(e.kind)}};
            if (e.query_id != kNoQuery) j["query_id"] = e.query_id;
            out << j.dump() << "\n";
        }
        if (!out) throw std::runtime_error("write failed for " + events_path);
    }
    {
        std::ofstream out = open_out(candidates_path);
        out << json{{"kind", "candidates_header"}, {"schema_version", kSchemaVersion}}.dump() << "\n";
        for (const auto& [rid, items] : log.candidate_lists)
            out << json{{"request_id", rid}, {"items", items}}.dump() << "\n";
        if (!out) throw std::runtime_error("write failed for " + candidates_path);
    }
}

EventLog read_events(const std::string& events_path, const std::string& candidates_path) {
    EventLog log;
    {
        std::ifstream in = open_in(events_path);
        std::string line;
        size_t lineno = 0;
        if (!std::getline(in, line)) throw std::runtime_error(events_path + ": empty file");
        ++lineno;
        json h = parse_line(line, events_path, lineno);
        check_header(h, "events_header", events_path);
        const size_t expected = h["count"].get<size_t>();
        while (std::getline(in, line)) {
            ++lineno;
            if (line.empty()) continue;
            json j = parse_line(line, events_path, lineno);
            BehaviorEvent e;
            e.event_id = j["event_id"].get<uint64_t>();
            e.timestamp = j["t"].get<uint64_t>();
            e.domain = domain_from_name(j["domain"].get<std::string>());
            e.request_id = j["request_id"].get<uint64_t>();
            e.user_id = j["user_id"].get<uint32_t>();
            e.query_id = j.contains("query_id") ? j["query_id"].get<uint32_t>() : kNoQuery;
            e.item_id = j["item_id"].get<uint32_t>();
            e.kind = event_kind_from_name(j["event"].get<std::string>());
            log.events.push_back(e);
        }
        if (log.events.size() != expected)
            throw std::runtime_error(events_path + ": header count " + std::to_string(expected) +
                                     " does not match " + std::to_string(log.events.size()) + " events");
    }
    {
        std::ifstream in = open_in(candidates_path);
        std::string line;
        size_t lineno = 0;
        if (!std::getline(in, line)) throw std::runtime_error(candidates_path + ": empty file");
        ++lineno;
        json h = parse_line(line, candidates_path, lineno);
        check_header(h, "candidates_header", candidates_path);
        while (std::getline(in, line)) {
            ++lineno;
            if (line.empty()) continue;
            json j = parse_line(line, candidates_path, lineno);
            log.candidate_lists[j["request_id"].get<uint64_t>()] =
                j["items"].get<std::vector<uint32_t>>();
        }
    }
    return log;
}

}  // namespace uniscale::synthlog
