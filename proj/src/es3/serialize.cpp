#include <fstream>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "uniscale/es3/es3.hpp"

namespace uniscale::es3 {

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

json entry_to_json(const ItemEntry& e) {
    return json{{"item_id", e.item_id},
                {"hashes", e.feature_hashes},
                {"dense", e.dense_features},
                {"exposure", exposure_flag_name(e.exposure_flag)},
                {"click", e.click_label},
                {"conversion", e.conversion_label},
                {"source", label_source_name(e.label_source)},
                {"origin", origin_name(e.origin)}};
}

ItemEntry entry_from_json(const json& j) {
    ItemEntry e;
    e.item_id = j.at("item_id").get<uint32_t>();
    e.feature_hashes = j.at("hashes").get<std::vector<uint64_t>>();
    e.dense_features = j.at("dense").get<std::vector<double>>();
    e.exposure_flag = exposure_flag_from_name(j.at("exposure").get<std::string>());
    e.click_label = j.at("click").get<int>();
    e.conversion_label = j.at("conversion").get<int>();
    e.label_source = label_source_from_name(j.at("source").get<std::string>());
    e.origin = origin_from_name(j.at("origin").get<std::string>());
    if (e.click_label != 0 && e.click_label != 1)
        throw std::runtime_error("dataset entry has non-binary click label");
    if (e.conversion_label != 0 && e.conversion_label != 1)
        throw std::runtime_error("dataset entry has non-binary conversion label");
    return e;
}

}  // namespace

void write_dataset(const std::vector<RequestRecord>& records, const std::string& path) {
    std::ofstream out = open_out(path);
    out << json{{"kind", "dataset_header"}, {"schema_version", kSchemaVersion}, {"count", records.size()}}
               .dump()
        << "\n";
    for (const RequestRecord& r : records) {
        json items = json::array();
        for (const ItemEntry& e : r.items) items.push_back(entry_to_json(e));
        out << json{{"kind", "record"},
                    {"request_id", r.request_id},
                    {"domain", synthlog::domain_name(static_cast<synthlog::Domain>(r.domain_id))},
                    {"user_id", r.user_id},
                    {"query_id", r.query_id},
                    {"tick", r.tick},
                    {"user_hashes", r.user_feature_hashes},
                    {"query_hashes", r.query_feature_hashes},
                    {"context", r.context_features},
                    {"synthetic", r.synthetic},
                    {"items", items}}
                   .dump()
            << "\n";
    }
    if (!out) throw std::runtime_error("write failed for " + path);
}

std::vector<RequestRecord> read_dataset(const std::string& path) {
    std::ifstream in = open_in(path);
    std::string line;
    size_t lineno = 0;

    auto next_json = [&](const char* what) {
        if (!std::getline(in, line))
            throw std::runtime_error(path + ": truncated, expected " + std::string(what));
        ++lineno;
        try {
            return json::parse(line);
        } catch (const json::exception& e) {
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": bad JSON: " + e.what());
        }
    };

    const json header = next_json("dataset_header");
    if (!header.contains("kind") || header["kind"] != "dataset_header")
        throw std::runtime_error(path + ": first line is not a dataset_header");
    if (!header.contains("schema_version") || header["schema_version"].get<int>() != kSchemaVersion)
        throw std::runtime_error(path + ": unsupported schema_version");
    const size_t count = header.at("count").get<size_t>();

    std::vector<RequestRecord> records;
    records.reserve(count);
    for (size_t i = 0; i < count; ++i) {
        const json j = next_json("record");
        if (!j.contains("kind") || j["kind"] != "record")
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": expected a record line");
        RequestRecord r;
        r.request_id = j.at("request_id").get<uint64_t>();
        r.domain_id =
            static_cast<uint32_t>(synthlog::domain_from_name(j.at("domain").get<std::string>()));
        r.user_id = j.at("user_id").get<uint32_t>();
        r.query_id = j.at("query_id").get<uint32_t>();
        r.tick = j.at("tick").get<uint64_t>();
        r.user_feature_hashes = j.at("user_hashes").get<std::vector<uint64_t>>();
        r.query_feature_hashes = j.at("query_hashes").get<std::vector<uint64_t>>();
        r.context_features = j.at("context").get<std::vector<double>>();
        r.synthetic = j.at("synthetic").get<bool>();
        for (const json& je : j.at("items")) r.items.push_back(entry_from_json(je));
        records.push_back(std::move(r));
    }
    if (std::getline(in, line) && !line.empty())
        throw std::runtime_error(path + ": trailing data after " + std::to_string(count) + " records");
    return records;
}

void write_stats(const DatasetStats& stats, const std::string& path) {
    json stages = json::array();
    for (const StageStats& s : stats.stages)
        stages.push_back(json{{"stage", s.stage},
                              {"requests", s.requests},
                              {"samples", s.samples},
                              {"click_positives", s.click_positives},
                              {"conversion_positives", s.conversion_positives}});
    const json doc{{"schema_version", kSchemaVersion},
                   {"stages", stages},
                   {"counters",
                    json{{"expansion_skipped_empty_pool", stats.expansion_skipped_empty_pool},
                         {"attribution_skipped_unknown_user", stats.attribution_skipped_unknown_user},
                         {"attribution_skipped_no_target", stats.attribution_skipped_no_target},
                         {"attribution_clicks_applied", stats.attribution_clicks_applied},
                         {"attribution_conversions_applied", stats.attribution_conversions_applied},
                         {"searchify_skipped_no_negatives", stats.searchify_skipped_no_negatives}}}};
    std::ofstream out = open_out(path);
    out << doc.dump(2) << "\n";
    if (!out) throw std::runtime_error("write failed for " + path);
}

}  // namespace uniscale::es3
