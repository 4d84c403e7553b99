#include <cmath>
#include <fstream>
#include <initializer_list>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "internal.hpp"
#include "uniscale/cli/cli.hpp"
#include "uniscale/es3/es3.hpp"
#include "uniscale/rng.hpp"

namespace uniscale::cli {
namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& message) { throw ConfigError(message); }

std::string describe(const json& value) {
    return std::string(value.type_name());
}

const json* find(const json& obj, const char* key) {
    auto it = obj.find(key);
    return it == obj.end() ? nullptr : &*it;
}

// Strictness lives here: every object is matched against an explicit key list
// so a typo fails loudly instead of silently falling back to a default.
void check_keys(const json& obj, const std::string& where, std::initializer_list<const char*> allowed) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool known = false;
        for (const char* k : allowed)
            if (it.key() == k) {
                known = true;
                break;
            }
        if (!known) fail("unknown key \"" + it.key() + "\" in " + where);
    }
}

const json& require_object(const json& root, const std::string& where, const char* key) {
    const json* v = find(root, key);
    if (!v) fail("missing section \"" + std::string(key) + "\"");
    if (!v->is_object()) fail(where + "." + key + " must be an object, got " + describe(*v));
    return *v;
}

uint64_t get_u64(const json& obj, const std::string& where, const char* key, uint64_t fallback) {
    const json* v = find(obj, key);
    if (!v) return fallback;
    if (!v->is_number_integer() || (v->is_number_integer() && !v->is_number_unsigned() && v->get<int64_t>() < 0))
        fail(where + "." + key + " must be a non-negative integer, got " + v->dump());
    return v->get<uint64_t>();
}

uint32_t get_u32(const json& obj, const std::string& where, const char* key, uint32_t fallback) {
    uint64_t v = get_u64(obj, where, key, fallback);
    if (v > UINT32_MAX) fail(where + "." + key + " does not fit in 32 bits");
    return static_cast<uint32_t>(v);
}

size_t get_size(const json& obj, const std::string& where, const char* key, size_t fallback) {
    return static_cast<size_t>(get_u64(obj, where, key, fallback));
}

double get_double(const json& obj, const std::string& where, const char* key, double fallback) {
    const json* v = find(obj, key);
    if (!v) return fallback;
    if (!v->is_number()) fail(where + "." + key + " must be a number, got " + describe(*v));
    double d = v->get<double>();
    if (!std::isfinite(d)) fail(where + "." + key + " must be finite");
    return d;
}

bool get_bool(const json& obj, const std::string& where, const char* key, bool fallback) {
    const json* v = find(obj, key);
    if (!v) return fallback;
    if (!v->is_boolean()) fail(where + "." + key + " must be a boolean, got " + describe(*v));
    return v->get<bool>();
}

std::string get_string(const json& obj, const std::string& where, const char* key) {
    const json* v = find(obj, key);
    if (!v) fail(where + " is missing required key \"" + key + "\"");
    if (!v->is_string()) fail(where + "." + key + " must be a string, got " + describe(*v));
    return v->get<std::string>();
}

std::vector<size_t> get_size_array(const json& obj, const std::string& where, const char* key,
                                   std::vector<size_t> fallback) {
    const json* v = find(obj, key);
    if (!v) return fallback;
    if (!v->is_array()) fail(where + "." + key + " must be an array, got " + describe(*v));
    std::vector<size_t> out;
    for (const json& e : *v) {
        if (!e.is_number_integer() || (!e.is_number_unsigned() && e.get<int64_t>() < 0))
            fail(where + "." + key + " entries must be non-negative integers, got " + e.dump());
        out.push_back(e.get<size_t>());
    }
    return out;
}

void require_positive(uint64_t v, const std::string& what) {
    if (v == 0) fail(what + " must be positive");
}

void require_prob(double v, const std::string& what) {
    if (v < 0.0 || v > 1.0) fail(what + " must lie in [0, 1]");
}

void parse_world(const json& obj, synthlog::WorldConfig& w) {
    const std::string where = "world";
    check_keys(obj, where,
               {"n_users", "n_items", "n_queries", "n_categories", "d_lat", "d_emb", "n_user_attrs",
                "attr_vocab", "category_coherence"});
    w.n_users = get_u32(obj, where, "n_users", w.n_users);
    w.n_items = get_u32(obj, where, "n_items", w.n_items);
    w.n_queries = get_u32(obj, where, "n_queries", w.n_queries);
    w.n_categories = get_u32(obj, where, "n_categories", w.n_categories);
    w.d_lat = get_u32(obj, where, "d_lat", w.d_lat);
    w.d_emb = get_u32(obj, where, "d_emb", w.d_emb);
    w.n_user_attrs = get_u32(obj, where, "n_user_attrs", w.n_user_attrs);
    w.attr_vocab = get_u64(obj, where, "attr_vocab", w.attr_vocab);
    w.category_coherence = get_double(obj, where, "category_coherence", w.category_coherence);
    require_positive(w.n_users, "world.n_users");
    require_positive(w.n_items, "world.n_items");
    require_positive(w.n_queries, "world.n_queries");
    require_positive(w.n_categories, "world.n_categories");
    require_positive(w.d_lat, "world.d_lat");
    require_positive(w.d_emb, "world.d_emb");
    require_positive(w.attr_vocab, "world.attr_vocab");
    if (w.category_coherence < 0.0) fail("world.category_coherence must be non-negative");
}

void parse_sim(const json& obj, synthlog::SimConfig& s) {
    const std::string where = "sim";
    check_keys(obj, where,
               {"n_search_requests", "n_rec_requests", "n_detail_requests", "candidate_size", "k_exp",
                "exposure_noise", "conv_rate", "cross_domain_prob", "max_conv_lag", "tick_stride",
                "domain_shift"});
    s.n_search_requests = get_u64(obj, where, "n_search_requests", s.n_search_requests);
    s.n_rec_requests = get_u64(obj, where, "n_rec_requests", s.n_rec_requests);
    s.n_detail_requests = get_u64(obj, where, "n_detail_requests", s.n_detail_requests);
    s.candidate_size = get_u32(obj, where, "candidate_size", s.candidate_size);
    s.k_exp = get_u32(obj, where, "k_exp", s.k_exp);
    s.exposure_noise = get_double(obj, where, "exposure_noise", s.exposure_noise);
    s.conv_rate = get_double(obj, where, "conv_rate", s.conv_rate);
    s.cross_domain_prob = get_double(obj, where, "cross_domain_prob", s.cross_domain_prob);
    s.max_conv_lag = get_u32(obj, where, "max_conv_lag", s.max_conv_lag);
    s.tick_stride = get_u64(obj, where, "tick_stride", s.tick_stride);
    s.domain_shift = get_double(obj, where, "domain_shift", s.domain_shift);
    require_positive(s.k_exp, "sim.k_exp");
    if (s.candidate_size < s.k_exp) fail("sim.candidate_size must be >= sim.k_exp");
    if (s.exposure_noise < 0.0) fail("sim.exposure_noise must be non-negative");
    require_prob(s.conv_rate, "sim.conv_rate");
    require_prob(s.cross_domain_prob, "sim.cross_domain_prob");
    require_prob(s.domain_shift, "sim.domain_shift");
    require_positive(s.max_conv_lag, "sim.max_conv_lag");
    require_positive(s.tick_stride, "sim.tick_stride");
}

void parse_es3(const json& obj, es3::DatasetConfig& d) {
    const std::string where = "es3";
    check_keys(obj, where,
               {"enable_unexposed_expansion", "enable_attribution", "enable_searchify",
                "unexposed_per_exposed", "searchify_negatives", "max_lag"});
    d.enable_unexposed_expansion = get_bool(obj, where, "enable_unexposed_expansion", d.enable_unexposed_expansion);
    d.enable_attribution = get_bool(obj, where, "enable_attribution", d.enable_attribution);
    d.enable_searchify = get_bool(obj, where, "enable_searchify", d.enable_searchify);
    d.unexposed_per_exposed = get_u32(obj, where, "unexposed_per_exposed", d.unexposed_per_exposed);
    d.searchify_negatives = get_u32(obj, where, "searchify_negatives", d.searchify_negatives);
    d.window.max_lag = get_u64(obj, where, "max_lag", d.window.max_lag);
    require_positive(d.searchify_negatives, "es3.searchify_negatives");
    require_positive(d.window.max_lag, "es3.max_lag");
}

hhsft::BlockSpec parse_block(const json& obj, size_t index) {
    const std::string where = "model.blocks[" + std::to_string(index) + "]";
    if (!obj.is_object()) fail(where + " must be an object");
    hhsft::BlockSpec spec;
    spec.name = get_string(obj, where, "name");
    std::string kind = get_string(obj, where, "kind");
    if (kind == "hash") {
        check_keys(obj, where, {"name", "kind", "rows", "dim"});
        spec.kind = hhsft::BlockSpec::Kind::hash;
        spec.emb_rows = get_u64(obj, where, "rows", 0);
        spec.emb_dim = get_size(obj, where, "dim", 0);
        require_positive(spec.emb_rows, where + ".rows");
        require_positive(spec.emb_dim, where + ".dim");
    } else if (kind == "dense") {
        check_keys(obj, where, {"name", "kind", "dim"});
        spec.kind = hhsft::BlockSpec::Kind::dense;
        spec.dense_dim = get_size(obj, where, "dim", 0);
        require_positive(spec.dense_dim, where + ".dim");
    } else {
        fail(where + ".kind must be \"hash\" or \"dense\", got \"" + kind + "\"");
    }
    return spec;
}

void parse_model(const json& obj, hhsft::ModelConfig& m) {
    const std::string where = "model";
    check_keys(obj, where,
               {"blocks", "d_H", "L_H", "d_G", "m", "L_G", "heads", "n_domains", "d_E",
                "token_mlp_hidden", "ffn_hidden", "expert_hidden", "head_hidden", "user_emb_rows",
                "user_emb_dim", "domain_emb_dim", "use_dref", "use_dapga", "train_conversion_heads"});
    if (const json* blocks = find(obj, "blocks")) {
        if (!blocks->is_array() || blocks->empty()) fail("model.blocks must be a non-empty array");
        m.blocks.clear();
        for (size_t i = 0; i < blocks->size(); ++i) m.blocks.push_back(parse_block((*blocks)[i], i));
    }
    m.d_H = get_size(obj, where, "d_H", m.d_H);
    m.L_H = get_size(obj, where, "L_H", m.L_H);
    m.d_G = get_size(obj, where, "d_G", m.d_G);
    m.m = get_size(obj, where, "m", m.m);
    m.L_G = get_size(obj, where, "L_G", m.L_G);
    m.heads = get_size(obj, where, "heads", m.heads);
    m.n_domains = get_size(obj, where, "n_domains", m.n_domains);
    m.d_E = get_size(obj, where, "d_E", m.d_E);
    m.token_mlp_hidden = get_size(obj, where, "token_mlp_hidden", m.token_mlp_hidden);
    m.ffn_hidden = get_size(obj, where, "ffn_hidden", m.ffn_hidden);
    m.expert_hidden = get_size(obj, where, "expert_hidden", m.expert_hidden);
    m.head_hidden = get_size(obj, where, "head_hidden", m.head_hidden);
    m.user_emb_rows = get_u64(obj, where, "user_emb_rows", m.user_emb_rows);
    m.user_emb_dim = get_size(obj, where, "user_emb_dim", m.user_emb_dim);
    m.domain_emb_dim = get_size(obj, where, "domain_emb_dim", m.domain_emb_dim);
    m.use_dref = get_bool(obj, where, "use_dref", m.use_dref);
    m.use_dapga = get_bool(obj, where, "use_dapga", m.use_dapga);
    m.train_conversion_heads = get_bool(obj, where, "train_conversion_heads", m.train_conversion_heads);
}

void parse_optimizer(const json& obj, nncore::Adam::Config& a) {
    const std::string where = "optimizer";
    check_keys(obj, where, {"lr", "beta1", "beta2", "eps"});
    a.lr = get_double(obj, where, "lr", a.lr);
    a.beta1 = get_double(obj, where, "beta1", a.beta1);
    a.beta2 = get_double(obj, where, "beta2", a.beta2);
    a.eps = get_double(obj, where, "eps", a.eps);
    if (a.lr <= 0.0) fail("optimizer.lr must be positive");
    if (a.beta1 < 0.0 || a.beta1 >= 1.0) fail("optimizer.beta1 must lie in [0, 1)");
    if (a.beta2 < 0.0 || a.beta2 >= 1.0) fail("optimizer.beta2 must lie in [0, 1)");
    if (a.eps <= 0.0) fail("optimizer.eps must be positive");
}

void parse_harness(const json& obj, RunConfig& cfg) {
    const std::string where = "harness";
    check_keys(obj, where,
               {"steps", "batch_size", "shard_size", "hit_ks", "n_seeds", "scaling_ratios"});
    cfg.train.steps = get_size(obj, where, "steps", cfg.train.steps);
    cfg.train.batch_size = get_size(obj, where, "batch_size", cfg.train.batch_size);
    cfg.train.shard_size = get_size(obj, where, "shard_size", cfg.train.shard_size);
    cfg.eval.hit_ks = get_size_array(obj, where, "hit_ks", cfg.eval.hit_ks);
    cfg.n_seeds = get_size(obj, where, "n_seeds", cfg.n_seeds);
    cfg.scaling_ratios = get_size_array(obj, where, "scaling_ratios", cfg.scaling_ratios);
    require_positive(cfg.train.steps, "harness.steps");
    require_positive(cfg.train.batch_size, "harness.batch_size");
    require_positive(cfg.train.shard_size, "harness.shard_size");
    require_positive(cfg.n_seeds, "harness.n_seeds");
    if (cfg.eval.hit_ks.empty()) fail("harness.hit_ks must be non-empty");
    for (size_t k : cfg.eval.hit_ks) require_positive(k, "harness.hit_ks entries");
    if (cfg.scaling_ratios.empty() || cfg.scaling_ratios.front() != 1)
        fail("harness.scaling_ratios must start at 1");
    for (size_t i = 1; i < cfg.scaling_ratios.size(); ++i)
        if (cfg.scaling_ratios[i] <= cfg.scaling_ratios[i - 1])
            fail("harness.scaling_ratios must be strictly increasing");
}

// The sample gatherer recognizes a fixed block vocabulary, and the simulator
// emits latent vectors of width world.d_lat as the dense features; both are
// enforced here so a bad combination dies as a config error instead of a
// runtime throw deep inside training.
void cross_validate(const RunConfig& cfg) {
    struct Known {
        const char* name;
        hhsft::BlockSpec::Kind kind;
    };
    static constexpr Known known[] = {
        {"user", hhsft::BlockSpec::Kind::hash},     {"query", hhsft::BlockSpec::Kind::hash},
        {"item", hhsft::BlockSpec::Kind::hash},     {"item_dense", hhsft::BlockSpec::Kind::dense},
        {"context", hhsft::BlockSpec::Kind::dense}, {"domain", hhsft::BlockSpec::Kind::hash},
    };
    for (const auto& b : cfg.model.blocks) {
        bool found = false;
        for (const auto& k : known) {
            if (b.name != k.name) continue;
            found = true;
            if (b.kind != k.kind)
                fail("model block \"" + b.name + "\" has the wrong kind for its name");
        }
        if (!found) fail("model block name \"" + b.name + "\" is not a recognized feature block");
        if (b.kind == hhsft::BlockSpec::Kind::dense && b.dense_dim != cfg.world.d_lat)
            fail("model block \"" + b.name + "\" dense width " + std::to_string(b.dense_dim) +
                 " must equal world.d_lat " + std::to_string(cfg.world.d_lat) +
                 " (records carry latent vectors of that width)");
    }
}

}  // namespace

uint64_t derived_seed(uint64_t seed, std::string_view stage) {
    return mix64(mix64(seed) ^ es3::fnv1a64(stage));
}

RunConfig load_config(const std::string& path, std::optional<uint64_t> seed_override) {
    const std::string bytes = read_file_bytes(path);
    json root;
    try {
        root = json::parse(bytes);
    } catch (const json::parse_error& e) {
        fail("config is not valid JSON: " + std::string(e.what()));
    }
    if (!root.is_object()) fail("config root must be a JSON object");

    // Version gate comes first: nothing else is interpreted under an unknown
    // schema.
    const json* version = find(root, "schema_version");
    if (!version) fail("config is missing \"schema_version\"");
    if (!version->is_string()) fail("schema_version must be a string");
    if (version->get<std::string>() != kSchemaVersion)
        fail("unsupported schema_version \"" + version->get<std::string>() + "\" (expected \"" +
             std::string(kSchemaVersion) + "\")");

    check_keys(root, "config root",
               {"schema_version", "seed", "world", "sim", "es3", "model", "optimizer", "harness"});

    RunConfig cfg;
    cfg.schema_version = kSchemaVersion;
    cfg.seed = get_u64(root, "config root", "seed", cfg.seed);
    if (seed_override) cfg.seed = *seed_override;

    parse_world(require_object(root, "config root", "world"), cfg.world);
    parse_sim(require_object(root, "config root", "sim"), cfg.sim);
    parse_es3(require_object(root, "config root", "es3"), cfg.es3);
    parse_model(require_object(root, "config root", "model"), cfg.model);
    parse_optimizer(require_object(root, "config root", "optimizer"), cfg.optimizer);
    parse_harness(require_object(root, "config root", "harness"), cfg);

    cfg.train.adam = cfg.optimizer;
    // Per-stage substreams of the one global seed; no other seed is
    // configurable, so (config, seed) pins every artifact.
    cfg.es3.seed = derived_seed(cfg.seed, "es3");

    try {
        hhsft::validate(cfg.model);
    } catch (const std::invalid_argument& e) {
        fail(std::string("model: ") + e.what());
    }
    cross_validate(cfg);
    return cfg;
}

}  // namespace uniscale::cli
