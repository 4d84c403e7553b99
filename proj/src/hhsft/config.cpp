#include <set>
#include <stdexcept>

#include "uniscale/es3/es3.hpp"
#include "uniscale/hhsft/hhsft.hpp"
#include "uniscale/rng.hpp"

namespace uniscale::hhsft {

namespace {

void require(bool ok, const std::string& what) {
    if (!ok) throw std::invalid_argument("model config: " + what);
}

// Canonical parameter walk. Every construction, binding, and checkpoint check
// goes through this single definition so the order can never drift.
template <typename Fn>
void for_each_param(const ModelConfig& c, Fn&& emit) {
    const size_t n = c.n_tokens();
    for (const BlockSpec& b : c.blocks) {
        const std::string base = "tok." + b.name + ".";
        const size_t in_dim = b.kind == BlockSpec::Kind::hash ? b.emb_dim : b.dense_dim;
        if (b.kind == BlockSpec::Kind::hash)
            emit(base + "emb", std::vector<size_t>{static_cast<size_t>(b.emb_rows), b.emb_dim});
        emit(base + "w1", std::vector<size_t>{in_dim, c.token_mlp_hidden});
        emit(base + "b1", std::vector<size_t>{c.token_mlp_hidden});
        emit(base + "w2", std::vector<size_t>{c.token_mlp_hidden, c.d_H});
        emit(base + "b2", std::vector<size_t>{c.d_H});
    }
    for (size_t l = 0; l < c.L_H; ++l) {
        const std::string lb = "hfa" + std::to_string(l) + ".";
        for (size_t i = 0; i < n; ++i) {
            const std::string tb = lb + "tok" + std::to_string(i) + ".";
            emit(tb + "wq", std::vector<size_t>{c.d_H, c.d_H});
            emit(tb + "wk", std::vector<size_t>{c.d_H, c.d_H});
            emit(tb + "wv", std::vector<size_t>{c.d_H, c.d_H});
            emit(tb + "ffn.w1", std::vector<size_t>{c.d_H, c.ffn_hidden});
            emit(tb + "ffn.b1", std::vector<size_t>{c.ffn_hidden});
            emit(tb + "ffn.w2", std::vector<size_t>{c.ffn_hidden, c.d_H});
            emit(tb + "ffn.b2", std::vector<size_t>{c.d_H});
        }
        if (c.use_layer_norm_residual) {
            emit(lb + "ln_attn.gain", std::vector<size_t>{c.d_H});
            emit(lb + "ln_attn.bias", std::vector<size_t>{c.d_H});
            emit(lb + "ln_ffn.gain", std::vector<size_t>{c.d_H});
            emit(lb + "ln_ffn.bias", std::vector<size_t>{c.d_H});
        }
    }
    for (size_t l = 0; l < c.L_G; ++l) {
        const std::string lb = "gfa" + std::to_string(l) + ".";
        const size_t d_in = l == 0 ? n * c.d_H : c.d_Z();
        for (size_t j = 0; j < c.m; ++j) {
            const std::string tb = lb + "tok" + std::to_string(j) + ".";
            emit(tb + "wq", std::vector<size_t>{d_in, c.d_G});
            emit(tb + "wk", std::vector<size_t>{d_in, c.d_G});
            emit(tb + "wv", std::vector<size_t>{d_in, c.d_G});
        }
        emit(lb + "ffn.w1", std::vector<size_t>{c.d_Z(), c.ffn_hidden});
        emit(lb + "ffn.b1", std::vector<size_t>{c.ffn_hidden});
        emit(lb + "ffn.w2", std::vector<size_t>{c.ffn_hidden, c.d_Z()});
        emit(lb + "ffn.b2", std::vector<size_t>{c.d_Z()});
        if (c.use_layer_norm_residual) {
            emit(lb + "ln_attn.gain", std::vector<size_t>{c.d_G});
            emit(lb + "ln_attn.bias", std::vector<size_t>{c.d_G});
            emit(lb + "ln_ffn.gain", std::vector<size_t>{c.d_Z()});
            emit(lb + "ln_ffn.bias", std::vector<size_t>{c.d_Z()});
        }
    }
    emit("expert.shared.w1", std::vector<size_t>{c.d_Z(), c.expert_hidden});
    emit("expert.shared.b1", std::vector<size_t>{c.expert_hidden});
    emit("expert.shared.w2", std::vector<size_t>{c.expert_hidden, c.d_E});
    emit("expert.shared.b2", std::vector<size_t>{c.d_E});
    for (size_t d = 0; d < c.n_domains; ++d) {
        const std::string eb = "expert.domain" + std::to_string(d) + ".";
        emit(eb + "w1", std::vector<size_t>{c.d_Z(), c.expert_hidden});
        emit(eb + "b1", std::vector<size_t>{c.expert_hidden});
        emit(eb + "w2", std::vector<size_t>{c.expert_hidden, c.d_E});
        emit(eb + "b2", std::vector<size_t>{c.d_E});
    }
    emit("dref.gate.w", std::vector<size_t>{c.d_Z(), 2});
    emit("dref.gate.b", std::vector<size_t>{2});
    if (c.dapga_separate_experts)
        for (size_t d = 0; d < c.n_domains; ++d) {
            const std::string eb = "dapga.expert" + std::to_string(d) + ".";
            emit(eb + "w1", std::vector<size_t>{c.d_E, c.expert_hidden});
            emit(eb + "b1", std::vector<size_t>{c.expert_hidden});
            emit(eb + "w2", std::vector<size_t>{c.expert_hidden, c.d_E});
            emit(eb + "b2", std::vector<size_t>{c.d_E});
        }
    emit("dapga.wq", std::vector<size_t>{c.d_E, c.d_E});
    emit("dapga.wk", std::vector<size_t>{c.d_E, c.d_E});
    emit("dapga.wv", std::vector<size_t>{c.d_E, c.d_E});
    emit("emb.user", std::vector<size_t>{static_cast<size_t>(c.user_emb_rows), c.user_emb_dim});
    emit("emb.domain", std::vector<size_t>{c.n_domains, c.domain_emb_dim});
    emit("dapga.gate.w", std::vector<size_t>{c.user_emb_dim + c.domain_emb_dim, c.d_E});
    emit("dapga.gate.b", std::vector<size_t>{c.d_E});
    for (size_t d = 0; d < c.n_domains; ++d) {
        const std::string hb = "head" + std::to_string(d) + ".";
        for (const char* task : {"click", "conv"}) {
            if (std::string(task) == "conv" && !c.train_conversion_heads) continue;
            const std::string tb = hb + task + ".";
            emit(tb + "w1", std::vector<size_t>{c.d_E, c.head_hidden});
            emit(tb + "b1", std::vector<size_t>{c.head_hidden});
            emit(tb + "w2", std::vector<size_t>{c.head_hidden, 1});
            emit(tb + "b2", std::vector<size_t>{1});
        }
    }
}

bool ends_with(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

void validate(const ModelConfig& c) {
    require(c.blocks.size() >= 2, "at least two feature blocks are required");
    std::set<std::string> names;
    for (const BlockSpec& b : c.blocks) {
        require(!b.name.empty(), "block names must be non-empty");
        require(names.insert(b.name).second, "duplicate block name '" + b.name + "'");
        if (b.kind == BlockSpec::Kind::hash)
            require(b.emb_rows > 0 && b.emb_dim > 0,
                    "hash block '" + b.name + "' needs emb_rows and emb_dim");
        else
            require(b.dense_dim > 0, "dense block '" + b.name + "' needs dense_dim");
    }
    require(c.heads >= 1, "heads must be >= 1");
    require(c.d_H >= 1 && c.d_H % c.heads == 0, "d_H must be divisible by heads");
    require(c.d_G >= 1 && c.d_G % c.heads == 0, "d_G must be divisible by heads");
    require(c.L_H >= 1 && c.L_G >= 1, "L_H and L_G must be >= 1");
    require(c.m >= 1, "m must be >= 1");
    require(c.n_domains >= 2, "at least two domains are required");
    require(c.d_E >= 1, "d_E must be >= 1");
    require(c.token_mlp_hidden >= 1 && c.ffn_hidden >= 1 && c.expert_hidden >= 1 &&
                c.head_hidden >= 1,
            "hidden sizes must be >= 1");
    require(c.user_emb_rows > 0 && c.user_emb_dim > 0 && c.domain_emb_dim > 0,
            "embedding table sizes must be positive");
    if (c.use_dapga && !c.dapga_separate_experts)
        require(c.d_E == c.d_Z(),
                "expert reuse across routing and gated attention needs d_E == m*d_G; "
                "set dapga_separate_experts or align the dims");
}

const Tensor& Model::param(const std::string& name) const {
    auto it = index.find(name);
    if (it == index.end()) throw std::out_of_range("model has no parameter '" + name + "'");
    return params[it->second].value;
}

Tensor& Model::param(const std::string& name) {
    auto it = index.find(name);
    if (it == index.end()) throw std::out_of_range("model has no parameter '" + name + "'");
    return params[it->second].value;
}

uint64_t Model::param_count() const {
    uint64_t n = 0;
    for (const NamedTensor& p : params) n += p.value.numel();
    return n;
}

Model init_model(const ModelConfig& config, uint64_t seed) {
    validate(config);
    Model model;
    model.config = config;
    Rng rng(seed, 0x6d6f64656cull);  // one stream, drawn in canonical order
    for_each_param(config, [&](const std::string& name, std::vector<size_t> shape) {
        Tensor t(shape);
        const bool is_ln_gain = name.find(".ln_") != std::string::npos && ends_with(name, ".gain");
        const bool is_hidden_bias = ends_with(name, ".b1");
        const bool is_bias = ends_with(name, ".b2") || ends_with(name, ".bias") ||
                             ends_with(name, ".gate.b");
        const bool is_gate_w = name == "dapga.gate.w";
        if (is_ln_gain) {
            for (double& v : t.data) v = 1.0;
        } else if (is_hidden_bias) {
            // A small positive shift keeps relu hidden units out of the dead
            // zone at initialization; with 0.02-scale weights a zero start
            // frequently leaves whole layers inactive for a given input.
            for (double& v : t.data) v = 0.1;
        } else if (is_bias || is_gate_w) {
            // zeros: neutral gate start (gamma = 0.5) and zero output biases
        } else {
            for (double& v : t.data) v = rng.truncated_normal(0.02);
        }
        model.index.emplace(name, model.params.size());
        model.params.push_back({name, std::move(t)});
    });
    return model;
}

SampleInput sample_from_entry(const es3::RequestRecord& record, const es3::ItemEntry& entry,
                              const ModelConfig& config) {
    SampleInput s;
    s.domain_id = record.domain_id;
    s.user_hash = es3::fnv1a64("user_id=" + std::to_string(record.user_id));
    s.click_label = static_cast<double>(entry.click_label);
    s.conversion_label = static_cast<double>(entry.conversion_label);
    s.blocks.resize(config.blocks.size());
    for (size_t k = 0; k < config.blocks.size(); ++k) {
        const BlockSpec& spec = config.blocks[k];
        BlockInput& in = s.blocks[k];
        if (spec.name == "user") {
            in.ids = record.user_feature_hashes;
        } else if (spec.name == "query") {
            in.ids = record.query_feature_hashes;
        } else if (spec.name == "item") {
            in.ids = entry.feature_hashes;
        } else if (spec.name == "item_dense") {
            in.dense = entry.dense_features;
        } else if (spec.name == "context") {
            in.dense = record.context_features;
        } else if (spec.name == "domain") {
            in.ids = {record.domain_id};
        } else {
            throw std::invalid_argument("unknown feature block '" + spec.name + "'");
        }
        if (spec.kind == BlockSpec::Kind::hash && !in.dense.empty())
            throw std::invalid_argument("block '" + spec.name + "' is dense but configured as hash");
        if (spec.kind == BlockSpec::Kind::dense && !in.ids.empty())
            throw std::invalid_argument("block '" + spec.name + "' is hashed but configured as dense");
    }
    return s;
}

NodeId BoundModel::p(const std::string& name) const {
    auto it = model->index.find(name);
    if (it == model->index.end())
        throw std::out_of_range("model has no parameter '" + name + "'");
    return params[it->second];
}

BoundModel bind(const Model& model, Tape& tape) {
    BoundModel b;
    b.tape = &tape;
    b.model = &model;
    b.params.reserve(model.params.size());
    for (const NamedTensor& p : model.params) b.params.push_back(tape.param(p.value));
    return b;
}

void save_model(const Model& model, const std::string& path_prefix) {
    nncore::save_checkpoint(path_prefix, model.params);
}

Model load_model(const ModelConfig& config, const std::string& path_prefix) {
    validate(config);
    const std::vector<NamedTensor> loaded = nncore::load_checkpoint(path_prefix);
    std::unordered_map<std::string, const NamedTensor*> by_name;
    for (const NamedTensor& p : loaded) by_name.emplace(p.name, &p);
    if (by_name.size() != loaded.size())
        throw std::runtime_error("checkpoint has duplicate parameter names");

    Model model;
    model.config = config;
    size_t used = 0;
    for_each_param(config, [&](const std::string& name, std::vector<size_t> shape) {
        auto it = by_name.find(name);
        if (it == by_name.end())
            throw std::runtime_error("checkpoint is missing parameter '" + name + "'");
        if (it->second->value.shape != shape)
            throw std::runtime_error("checkpoint parameter '" + name + "' has shape " +
                                     it->second->value.shape_str() + ", config expects " +
                                     Tensor(shape).shape_str());
        ++used;
        model.index.emplace(name, model.params.size());
        model.params.push_back(*it->second);
    });
    if (used != loaded.size())
        throw std::runtime_error("checkpoint contains parameters not in this model config");
    return model;
}

}  // namespace uniscale::hhsft
