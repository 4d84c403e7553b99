#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "uniscale/es3/types.hpp"
#include "uniscale/nncore/checkpoint.hpp"
#include "uniscale/nncore/tape.hpp"

namespace uniscale::hhsft {

using nncore::NamedTensor;
using nncore::NodeId;
using nncore::Tape;
using nncore::Tensor;

// One semantically coherent feature block, mapped to one token.
struct BlockSpec {
    enum class Kind { hash, dense };
    std::string name;
    Kind kind = Kind::hash;
    uint64_t emb_rows = 0;  // hash blocks: embedding table rows (modulus)
    size_t emb_dim = 0;     // hash blocks: embedding width
    size_t dense_dim = 0;   // dense blocks: raw input width
};

struct ModelConfig {
    std::vector<BlockSpec> blocks;  // token order is block order

    // Token-level attention (per-token projections and FFNs).
    size_t d_H = 16;
    size_t L_H = 1;
    // Global attention (composite projections over the concatenated tokens).
    size_t d_G = 4;
    size_t m = 2;
    size_t L_G = 1;
    size_t heads = 2;  // shared by both attention stages

    size_t n_domains = 3;
    size_t d_E = 8;  // expert output width, head input width

    size_t token_mlp_hidden = 16;
    size_t ffn_hidden = 32;
    size_t expert_hidden = 16;
    size_t head_hidden = 8;

    uint64_t user_emb_rows = 64;
    size_t user_emb_dim = 8;
    size_t domain_emb_dim = 8;

    bool use_dref = true;
    bool use_dapga = true;
    bool use_stop_gradient = true;        // negative-control switch for isolation tests
    bool dapga_dedup_current = false;     // drop the stopped copy of the current domain
    bool dapga_separate_experts = false;  // own expert copies instead of reusing routing experts
    bool use_layer_norm_residual = true;  // residual + layer norm around attention/FFN sublayers
    bool train_conversion_heads = false;

    size_t n_tokens() const { return blocks.size(); }
    size_t d_Z() const { return m * d_G; }
};

// Validates every structural invariant (divisibility by heads, block schema,
// expert reuse requiring d_E == d_Z, ...). Throws std::invalid_argument.
void validate(const ModelConfig& config);

// The model is its config plus a flat, canonically ordered parameter list.
struct Model {
    ModelConfig config;
    std::vector<NamedTensor> params;
    std::unordered_map<std::string, size_t> index;

    const Tensor& param(const std::string& name) const;
    Tensor& param(const std::string& name);
    bool has_param(const std::string& name) const { return index.count(name) > 0; }
    uint64_t param_count() const;  // total scalar count
};

// Truncated-normal(0.02) weights, zero biases, unit layer-norm gains, zero
// gate affine (the personalization gate starts neutral at 0.5).
Model init_model(const ModelConfig& config, uint64_t seed);

// One training sample: one item entry with its request context, pre-gathered
// into the config's block order.
struct BlockInput {
    std::vector<uint64_t> ids;  // hash blocks
    std::vector<double> dense;  // dense blocks
};
struct SampleInput {
    uint32_t domain_id = 0;
    uint64_t user_hash = 0;  // pre-hashed user id for the personalization gate
    double click_label = 0.0;
    double conversion_label = 0.0;
    std::vector<BlockInput> blocks;
};

// Gathers one (record, entry) pair into the block layout of `config`.
// Recognized block names: user, query, item, item_dense, context, domain.
SampleInput sample_from_entry(const es3::RequestRecord& record, const es3::ItemEntry& entry,
                              const ModelConfig& config);

// Model parameters registered on one tape; node order matches Model::params.
struct BoundModel {
    Tape* tape = nullptr;
    const Model* model = nullptr;
    std::vector<NodeId> params;

    NodeId p(const std::string& name) const;
};
BoundModel bind(const Model& model, Tape& tape);

// Normalization evidence captured during a forward pass: every attention
// matrix (row-stochastic), the expert-fusion mix, and the personalization gate.
struct ForwardTrace {
    std::vector<Tensor> attention;  // HFA/GFA per head per layer, plus the expert attention
    std::vector<Tensor> alpha;      // [1,2] softmax mixes, one per sample
    std::vector<Tensor> gamma;      // [1,d_E] sigmoid gates, one per sample
};

struct SampleLogits {
    std::vector<NodeId> click;  // one logit per domain head
    std::vector<NodeId> conv;   // empty unless conversion heads are enabled
};

// Individual stages, exposed for targeted tests. forward_sample composes them.
NodeId tokenize(const BoundModel& bound, const SampleInput& sample);           // [n, d_H]
NodeId hfa_layer(const BoundModel& bound, NodeId tokens, size_t layer,
                 ForwardTrace* trace = nullptr);                               // [n, d_H]
NodeId gfa_layer(const BoundModel& bound, NodeId flat, size_t layer,
                 ForwardTrace* trace = nullptr);                               // [1, m*d_G]
NodeId dref(const BoundModel& bound, NodeId z, uint32_t domain, ForwardTrace* trace = nullptr);
NodeId dapga(const BoundModel& bound, NodeId e, uint32_t domain, uint64_t user_hash,
             ForwardTrace* trace = nullptr);

// Full forward pass for one sample: tokenize -> token attention stack ->
// global attention stack -> expert fusion -> gated expert attention -> heads.
SampleLogits forward_sample(const BoundModel& bound, const SampleInput& sample,
                            ForwardTrace* trace = nullptr);

// Sum over samples of BCE against the sample's own-domain head only (plus the
// conversion head sum when enabled). Other heads never enter the loss.
NodeId batch_loss(const BoundModel& bound, const std::vector<SampleInput>& batch);

// Serving-style scoring: domain forced to search for routing, gating, and
// head selection. Returns sigma(search logit).
double predict_search(const Model& model, const SampleInput& sample);

// Checkpoint round-trip; loading validates names and shapes against config.
void save_model(const Model& model, const std::string& path_prefix);
Model load_model(const ModelConfig& config, const std::string& path_prefix);

}  // namespace uniscale::hhsft
