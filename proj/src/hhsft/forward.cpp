#include <cmath>
#include <stdexcept>
#include <string>

#include "uniscale/hhsft/hhsft.hpp"

namespace uniscale::hhsft {

using namespace uniscale::nncore;

namespace {

constexpr double kLnEps = 1e-5;

NodeId mlp2(Tape& t, NodeId x, NodeId w1, NodeId b1, NodeId w2, NodeId b2) {
    const NodeId hidden = relu(t, add(t, matmul(t, x, w1), b1));
    return add(t, matmul(t, hidden, w2), b2);
}

NodeId mlp2p(const BoundModel& b, NodeId x, const std::string& prefix) {
    return mlp2(*b.tape, x, b.p(prefix + ".w1"), b.p(prefix + ".b1"), b.p(prefix + ".w2"),
                b.p(prefix + ".b2"));
}

// Multi-head self-attention over pre-projected Q, K, V of shape [rows, d].
// Heads are contiguous column slices; every head's attention matrix is
// row-stochastic and lands in the trace.
NodeId mhsa(Tape& t, NodeId q, NodeId k, NodeId v, size_t heads, ForwardTrace* trace) {
    const size_t d = t.value(q).shape[1];
    const size_t dh = d / heads;
    std::vector<NodeId> outs;
    outs.reserve(heads);
    for (size_t h = 0; h < heads; ++h) {
        const NodeId qh = slice_cols(t, q, h * dh, (h + 1) * dh);
        const NodeId kh = slice_cols(t, k, h * dh, (h + 1) * dh);
        const NodeId vh = slice_cols(t, v, h * dh, (h + 1) * dh);
        const NodeId scores =
            scale(t, matmul(t, qh, transpose(t, kh)), 1.0 / std::sqrt(static_cast<double>(dh)));
        const NodeId attn = softmax(t, scores, 1);
        if (trace) trace->attention.push_back(t.value(attn));
        outs.push_back(matmul(t, attn, vh));
    }
    return heads == 1 ? outs[0] : concat(t, outs, 1);
}

}  // namespace

// Feature blocks to the [n, d_H] token matrix.
NodeId tokenize(const BoundModel& b, const SampleInput& s) {
    const ModelConfig& c = b.model->config;
    Tape& t = *b.tape;
    if (s.blocks.size() != c.blocks.size())
        throw std::invalid_argument("sample has " + std::to_string(s.blocks.size()) +
                                    " blocks, model expects " + std::to_string(c.blocks.size()));
    std::vector<NodeId> rows;
    rows.reserve(c.blocks.size());
    for (size_t k = 0; k < c.blocks.size(); ++k) {
        const BlockSpec& spec = c.blocks[k];
        const BlockInput& in = s.blocks[k];
        NodeId x;
        if (spec.kind == BlockSpec::Kind::hash) {
            if (in.ids.empty())
                throw std::invalid_argument("hash block '" + spec.name + "' has no feature ids");
            const NodeId table = b.p("tok." + spec.name + ".emb");
            x = reduce_mean_rows(t, embedding_lookup(t, table, in.ids, spec.emb_rows));
        } else {
            if (in.dense.size() != spec.dense_dim)
                throw std::invalid_argument("dense block '" + spec.name + "' has " +
                                            std::to_string(in.dense.size()) + " values, expected " +
                                            std::to_string(spec.dense_dim));
            x = t.input(Tensor({1, spec.dense_dim}, in.dense));
        }
        rows.push_back(mlp2p(b, x, "tok." + spec.name));
    }
    return concat(t, rows, 0);
}

// One token-attention layer: token-specific projections, MHSA, per-token FFN,
// optionally wrapped in residual + layer norm.
NodeId hfa_layer(const BoundModel& b, NodeId tokens, size_t layer, ForwardTrace* trace) {
    const ModelConfig& c = b.model->config;
    Tape& t = *b.tape;
    const size_t n = c.n_tokens();
    const std::string lb = "hfa" + std::to_string(layer) + ".";

    std::vector<NodeId> qr, kr, vr;
    qr.reserve(n);
    kr.reserve(n);
    vr.reserve(n);
    for (size_t i = 0; i < n; ++i) {
        const std::string tb = lb + "tok" + std::to_string(i) + ".";
        const NodeId row = slice_rows(t, tokens, i, i + 1);
        qr.push_back(matmul(t, row, b.p(tb + "wq")));
        kr.push_back(matmul(t, row, b.p(tb + "wk")));
        vr.push_back(matmul(t, row, b.p(tb + "wv")));
    }
    const NodeId attn_out = mhsa(t, concat(t, qr, 0), concat(t, kr, 0), concat(t, vr, 0),
                                 c.heads, trace);

    const NodeId base =
        c.use_layer_norm_residual
            ? layer_norm(t, add(t, tokens, attn_out), b.p(lb + "ln_attn.gain"),
                         b.p(lb + "ln_attn.bias"), kLnEps)
            : attn_out;

    std::vector<NodeId> ffn_rows;
    ffn_rows.reserve(n);
    for (size_t i = 0; i < n; ++i) {
        const NodeId row = slice_rows(t, base, i, i + 1);
        ffn_rows.push_back(mlp2p(b, row, lb + "tok" + std::to_string(i) + ".ffn"));
    }
    const NodeId ffn_out = concat(t, ffn_rows, 0);
    return c.use_layer_norm_residual
               ? layer_norm(t, add(t, base, ffn_out), b.p(lb + "ln_ffn.gain"),
                            b.p(lb + "ln_ffn.bias"), kLnEps)
               : ffn_out;
}

// One global-attention layer over the flattened representation [1, d_in]:
// m composite-projected tokens, MHSA, concat, global FFN. Returns [1, m*d_G].
NodeId gfa_layer(const BoundModel& b, NodeId flat, size_t layer, ForwardTrace* trace) {
    const ModelConfig& c = b.model->config;
    Tape& t = *b.tape;
    const std::string lb = "gfa" + std::to_string(layer) + ".";

    std::vector<NodeId> qr, kr, vr;
    for (size_t j = 0; j < c.m; ++j) {
        const std::string tb = lb + "tok" + std::to_string(j) + ".";
        qr.push_back(matmul(t, flat, b.p(tb + "wq")));
        kr.push_back(matmul(t, flat, b.p(tb + "wk")));
        vr.push_back(matmul(t, flat, b.p(tb + "wv")));
    }
    const NodeId values = concat(t, vr, 0);  // [m, d_G]
    const NodeId attn_out = mhsa(t, concat(t, qr, 0), concat(t, kr, 0), values, c.heads, trace);

    // The layer input lives in a different width, so the attention residual
    // is taken against the value tokens rather than the raw input.
    const NodeId base =
        c.use_layer_norm_residual
            ? layer_norm(t, add(t, values, attn_out), b.p(lb + "ln_attn.gain"),
                         b.p(lb + "ln_attn.bias"), kLnEps)
            : attn_out;
    const NodeId flat2 = reshape(t, base, {1, c.d_Z()});
    const NodeId ffn_out = mlp2p(b, flat2, lb + "ffn");
    return c.use_layer_norm_residual
               ? layer_norm(t, add(t, flat2, ffn_out), b.p(lb + "ln_ffn.gain"),
                            b.p(lb + "ln_ffn.bias"), kLnEps)
               : ffn_out;
}

// Routing-expert fusion: shared expert always, own-domain expert gated in by a
// sample-level softmax. Other domains' experts are not evaluated here at all.
NodeId dref(const BoundModel& b, NodeId z, uint32_t domain, ForwardTrace* trace) {
    const ModelConfig& c = b.model->config;
    Tape& t = *b.tape;
    const NodeId shared = mlp2p(b, z, "expert.shared");
    if (!c.use_dref) return shared;

    const NodeId gate_logits = add(t, matmul(t, z, b.p("dref.gate.w")), b.p("dref.gate.b"));
    const NodeId alpha = softmax(t, gate_logits, 1);  // [1,2]
    if (trace) trace->alpha.push_back(t.value(alpha));
    const NodeId alpha_s = slice_cols(t, alpha, 0, 1);
    const NodeId alpha_d = slice_cols(t, alpha, 1, 2);
    const NodeId own = mlp2p(b, z, "expert.domain" + std::to_string(domain));
    return add(t, matmul(t, alpha_s, shared), matmul(t, alpha_d, own));
}

// Gated cross-domain expert attention: every domain expert forwards on e, all
// but the current one behind stop_gradient; the current domain queries the
// stack, and a user+domain sigmoid gate modulates the result element-wise.
NodeId dapga(const BoundModel& b, NodeId e, uint32_t domain, uint64_t user_hash,
             ForwardTrace* trace) {
    const ModelConfig& c = b.model->config;
    Tape& t = *b.tape;
    if (!c.use_dapga) return e;

    std::vector<NodeId> expert_out(c.n_domains);
    for (size_t d = 0; d < c.n_domains; ++d) {
        const std::string prefix = c.dapga_separate_experts
                                       ? "dapga.expert" + std::to_string(d)
                                       : "expert.domain" + std::to_string(d);
        expert_out[d] = mlp2p(b, e, prefix);
    }
    const NodeId o_cur = expert_out[domain];

    std::vector<NodeId> rows;
    rows.reserve(c.n_domains + 1);
    rows.push_back(o_cur);
    for (size_t d = 0; d < c.n_domains; ++d) {
        if (c.dapga_dedup_current && d == domain) continue;
        rows.push_back(c.use_stop_gradient ? stop_gradient(t, expert_out[d]) : expert_out[d]);
    }
    const NodeId stack = concat(t, rows, 0);

    const NodeId q = matmul(t, o_cur, b.p("dapga.wq"));
    const NodeId k = matmul(t, stack, b.p("dapga.wk"));
    const NodeId v = matmul(t, stack, b.p("dapga.wv"));
    const NodeId scores =
        scale(t, matmul(t, q, transpose(t, k)), 1.0 / std::sqrt(static_cast<double>(c.d_E)));
    const NodeId attn = softmax(t, scores, 1);
    if (trace) trace->attention.push_back(t.value(attn));
    const NodeId attended = matmul(t, attn, v);

    const NodeId user_emb =
        embedding_lookup(t, b.p("emb.user"), {user_hash}, c.user_emb_rows);
    const NodeId domain_emb = embedding_lookup(t, b.p("emb.domain"), {domain}, c.n_domains);
    const NodeId gate_in = concat(t, {user_emb, domain_emb}, 1);
    const NodeId gamma =
        sigmoid(t, add(t, matmul(t, gate_in, b.p("dapga.gate.w")), b.p("dapga.gate.b")));
    if (trace) trace->gamma.push_back(t.value(gamma));
    return elementwise_mul(t, gamma, attended);
}

SampleLogits forward_sample(const BoundModel& bound, const SampleInput& sample,
                            ForwardTrace* trace) {
    const ModelConfig& c = bound.model->config;
    if (sample.domain_id >= c.n_domains)
        throw std::out_of_range("sample routed to domain " + std::to_string(sample.domain_id) +
                                " but the model has " + std::to_string(c.n_domains));

    NodeId tokens = tokenize(bound, sample);
    for (size_t l = 0; l < c.L_H; ++l) tokens = hfa_layer(bound, tokens, l, trace);
    NodeId flat = reshape(*bound.tape, tokens, {1, c.n_tokens() * c.d_H});
    for (size_t l = 0; l < c.L_G; ++l) flat = gfa_layer(bound, flat, l, trace);

    const NodeId fused = dref(bound, flat, sample.domain_id, trace);
    const NodeId rep = dapga(bound, fused, sample.domain_id, sample.user_hash, trace);

    SampleLogits out;
    out.click.reserve(c.n_domains);
    for (size_t d = 0; d < c.n_domains; ++d)
        out.click.push_back(mlp2p(bound, rep, "head" + std::to_string(d) + ".click"));
    if (c.train_conversion_heads) {
        out.conv.reserve(c.n_domains);
        for (size_t d = 0; d < c.n_domains; ++d)
            out.conv.push_back(mlp2p(bound, rep, "head" + std::to_string(d) + ".conv"));
    }
    return out;
}

NodeId batch_loss(const BoundModel& bound, const std::vector<SampleInput>& batch) {
    if (batch.empty()) throw std::invalid_argument("batch_loss: empty batch");
    Tape& t = *bound.tape;
    std::vector<NodeId> terms;
    terms.reserve(batch.size());
    for (const SampleInput& s : batch) {
        const SampleLogits logits = forward_sample(bound, s);
        // Loss masking: only the sample's own domain head contributes.
        NodeId term = bce_loss(t, logits.click[s.domain_id],
                               Tensor({1, 1}, {s.click_label}), Reduction::Sum);
        if (bound.model->config.train_conversion_heads) {
            const NodeId conv = bce_loss(t, logits.conv[s.domain_id],
                                         Tensor({1, 1}, {s.conversion_label}), Reduction::Sum);
            term = add(t, term, conv);
        }
        terms.push_back(term);
    }
    return add_many(t, terms);
}

double predict_search(const Model& model, const SampleInput& sample) {
    Tape tape;
    const BoundModel bound = bind(model, tape);
    SampleInput routed = sample;
    routed.domain_id = 0;  // search
    const SampleLogits logits = forward_sample(bound, routed);
    const double x = tape.value(logits.click[0]).data[0];
    // Numerically stable sigmoid.
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double ex = std::exp(x);
    return ex / (1.0 + ex);
}

}  // namespace uniscale::hhsft
