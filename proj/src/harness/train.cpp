#include <cmath>
#include <stdexcept>

#include "uniscale/harness/harness.hpp"
#include "uniscale/nncore/kernels.hpp"

#ifdef UNISCALE_HAVE_OPENMP
#include <omp.h>
#endif

namespace uniscale::harness {

std::vector<hhsft::SampleInput> samples_of(const std::vector<es3::RequestRecord>& records,
                                           const hhsft::ModelConfig& cfg) {
    std::vector<hhsft::SampleInput> out;
    for (const es3::RequestRecord& r : records)
        for (const es3::ItemEntry& e : r.items) out.push_back(hhsft::sample_from_entry(r, e, cfg));
    return out;
}

TrainResult train(const hhsft::ModelConfig& mcfg, uint64_t init_seed,
                  const std::vector<hhsft::SampleInput>& samples, const TrainConfig& tcfg) {
    if (samples.empty()) throw std::invalid_argument("train: no samples");
    if (tcfg.batch_size == 0 || tcfg.shard_size == 0)
        throw std::invalid_argument("train: batch_size and shard_size must be positive");

    nncore::Adam opt(tcfg.adam);
    TrainResult result{hhsft::init_model(mcfg, init_seed), {}};
    result.losses.reserve(tcfg.steps);
    hhsft::Model& m = result.model;
    const size_t n_params = m.params.size();

    std::vector<nncore::Tensor*> param_ptrs;
    param_ptrs.reserve(n_params);
    for (auto& nt : m.params) param_ptrs.push_back(&nt.value);

    const size_t n_shards = (tcfg.batch_size + tcfg.shard_size - 1) / tcfg.shard_size;

    for (size_t step = 0; step < tcfg.steps; ++step) {
        // Per-shard forward/backward on private tapes.
        std::vector<double> shard_loss(n_shards, 0.0);
        std::vector<std::vector<nncore::Tensor>> shard_grads(n_shards);

#ifdef UNISCALE_HAVE_OPENMP
#pragma omp parallel for schedule(static) num_threads(nncore::threads())
#endif
        for (long long sh = 0; sh < static_cast<long long>(n_shards); ++sh) {
            const size_t lo = static_cast<size_t>(sh) * tcfg.shard_size;
            const size_t hi = std::min(lo + tcfg.shard_size, tcfg.batch_size);
            std::vector<hhsft::SampleInput> shard;
            shard.reserve(hi - lo);
            for (size_t i = lo; i < hi; ++i)
                shard.push_back(samples[(step * tcfg.batch_size + i) % samples.size()]);

            nncore::Tape tape;
            const hhsft::BoundModel bound = hhsft::bind(m, tape);
            const nncore::NodeId loss = hhsft::batch_loss(bound, shard);
            shard_loss[sh] = tape.value(loss).data[0];
            tape.backward(loss);
            auto& grads = shard_grads[sh];
            grads.reserve(n_params);
            for (nncore::NodeId id : bound.params) grads.push_back(tape.grad(id));
        }

        // Reduce in ascending shard order: byte-identical for any thread count.
        double loss_sum = 0.0;
        for (size_t sh = 0; sh < n_shards; ++sh) loss_sum += shard_loss[sh];
        const double batch_loss_mean = loss_sum / static_cast<double>(tcfg.batch_size);
        result.losses.push_back(batch_loss_mean);
        if (!std::isfinite(batch_loss_mean)) throw TrainDiverged(step, batch_loss_mean);

        std::vector<nncore::Tensor> grads = std::move(shard_grads[0]);
        for (size_t sh = 1; sh < n_shards; ++sh)
            for (size_t p = 0; p < n_params; ++p)
                for (size_t i = 0; i < grads[p].numel(); ++i)
                    grads[p].data[i] += shard_grads[sh][p].data[i];
        const double inv_b = 1.0 / static_cast<double>(tcfg.batch_size);
        for (auto& g : grads)
            for (double& v : g.data) v *= inv_b;

        std::vector<const nncore::Tensor*> grad_ptrs;
        grad_ptrs.reserve(n_params);
        for (const auto& g : grads) grad_ptrs.push_back(&g);
        opt.step(param_ptrs, grad_ptrs);
    }
    return result;
}

}  // namespace uniscale::harness
