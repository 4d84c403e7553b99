#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "uniscale/nncore/tensor.hpp"

namespace uniscale::nncore {

// Adam with bias correction. Moment buffers are allocated on the first step
// and must see the same tensor shapes on every later step.
class Adam {
   public:
    struct Config {
        double lr = 1e-3;
        double beta1 = 0.9;
        double beta2 = 0.999;
        double eps = 1e-8;
    };

    Adam() : cfg_() {}
    explicit Adam(const Config& cfg) : cfg_(cfg) {}

    void step(const std::vector<Tensor*>& params, const std::vector<const Tensor*>& grads) {
        if (params.size() != grads.size())
            throw std::invalid_argument("adam: param/grad count mismatch");
        if (m_.empty()) {
            for (const Tensor* p : params) {
                m_.emplace_back(p->shape);
                v_.emplace_back(p->shape);
            }
        }
        if (m_.size() != params.size()) throw std::invalid_argument("adam: param count changed between steps");
        ++t_;
        const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
        for (size_t p = 0; p < params.size(); ++p) {
            Tensor& param = *params[p];
            const Tensor& g = *grads[p];
            require_same_shape(param, m_[p], "adam");
            require_same_shape(param, g, "adam");
            for (size_t i = 0; i < param.numel(); ++i) {
                const double gi = g.data[i];
                m_[p].data[i] = cfg_.beta1 * m_[p].data[i] + (1.0 - cfg_.beta1) * gi;
                v_[p].data[i] = cfg_.beta2 * v_[p].data[i] + (1.0 - cfg_.beta2) * gi * gi;
                const double mhat = m_[p].data[i] / bc1;
                const double vhat = v_[p].data[i] / bc2;
                param.data[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
            }
        }
    }

    int64_t steps_taken() const { return t_; }
    const Config& config() const { return cfg_; }

   private:
    Config cfg_;
    int64_t t_ = 0;
    std::vector<Tensor> m_;
    std::vector<Tensor> v_;
};

}  // namespace uniscale::nncore
