#include "uniscale/nncore/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <utility>

namespace uniscale::nncore {

namespace {

// One forward pass at the given parameter values; returns the loss value and
// the ordered log of every relu pre-activation in the graph.
std::pair<double, std::vector<double>> forward_only(const GraphBuilder& build,
                                                    const std::vector<Tensor>& params) {
    Tape t;
    BuiltGraph g = build(t, params);
    if (g.loss < 0 || t.value(g.loss).numel() != 1)
        throw std::invalid_argument("grad_check: builder must return a scalar loss node");
    return {t.value(g.loss).data[0], t.relu_inputs()};
}

// True when the two perturbed forwards disagree about the active side of any
// relu: the loss is then only piecewise-smooth across the probed interval and
// the central difference does not estimate the analytic derivative.
bool crossed_kink(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) return true;  // control flow diverged; be safe
    for (size_t i = 0; i < a.size(); ++i)
        if ((a[i] > 0.0) != (b[i] > 0.0)) return true;
    return false;
}

}  // namespace

GradCheckResult grad_check(const GraphBuilder& build, std::vector<Tensor> params, double eps,
                           double denom_floor) {
    // Analytic pass at the unperturbed point.
    Tape t;
    BuiltGraph g = build(t, params);
    if (g.loss < 0 || t.value(g.loss).numel() != 1)
        throw std::invalid_argument("grad_check: builder must return a scalar loss node");
    if (g.param_nodes.size() != params.size())
        throw std::invalid_argument("grad_check: builder returned " + std::to_string(g.param_nodes.size()) +
                                    " param nodes for " + std::to_string(params.size()) + " params");
    t.backward(g.loss);
    std::vector<Tensor> analytic;
    analytic.reserve(params.size());
    for (NodeId id : g.param_nodes) analytic.push_back(t.grad(id));

    GradCheckResult res;
    for (size_t p = 0; p < params.size(); ++p) {
        if (analytic[p].numel() != params[p].numel())
            throw std::invalid_argument("grad_check: param/grad size mismatch at index " + std::to_string(p));
        for (size_t i = 0; i < params[p].numel(); ++i) {
            const double orig = params[p].data[i];
            params[p].data[i] = orig + eps;
            auto [lp, relus_p] = forward_only(build, params);
            params[p].data[i] = orig - eps;
            auto [lm, relus_m] = forward_only(build, params);
            params[p].data[i] = orig;
            if (crossed_kink(relus_p, relus_m)) {
                ++res.skipped_kinks;
                continue;
            }
            const double fd = (lp - lm) / (2.0 * eps);
            const double an = analytic[p].data[i];
            // The central difference carries cancellation noise of order
            // ulp(loss)/(2*eps); differences inside that band say nothing
            // about the analytic gradient, so they are ignored.
            const double noise = 64.0 * std::numeric_limits<double>::epsilon() *
                                 std::max(std::abs(lp), std::abs(lm)) / (2.0 * eps);
            const double excess = std::max(0.0, std::abs(fd - an) - noise);
            const double denom = std::max({std::abs(fd), std::abs(an), denom_floor});
            res.max_rel_err = std::max(res.max_rel_err, excess / denom);
            ++res.checked;
        }
    }
    return res;
}

}  // namespace uniscale::nncore
