#pragma once

#include <functional>
#include <vector>

#include "uniscale/nncore/tape.hpp"

namespace uniscale::nncore {

// A forward-pass builder: given a fresh tape and the current parameter values,
// construct the computation and report the scalar loss node plus the node ids
// of the parameters (in the same order as the value vector).
struct BuiltGraph {
    NodeId loss = -1;
    std::vector<NodeId> param_nodes;
};
using GraphBuilder = std::function<BuiltGraph(Tape&, const std::vector<Tensor>&)>;

struct GradCheckResult {
    double max_rel_err = 0.0;
    size_t checked = 0;        // coordinates compared against central differences
    size_t skipped_kinks = 0;  // coordinates skipped because the probe stepped across a relu kink
};

// Compares analytic gradients (reverse sweep) against central finite
// differences, coordinate by coordinate. Relative error uses
// |fd - analytic| / max(|fd|, |analytic|, floor), after discarding
// differences smaller than the cancellation noise the central difference
// inherits from the loss magnitude. A coordinate whose two perturbed
// forwards disagree about the active side of any relu is skipped: the loss
// is only piecewise-smooth across that probe and the central difference
// says nothing useful there.
//
// Graphs containing stop_gradient nodes cannot be checked this way: the
// finite difference differentiates the true function while the tape
// deliberately reports the gradient of the stopped surrogate. Build the
// check graph without stops (they are identity in the forward pass).
GradCheckResult grad_check(const GraphBuilder& build, std::vector<Tensor> params, double eps = 1e-5,
                           double denom_floor = 1e-8);

}  // namespace uniscale::nncore
