#include "uniscale/nncore/tape.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "uniscale/nncore/kernels.hpp"

namespace uniscale::nncore {

void Tape::backward(NodeId loss_node) {
    const Node& loss = nodes_[loss_node];
    if (loss.value.numel() != 1)
        throw std::invalid_argument("backward: loss node must be scalar, got shape " + loss.value.shape_str());

    // Mark nodes that can pass gradient toward a requires_grad leaf.
    std::vector<char> reached(nodes_.size(), 0);
    std::vector<NodeId> stack{loss_node};
    reached[loss_node] = 1;
    while (!stack.empty()) {
        NodeId id = stack.back();
        stack.pop_back();
        const Node& n = nodes_[id];
        if (n.stop_grad) continue;  // upstream of a stop gets nothing through it
        for (NodeId in : n.inputs) {
            if (!reached[in] && nodes_[in].requires_grad) {
                reached[in] = 1;
                stack.push_back(in);
            }
        }
    }

    nodes_[loss_node].grad.data[0] = 1.0;
    for (NodeId id = loss_node; id >= 0; --id) {
        Node& n = nodes_[id];
        if (!reached[id] || n.stop_grad || !n.backward) continue;
        n.backward(*this);
    }
}

namespace {

bool any_requires(const Tape& t, const std::vector<NodeId>& ids) {
    for (NodeId id : ids)
        if (t.node(id).requires_grad) return true;
    return false;
}

// Registers a node whose backward closure receives its own id, so adjoints can
// read the output value/grad without re-deriving them.
NodeId make_with_self(Tape& t, Tensor value, bool req, std::vector<NodeId> inputs,
                      std::function<void(Tape&, NodeId)> bw) {
    NodeId id = t.make(std::move(value), req, std::move(inputs));
    if (req && bw) {
        NodeId self = id;
        t.node(id).backward = [self, bw = std::move(bw)](Tape& tp) { bw(tp, self); };
    }
    return id;
}

}  // namespace

NodeId matmul(Tape& t, NodeId a, NodeId b) {
    const Tensor& A = t.value(a);
    const Tensor& B = t.value(b);
    if (A.rank() != 2 || B.rank() != 2 || A.shape[1] != B.shape[0])
        throw std::invalid_argument("matmul: incompatible shapes " + A.shape_str() + " x " + B.shape_str());
    const size_t m = A.shape[0], k = A.shape[1], n = B.shape[1];
    Tensor C({m, n});
    nncore::matmul(A.data.data(), B.data.data(), C.data.data(), m, k, n);
    return make_with_self(t, std::move(C), any_requires(t, {a, b}), {a, b},
                          [a, b, m, k, n](Tape& tp, NodeId self) {
        const Tensor& dC = tp.grad(self);
        const Tensor& A = tp.value(a);
        const Tensor& B = tp.value(b);
        if (tp.node(a).requires_grad) {
            // dA += dC * B^T: [m,n] x [n,k]
            Tensor Bt({n, k});
            for (size_t i = 0; i < k; ++i)
                for (size_t j = 0; j < n; ++j) Bt.at(j, i) = B.at(i, j);
            Tensor dA({m, k});
            nncore::matmul(dC.data.data(), Bt.data.data(), dA.data.data(), m, n, k);
            Tensor& ga = tp.grad_mut(a);
            for (size_t i = 0; i < dA.numel(); ++i) ga.data[i] += dA.data[i];
        }
        if (tp.node(b).requires_grad) {
            // dB += A^T * dC: [k,m] x [m,n]
            Tensor At({k, m});
            for (size_t i = 0; i < m; ++i)
                for (size_t j = 0; j < k; ++j) At.at(j, i) = A.at(i, j);
            Tensor dB({k, n});
            nncore::matmul(At.data.data(), dC.data.data(), dB.data.data(), k, m, n);
            Tensor& gb = tp.grad_mut(b);
            for (size_t i = 0; i < dB.numel(); ++i) gb.data[i] += dB.data[i];
        }
    });
}

NodeId add(Tape& t, NodeId a, NodeId b) {
    const Tensor& A = t.value(a);
    const Tensor& B = t.value(b);
    const bool row_bcast = A.rank() == 2 && B.rank() == 1 && A.shape[1] == B.shape[0];
    if (!row_bcast) require_same_shape(A, B, "add");
    Tensor C = A;
    if (row_bcast) {
        for (size_t i = 0; i < A.shape[0]; ++i)
            for (size_t j = 0; j < A.shape[1]; ++j) C.at(i, j) += B.at(j);
    } else {
        for (size_t i = 0; i < C.numel(); ++i) C.data[i] += B.data[i];
    }
    return make_with_self(t, std::move(C), any_requires(t, {a, b}), {a, b},
                          [a, b, row_bcast](Tape& tp, NodeId self) {
        const Tensor& d = tp.grad(self);
        if (tp.node(a).requires_grad) {
            Tensor& da = tp.grad_mut(a);
            for (size_t i = 0; i < d.numel(); ++i) da.data[i] += d.data[i];
        }
        if (tp.node(b).requires_grad) {
            Tensor& db = tp.grad_mut(b);
            if (row_bcast) {
                const size_t rows = d.shape[0], cols = d.shape[1];
                for (size_t i = 0; i < rows; ++i)
                    for (size_t j = 0; j < cols; ++j) db.at(j) += d.at(i, j);
            } else {
                for (size_t i = 0; i < d.numel(); ++i) db.data[i] += d.data[i];
            }
        }
    });
}

NodeId add_many(Tape& t, const std::vector<NodeId>& xs) {
    if (xs.empty()) throw std::invalid_argument("add_many: empty input list");
    if (xs.size() == 1) return xs[0];
    Tensor C = t.value(xs[0]);
    for (size_t i = 1; i < xs.size(); ++i) {
        require_same_shape(C, t.value(xs[i]), "add_many");
        const Tensor& X = t.value(xs[i]);
        for (size_t j = 0; j < C.numel(); ++j) C.data[j] += X.data[j];
    }
    return make_with_self(t, std::move(C), any_requires(t, xs), xs, [xs](Tape& tp, NodeId self) {
        const Tensor& d = tp.grad(self);
        for (NodeId x : xs) {
            if (!tp.node(x).requires_grad) continue;
            Tensor& dx = tp.grad_mut(x);
            for (size_t j = 0; j < d.numel(); ++j) dx.data[j] += d.data[j];
        }
    });
}

NodeId elementwise_mul(Tape& t, NodeId a, NodeId b) {
    const Tensor& A = t.value(a);
    const Tensor& B = t.value(b);
    require_same_shape(A, B, "elementwise_mul");
    Tensor C = A;
    for (size_t i = 0; i < C.numel(); ++i) C.data[i] *= B.data[i];
    return make_with_self(t, std::move(C), any_requires(t, {a, b}), {a, b}, [a, b](Tape& tp, NodeId self) {
        const Tensor& d = tp.grad(self);
        const Tensor& A = tp.value(a);
        const Tensor& B = tp.value(b);
        if (tp.node(a).requires_grad) {
            Tensor& da = tp.grad_mut(a);
            for (size_t i = 0; i < d.numel(); ++i) da.data[i] += d.data[i] * B.data[i];
        }
        if (tp.node(b).requires_grad) {
            Tensor& db = tp.grad_mut(b);
            for (size_t i = 0; i < d.numel(); ++i) db.data[i] += d.data[i] * A.data[i];
        }
    });
}

NodeId scale(Tape& t, NodeId a, double c) {
    Tensor C = t.value(a);
    for (double& v : C.data) v *= c;
    return make_with_self(t, std::move(C), t.node(a).requires_grad, {a}, [a, c](Tape& tp, NodeId self) {
        const Tensor& d = tp.grad(self);
        if (!tp.node(a).requires_grad) return;
        Tensor& da = tp.grad_mut(a);
        for (size_t i = 0; i < d.numel(); ++i) da.data[i] += c * d.data[i];
    });
}

NodeId relu(Tape& t, NodeId a) {
    Tensor C = t.value(a);
    for (double v : C.data) t.note_relu_input(v);
    for (double& v : C.data)
        if (v < 0.0) v = 0.0;
    return make_with_self(t, std::move(C), t.node(a).requires_grad, {a}, [a](Tape& tp, NodeId self) {
        const Tensor& d = tp.grad(self);
        const Tensor& X = tp.value(a);
        if (!tp.node(a).requires_grad) return;
        Tensor& da = tp.grad_mut(a);
        for (size_t i = 0; i < d.numel(); ++i)
            if (X.data[i] > 0.0) da.data[i] += d.data[i];
    });
}

NodeId sigmoid(Tape& t, NodeId a) {
    Tensor C = t.value(a);
    for (double& v : C.data) {
        if (v >= 0.0) {
            v = 1.0 / (1.0 + std::exp(-v));
        } else {
            double e = std::exp(v);
            v = e / (1.0 + e);
        }
    }
    return make_with_self(t, std::move(C), t.node(a).requires_grad, {a}, [a](Tape& tp, NodeId self) {
        const Tensor& d = tp.grad(self);
        const Tensor& Y = tp.value(self);
        if (!tp.node(a).requires_grad) return;
        Tensor& da = tp.grad_mut(a);
        for (size_t i = 0; i < d.numel(); ++i) da.data[i] += d.data[i] * Y.data[i] * (1.0 - Y.data[i]);
    });
}

namespace {

// Softmax over contiguous stretches of `span` elements with stride 1
// (axis = last). Axis-0 softmax on matrices goes through transpose views.
void softmax_rows(const double* x, double* y, size_t rows, size_t span) {
    for (size_t r = 0; r < rows; ++r) {
        const double* xi = x + r * span;
        double* yi = y + r * span;
        double mx = xi[0];
        for (size_t j = 1; j < span; ++j) mx = std::max(mx, xi[j]);
        double sum = 0.0;
        for (size_t j = 0; j < span; ++j) {
            yi[j] = std::exp(xi[j] - mx);
            sum += yi[j];
        }
        for (size_t j = 0; j < span; ++j) yi[j] /= sum;
    }
}

}  // namespace

NodeId softmax(Tape& t, NodeId a, int axis) {
    const Tensor& A = t.value(a);
    if (A.rank() == 1 && axis != 0)
        throw std::invalid_argument("softmax: axis out of range for rank-1 tensor");
    if (A.rank() == 2 && axis != 0 && axis != 1)
        throw std::invalid_argument("softmax: axis out of range for rank-2 tensor");
    if (A.rank() > 2) throw std::invalid_argument("softmax: rank > 2 unsupported");

    const bool along_cols = A.rank() == 2 && axis == 0;
    size_t rows, span;
    Tensor C(A.shape);
    if (A.rank() == 1) {
        rows = 1;
        span = A.shape[0];
        softmax_rows(A.data.data(), C.data.data(), rows, span);
    } else if (!along_cols) {
        rows = A.shape[0];
        span = A.shape[1];
        softmax_rows(A.data.data(), C.data.data(), rows, span);
    } else {
        // Normalize down each column: run row softmax on the transpose.
        rows = A.shape[1];
        span = A.shape[0];
        Tensor tmp({rows, span});
        for (size_t i = 0; i < rows; ++i)
            for (size_t j = 0; j < span; ++j) tmp.at(i, j) = A.at(j, i);
        Tensor out({rows, span});
        softmax_rows(tmp.data.data(), out.data.data(), rows, span);
        for (size_t i = 0; i < rows; ++i)
            for (size_t j = 0; j < span; ++j) C.at(j, i) = out.at(i, j);
    }
    return make_with_self(t, std::move(C), t.node(a).requires_grad, {a},
                          [a, along_cols](Tape& tp, NodeId self) {
        if (!tp.node(a).requires_grad) return;
        const Tensor& d = tp.grad(self);
        const Tensor& Y = tp.value(self);
        Tensor& da = tp.grad_mut(a);
        auto run = [&](size_t rows, size_t span, auto idx) {
            for (size_t r = 0; r < rows; ++r) {
                double dot = 0.0;
                for (size_t j = 0; j < span; ++j) dot += d.data[idx(r, j)] * Y.data[idx(r, j)];
                for (size_t j = 0; j < span; ++j) {
                    size_t i = idx(r, j);
                    da.data[i] += Y.data[i] * (d.data[i] - dot);
                }
            }
        };
        if (Y.rank() == 1) {
            run(1, Y.shape[0], [&](size_t, size_t j) { return j; });
        } else if (!along_cols) {
            size_t cols = Y.shape[1];
            run(Y.shape[0], cols, [&](size_t r, size_t j) { return r * cols + j; });
        } else {
            size_t cols = Y.shape[1];
            run(cols, Y.shape[0], [&](size_t r, size_t j) { return j * cols + r; });
        }
    });
}

NodeId layer_norm(Tape& t, NodeId a, NodeId gain, NodeId bias, double eps) {
    const Tensor& A = t.value(a);
    const Tensor& G = t.value(gain);
    const Tensor& B = t.value(bias);
    const size_t d = A.rank() == 2 ? A.shape[1] : A.shape[0];
    const size_t rows = A.rank() == 2 ? A.shape[0] : 1;
    if (G.numel() != d || B.numel() != d)
        throw std::invalid_argument("layer_norm: gain/bias length must equal last axis " + std::to_string(d));

    Tensor C(A.shape);
    Tensor xhat(A.shape);
    std::vector<double> inv_std(rows);
    for (size_t r = 0; r < rows; ++r) {
        const double* xi = A.data.data() + r * d;
        double mean = 0.0;
        for (size_t j = 0; j < d; ++j) mean += xi[j];
        mean /= static_cast<double>(d);
        double var = 0.0;
        for (size_t j = 0; j < d; ++j) {
            double v = xi[j] - mean;
            var += v * v;
        }
        var /= static_cast<double>(d);
        inv_std[r] = 1.0 / std::sqrt(var + eps);
        for (size_t j = 0; j < d; ++j) {
            double xh = (xi[j] - mean) * inv_std[r];
            xhat.data[r * d + j] = xh;
            C.data[r * d + j] = xh * G.data[j] + B.data[j];
        }
    }
    return make_with_self(t, std::move(C), any_requires(t, {a, gain, bias}), {a, gain, bias},
                          [a, gain, bias, d, rows, xhat = std::move(xhat), inv_std = std::move(inv_std)](
                              Tape& tp, NodeId self) {
        const Tensor& dY = tp.grad(self);
        const Tensor& G = tp.value(gain);
        if (tp.node(gain).requires_grad) {
            Tensor& dg = tp.grad_mut(gain);
            for (size_t r = 0; r < rows; ++r)
                for (size_t j = 0; j < d; ++j) dg.data[j] += dY.data[r * d + j] * xhat.data[r * d + j];
        }
        if (tp.node(bias).requires_grad) {
            Tensor& db = tp.grad_mut(bias);
            for (size_t r = 0; r < rows; ++r)
                for (size_t j = 0; j < d; ++j) db.data[j] += dY.data[r * d + j];
        }
        if (tp.node(a).requires_grad) {
            Tensor& da = tp.grad_mut(a);
            for (size_t r = 0; r < rows; ++r) {
                double mean_dxh = 0.0, mean_dxh_xh = 0.0;
                for (size_t j = 0; j < d; ++j) {
                    double dxh = dY.data[r * d + j] * G.data[j];
                    mean_dxh += dxh;
                    mean_dxh_xh += dxh * xhat.data[r * d + j];
                }
                mean_dxh /= static_cast<double>(d);
                mean_dxh_xh /= static_cast<double>(d);
                for (size_t j = 0; j < d; ++j) {
                    double dxh = dY.data[r * d + j] * G.data[j];
                    da.data[r * d + j] +=
                        inv_std[r] * (dxh - mean_dxh - xhat.data[r * d + j] * mean_dxh_xh);
                }
            }
        }
    });
}

NodeId concat(Tape& t, const std::vector<NodeId>& xs, int axis) {
    if (xs.empty()) throw std::invalid_argument("concat: empty input list");
    if (xs.size() == 1) return xs[0];
    const Tensor& first = t.value(xs[0]);
    const size_t rank = first.rank();
    if (rank == 1) {
        if (axis != 0) throw std::invalid_argument("concat: axis out of range for rank-1 tensors");
        size_t total = 0;
        for (NodeId x : xs) {
            if (t.value(x).rank() != 1) throw std::invalid_argument("concat: mixed ranks");
            total += t.value(x).numel();
        }
        Tensor C({total});
        size_t off = 0;
        for (NodeId x : xs) {
            const Tensor& X = t.value(x);
            std::copy(X.data.begin(), X.data.end(), C.data.begin() + off);
            off += X.numel();
        }
        return make_with_self(t, std::move(C), any_requires(t, xs), xs, [xs](Tape& tp, NodeId self) {
            const Tensor& d = tp.grad(self);
            size_t off = 0;
            for (NodeId x : xs) {
                size_t n = tp.value(x).numel();
                if (tp.node(x).requires_grad) {
                    Tensor& dx = tp.grad_mut(x);
                    for (size_t i = 0; i < n; ++i) dx.data[i] += d.data[off + i];
                }
                off += n;
            }
        });
    }
    if (rank != 2 || (axis != 0 && axis != 1))
        throw std::invalid_argument("concat: rank-2 tensors support axis 0 or 1 only");
    if (axis == 0) {
        const size_t cols = first.shape[1];
        size_t rows = 0;
        for (NodeId x : xs) {
            const Tensor& X = t.value(x);
            if (X.rank() != 2 || X.shape[1] != cols)
                throw std::invalid_argument("concat axis 0: column mismatch " + X.shape_str() + " vs " +
                                            first.shape_str());
            rows += X.shape[0];
        }
        Tensor C({rows, cols});
        size_t r0 = 0;
        for (NodeId x : xs) {
            const Tensor& X = t.value(x);
            std::copy(X.data.begin(), X.data.end(), C.data.begin() + r0 * cols);
            r0 += X.shape[0];
        }
        return make_with_self(t, std::move(C), any_requires(t, xs), xs, [xs, cols](Tape& tp, NodeId self) {
            const Tensor& d = tp.grad(self);
            size_t r0 = 0;
            for (NodeId x : xs) {
                const Tensor& X = tp.value(x);
                if (tp.node(x).requires_grad) {
                    Tensor& dx = tp.grad_mut(x);
                    for (size_t i = 0; i < X.numel(); ++i) dx.data[i] += d.data[r0 * cols + i];
                }
                r0 += X.shape[0];
            }
        });
    }
    // axis == 1
    const size_t rows = first.shape[0];
    size_t cols = 0;
    for (NodeId x : xs) {
        const Tensor& X = t.value(x);
        if (X.rank() != 2 || X.shape[0] != rows)
            throw std::invalid_argument("concat axis 1: row mismatch " + X.shape_str() + " vs " +
                                        first.shape_str());
        cols += X.shape[1];
    }
    Tensor C({rows, cols});
    size_t c0 = 0;
    for (NodeId x : xs) {
        const Tensor& X = t.value(x);
        for (size_t r = 0; r < rows; ++r)
            std::copy(X.data.begin() + r * X.shape[1], X.data.begin() + (r + 1) * X.shape[1],
                      C.data.begin() + r * cols + c0);
        c0 += X.shape[1];
    }
    return make_with_self(t, std::move(C), any_requires(t, xs), xs, [xs, rows, cols](Tape& tp, NodeId self) {
        const Tensor& d = tp.grad(self);
        size_t c0 = 0;
        for (NodeId x : xs) {
            const Tensor& X = tp.value(x);
            const size_t xc = X.shape[1];
            if (tp.node(x).requires_grad) {
                Tensor& dx = tp.grad_mut(x);
                for (size_t r = 0; r < rows; ++r)
                    for (size_t j = 0; j < xc; ++j) dx.at(r, j) += d.data[r * cols + c0 + j];
            }
            c0 += xc;
        }
    });
}

NodeId slice_rows(Tape& t, NodeId a, size_t r0, size_t r1) {
    const Tensor& A = t.value(a);
    if (A.rank() != 2 || r1 > A.shape[0] || r0 >= r1)
        throw std::invalid_argument("slice_rows: bad range on shape " + A.shape_str());
    const size_t cols = A.shape[1];
    Tensor C({r1 - r0, cols});
    std::copy(A.data.begin() + r0 * cols, A.data.begin() + r1 * cols, C.data.begin());
    return make_with_self(t, std::move(C), t.node(a).requires_grad, {a}, [a, r0, cols](Tape& tp, NodeId self) {
        if (!tp.node(a).requires_grad) return;
        const Tensor& d = tp.grad(self);
        Tensor& da = tp.grad_mut(a);
        for (size_t i = 0; i < d.numel(); ++i) da.data[r0 * cols + i] += d.data[i];
    });
}

NodeId slice_cols(Tape& t, NodeId a, size_t c0, size_t c1) {
    const Tensor& A = t.value(a);
    if (A.rank() != 2 || c1 > A.shape[1] || c0 >= c1)
        throw std::invalid_argument("slice_cols: bad range on shape " + A.shape_str());
    const size_t rows = A.shape[0], co = A.shape[1], w = c1 - c0;
    Tensor C({rows, w});
    for (size_t r = 0; r < rows; ++r)
        std::copy(A.data.begin() + r * co + c0, A.data.begin() + r * co + c1, C.data.begin() + r * w);
    return make_with_self(t, std::move(C), t.node(a).requires_grad, {a},
                          [a, c0, co, w, rows](Tape& tp, NodeId self) {
        if (!tp.node(a).requires_grad) return;
        const Tensor& d = tp.grad(self);
        Tensor& da = tp.grad_mut(a);
        for (size_t r = 0; r < rows; ++r)
            for (size_t j = 0; j < w; ++j) da.data[r * co + c0 + j] += d.data[r * w + j];
    });
}

NodeId transpose(Tape& t, NodeId a) {
    const Tensor& A = t.value(a);
    if (A.rank() != 2) throw std::invalid_argument("transpose: rank-2 only, got " + A.shape_str());
    Tensor C({A.shape[1], A.shape[0]});
    for (size_t i = 0; i < A.shape[0]; ++i)
        for (size_t j = 0; j < A.shape[1]; ++j) C.at(j, i) = A.at(i, j);
    return make_with_self(t, std::move(C), t.node(a).requires_grad, {a}, [a](Tape& tp, NodeId self) {
        if (!tp.node(a).requires_grad) return;
        const Tensor& d = tp.grad(self);
        Tensor& da = tp.grad_mut(a);
        for (size_t i = 0; i < d.shape[0]; ++i)
            for (size_t j = 0; j < d.shape[1]; ++j) da.at(j, i) += d.at(i, j);
    });
}

NodeId reshape(Tape& t, NodeId a, std::vector<size_t> shape) {
    const Tensor& A = t.value(a);
    if (Tensor::numel_of(shape) != A.numel())
        throw std::invalid_argument("reshape: element count mismatch for " + A.shape_str());
    Tensor C(std::move(shape), A.data);
    return make_with_self(t, std::move(C), t.node(a).requires_grad, {a}, [a](Tape& tp, NodeId self) {
        if (!tp.node(a).requires_grad) return;
        const Tensor& d = tp.grad(self);
        Tensor& da = tp.grad_mut(a);
        for (size_t i = 0; i < d.numel(); ++i) da.data[i] += d.data[i];
    });
}

NodeId embedding_lookup(Tape& t, NodeId table, const std::vector<uint64_t>& hash_ids, size_t modulus) {
    const Tensor& T = t.value(table);
    if (T.rank() != 2) throw std::invalid_argument("embedding_lookup: table must be rank 2");
    if (modulus != T.shape[0])
        throw std::invalid_argument("embedding_lookup: modulus " + std::to_string(modulus) +
                                    " must equal table rows " + std::to_string(T.shape[0]));
    if (hash_ids.empty()) throw std::invalid_argument("embedding_lookup: empty id list");
    const size_t d = T.shape[1];
    std::vector<size_t> rows(hash_ids.size());
    for (size_t i = 0; i < hash_ids.size(); ++i) rows[i] = static_cast<size_t>(hash_ids[i] % modulus);
    Tensor C({hash_ids.size(), d});
    for (size_t i = 0; i < rows.size(); ++i)
        std::copy(T.data.begin() + rows[i] * d, T.data.begin() + (rows[i] + 1) * d, C.data.begin() + i * d);
    return make_with_self(t, std::move(C), t.node(table).requires_grad, {table},
                          [table, rows = std::move(rows), d](Tape& tp, NodeId self) {
        if (!tp.node(table).requires_grad) return;
        const Tensor& dC = tp.grad(self);
        Tensor& dT = tp.grad_mut(table);
        for (size_t i = 0; i < rows.size(); ++i)
            for (size_t j = 0; j < d; ++j) dT.data[rows[i] * d + j] += dC.data[i * d + j];
    });
}

NodeId reduce_mean_rows(Tape& t, NodeId a) {
    const Tensor& A = t.value(a);
    if (A.rank() != 2) throw std::invalid_argument("reduce_mean_rows: rank-2 only, got " + A.shape_str());
    const size_t rows = A.shape[0], cols = A.shape[1];
    Tensor C({1, cols});
    for (size_t r = 0; r < rows; ++r)
        for (size_t j = 0; j < cols; ++j) C.data[j] += A.at(r, j);
    for (size_t j = 0; j < cols; ++j) C.data[j] /= static_cast<double>(rows);
    return make_with_self(t, std::move(C), t.node(a).requires_grad, {a}, [a, rows, cols](Tape& tp, NodeId self) {
        if (!tp.node(a).requires_grad) return;
        const Tensor& d = tp.grad(self);
        Tensor& da = tp.grad_mut(a);
        const double inv = 1.0 / static_cast<double>(rows);
        for (size_t r = 0; r < rows; ++r)
            for (size_t j = 0; j < cols; ++j) da.at(r, j) += d.data[j] * inv;
    });
}

NodeId sum_all(Tape& t, NodeId a) {
    const Tensor& A = t.value(a);
    double s = 0.0;
    for (double v : A.data) s += v;
    return make_with_self(t, Tensor::scalar(s), t.node(a).requires_grad, {a}, [a](Tape& tp, NodeId self) {
        if (!tp.node(a).requires_grad) return;
        const double d = tp.grad(self).data[0];
        Tensor& da = tp.grad_mut(a);
        for (double& v : da.data) v += d;
    });
}

NodeId stop_gradient(Tape& t, NodeId a) {
    NodeId id = t.make(t.value(a), false, {a});
    t.node(id).stop_grad = true;
    return id;
}

NodeId bce_loss(Tape& t, NodeId logits, const Tensor& labels, Reduction red) {
    const Tensor& X = t.value(logits);
    if (X.numel() != labels.numel())
        throw std::invalid_argument("bce_loss: logits " + X.shape_str() + " vs labels count " +
                                    std::to_string(labels.numel()));
    for (double y : labels.data)
        if (y != 0.0 && y != 1.0)
            throw std::invalid_argument("bce_loss: labels must be 0 or 1, got " + std::to_string(y));
    const double w = red == Reduction::Mean ? 1.0 / static_cast<double>(X.numel()) : 1.0;
    double total = 0.0;
    for (size_t i = 0; i < X.numel(); ++i) {
        const double x = X.data[i], y = labels.data[i];
        // max(x,0) - x*y + log(1 + exp(-|x|)), stable for large |x|
        total += (x > 0.0 ? x : 0.0) - x * y + std::log1p(std::exp(-std::abs(x)));
    }
    return make_with_self(t, Tensor::scalar(total * w), t.node(logits).requires_grad, {logits},
                          [logits, labels, w](Tape& tp, NodeId self) {
        if (!tp.node(logits).requires_grad) return;
        const double d = tp.grad(self).data[0];
        const Tensor& X = tp.value(logits);
        Tensor& dx = tp.grad_mut(logits);
        for (size_t i = 0; i < X.numel(); ++i) {
            const double x = X.data[i];
            double s;
            if (x >= 0.0) {
                s = 1.0 / (1.0 + std::exp(-x));
            } else {
                double e = std::exp(x);
                s = e / (1.0 + e);
            }
            dx.data[i] += d * w * (s - labels.data[i]);
        }
    });
}

NodeId sdpa(Tape& t, NodeId q, NodeId k, NodeId v, double scale_factor) {
    NodeId q2 = q;
    const Tensor& Q = t.value(q);
    if (Q.rank() == 1) q2 = reshape(t, q, {1, Q.shape[0]});
    const Tensor& K = t.value(k);
    const Tensor& V = t.value(v);
    if (K.rank() != 2 || V.rank() != 2 || K.shape[0] != V.shape[0])
        throw std::invalid_argument("sdpa: key/value row mismatch " + K.shape_str() + " vs " + V.shape_str());
    if (t.value(q2).shape[1] != K.shape[1])
        throw std::invalid_argument("sdpa: query dim " + t.value(q2).shape_str() + " vs key dim " +
                                    K.shape_str());
    NodeId scores = scale(t, matmul(t, q2, transpose(t, k)), scale_factor);  // [1, t]
    NodeId attn = softmax(t, scores, 1);
    return matmul(t, attn, v);  // [1, d_v]
}

}  // namespace uniscale::nncore
