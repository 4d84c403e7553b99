#include <doctest.h>

#include <cmath>
#include <vector>

#include "uniscale/nncore/grad_check.hpp"
#include "uniscale/nncore/tape.hpp"
#include "uniscale/rng.hpp"

using namespace uniscale::nncore;
using uniscale::Rng;

namespace {

Tensor random_tensor(std::vector<size_t> shape, Rng& rng, double scale = 1.0) {
    Tensor t(std::move(shape));
    for (double& v : t.data) v = scale * (2.0 * rng.next_double() - 1.0);
    return t;
}

// Runs grad_check and asserts every checked coordinate agrees with central
// differences to the given relative tolerance.
void expect_grads_match(const GraphBuilder& build, std::vector<Tensor> params, double tol = 1e-6) {
    GradCheckResult res = grad_check(build, std::move(params));
    INFO("max_rel_err=" << res.max_rel_err << " checked=" << res.checked
                        << " skipped=" << res.skipped_kinks);
    REQUIRE(res.checked > 0);
    CHECK(res.max_rel_err < tol);
}

}  // namespace

TEST_CASE("matmul gradients match central differences") {
    Rng rng(1);
    std::vector<Tensor> params{random_tensor({3, 4}, rng), random_tensor({4, 2}, rng)};
    expect_grads_match(
        [](Tape& t, const std::vector<Tensor>& p) {
            NodeId a = t.param(p[0]);
            NodeId b = t.param(p[1]);
            NodeId c = matmul(t, a, b);
            return BuiltGraph{sum_all(t, sigmoid(t, c)), {a, b}};
        },
        params);
}

TEST_CASE("add gradients, including row broadcast") {
    Rng rng(2);
    SUBCASE("same shape") {
        std::vector<Tensor> params{random_tensor({2, 3}, rng), random_tensor({2, 3}, rng)};
        expect_grads_match(
            [](Tape& t, const std::vector<Tensor>& p) {
                NodeId a = t.param(p[0]);
                NodeId b = t.param(p[1]);
                return BuiltGraph{sum_all(t, sigmoid(t, add(t, a, b))), {a, b}};
            },
            params);
    }
    SUBCASE("matrix plus row vector") {
        std::vector<Tensor> params{random_tensor({4, 3}, rng), random_tensor({3}, rng)};
        expect_grads_match(
            [](Tape& t, const std::vector<Tensor>& p) {
                NodeId a = t.param(p[0]);
                NodeId b = t.param(p[1]);
                return BuiltGraph{sum_all(t, sigmoid(t, add(t, a, b))), {a, b}};
            },
            params);
    }
}

TEST_CASE("add_many accumulates gradients into every term") {
    Rng rng(3);
    std::vector<Tensor> params{random_tensor({2, 2}, rng), random_tensor({2, 2}, rng),
                               random_tensor({2, 2}, rng)};
    expect_grads_match(
        [](Tape& t, const std::vector<Tensor>& p) {
            NodeId a = t.param(p[0]);
            NodeId b = t.param(p[1]);
            NodeId c = t.param(p[2]);
            return BuiltGraph{sum_all(t, sigmoid(t, add_many(t, {a, b, c}))), {a, b, c}};
        },
        params);
}

TEST_CASE("elementwise_mul and scale gradients") {
    Rng rng(4);
    std::vector<Tensor> params{random_tensor({3, 3}, rng), random_tensor({3, 3}, rng)};
    expect_grads_match(
        [](Tape& t, const std::vector<Tensor>& p) {
            NodeId a = t.param(p[0]);
            NodeId b = t.param(p[1]);
            NodeId m = elementwise_mul(t, a, b);
            return BuiltGraph{sum_all(t, sigmoid(t, scale(t, m, 0.7))), {a, b}};
        },
        params);
}

TEST_CASE("relu gradients away from the kink") {
    Rng rng(5);
    std::vector<Tensor> params{random_tensor({4, 4}, rng)};
    expect_grads_match(
        [](Tape& t, const std::vector<Tensor>& p) {
            NodeId a = t.param(p[0]);
            return BuiltGraph{sum_all(t, relu(t, a)), {a}};
        },
        params);
}

TEST_CASE("relu coordinates at the kink are skipped, not mis-checked") {
    Tensor x = Tensor::vec({0.5, 0.0, -0.5});  // middle coordinate sits exactly on the kink
    GradCheckResult res = grad_check(
        [](Tape& t, const std::vector<Tensor>& p) {
            NodeId a = t.param(p[0]);
            return BuiltGraph{sum_all(t, relu(t, a)), {a}};
        },
        {x});
    // Only the kink coordinate flips its own sign under the probe; the other
    // coordinates leave it pinned at zero on both sides, which is harmless.
    CHECK(res.skipped_kinks == 1);
    CHECK(res.checked == 2);
    CHECK(res.max_rel_err < 1e-9);
}

TEST_CASE("sigmoid gradients and closed-form values") {
    Rng rng(6);
    std::vector<Tensor> params{random_tensor({5}, rng, 3.0)};
    expect_grads_match(
        [](Tape& t, const std::vector<Tensor>& p) {
            NodeId a = t.param(p[0]);
            return BuiltGraph{sum_all(t, sigmoid(t, a)), {a}};
        },
        params);

    Tape t;
    NodeId a = t.input(Tensor::vec({0.0, std::log(3.0), -std::log(3.0)}));
    const Tensor& y = t.value(sigmoid(t, a));
    CHECK(y.at(0) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(y.at(1) == doctest::Approx(0.75).epsilon(1e-12));
    CHECK(y.at(2) == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("softmax rows sum to one and gradients match, both axes") {
    Rng rng(7);
    for (int axis : {0, 1}) {
        std::vector<Tensor> params{random_tensor({3, 4}, rng, 2.0)};
        expect_grads_match(
            [axis](Tape& t, const std::vector<Tensor>& p) {
                NodeId a = t.param(p[0]);
                NodeId s = softmax(t, a, axis);
                // Weight entries unevenly so the loss is not constant (softmax sums are).
                Tensor w({3, 4});
                for (size_t i = 0; i < w.numel(); ++i) w.data[i] = 0.1 * double(i + 1);
                NodeId wn = t.input(w);
                return BuiltGraph{sum_all(t, elementwise_mul(t, s, wn)), {a}};
            },
            params);
    }

    Tape t;
    Rng rng2(8);
    NodeId a = t.input(random_tensor({5, 6}, rng2, 4.0));
    const Tensor& row = t.value(softmax(t, a, 1));
    for (size_t r = 0; r < 5; ++r) {
        double s = 0.0;
        for (size_t c = 0; c < 6; ++c) s += row.at(r, c);
        CHECK(std::abs(s - 1.0) < 1e-12);
    }
    const Tensor& col = t.value(softmax(t, a, 0));
    for (size_t c = 0; c < 6; ++c) {
        double s = 0.0;
        for (size_t r = 0; r < 5; ++r) s += col.at(r, c);
        CHECK(std::abs(s - 1.0) < 1e-12);
    }
}

TEST_CASE("softmax of a constant vector is uniform") {
    Tape t;
    NodeId a = t.input(Tensor::vec({2.5, 2.5, 2.5, 2.5}));
    const Tensor& y = t.value(softmax(t, a, 0));
    for (size_t i = 0; i < 4; ++i) CHECK(y.at(i) == doctest::Approx(0.25).epsilon(1e-14));
}

TEST_CASE("layer_norm normalizes and gradients match") {
    Rng rng(9);
    std::vector<Tensor> params{random_tensor({3, 6}, rng), random_tensor({6}, rng),
                               random_tensor({6}, rng)};
    expect_grads_match(
        [](Tape& t, const std::vector<Tensor>& p) {
            NodeId a = t.param(p[0]);
            NodeId g = t.param(p[1]);
            NodeId b = t.param(p[2]);
            return BuiltGraph{sum_all(t, sigmoid(t, layer_norm(t, a, g, b, 1e-5))), {a, g, b}};
        },
        params, 5e-6);

    // With unit gain and zero bias each row comes out mean 0, variance ~1.
    Tape t;
    Rng rng2(10);
    NodeId a = t.input(random_tensor({4, 8}, rng2, 5.0));
    NodeId g = t.input(Tensor({8}, std::vector<double>(8, 1.0)));
    NodeId b = t.input(Tensor({8}));
    const Tensor& y = t.value(layer_norm(t, a, g, b, 1e-12));
    for (size_t r = 0; r < 4; ++r) {
        double mean = 0.0, var = 0.0;
        for (size_t c = 0; c < 8; ++c) mean += y.at(r, c);
        mean /= 8.0;
        for (size_t c = 0; c < 8; ++c) var += (y.at(r, c) - mean) * (y.at(r, c) - mean);
        var /= 8.0;
        CHECK(std::abs(mean) < 1e-12);
        CHECK(var == doctest::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("concat gradients on every supported axis") {
    Rng rng(11);
    SUBCASE("vectors") {
        std::vector<Tensor> params{random_tensor({3}, rng), random_tensor({2}, rng)};
        expect_grads_match(
            [](Tape& t, const std::vector<Tensor>& p) {
                NodeId a = t.param(p[0]);
                NodeId b = t.param(p[1]);
                return BuiltGraph{sum_all(t, sigmoid(t, concat(t, {a, b}, 0))), {a, b}};
            },
            params);
    }
    SUBCASE("matrices, stacked rows") {
        std::vector<Tensor> params{random_tensor({2, 3}, rng), random_tensor({4, 3}, rng)};
        expect_grads_match(
            [](Tape& t, const std::vector<Tensor>& p) {
                NodeId a = t.param(p[0]);
                NodeId b = t.param(p[1]);
                return BuiltGraph{sum_all(t, sigmoid(t, concat(t, {a, b}, 0))), {a, b}};
            },
            params);
    }
    SUBCASE("matrices, side by side") {
        std::vector<Tensor> params{random_tensor({3, 2}, rng), random_tensor({3, 5}, rng)};
        expect_grads_match(
            [](Tape& t, const std::vector<Tensor>& p) {
                NodeId a = t.param(p[0]);
                NodeId b = t.param(p[1]);
                return BuiltGraph{sum_all(t, sigmoid(t, concat(t, {a, b}, 1))), {a, b}};
            },
            params);
    }
}

TEST_CASE("slice, transpose, reshape gradients route to the right coordinates") {
    Rng rng(12);
    std::vector<Tensor> params{random_tensor({4, 6}, rng)};
    expect_grads_match(
        [](Tape& t, const std::vector<Tensor>& p) {
            NodeId a = t.param(p[0]);
            NodeId r = slice_rows(t, a, 1, 3);          // [2,6]
            NodeId c = slice_cols(t, r, 2, 5);          // [2,3]
            NodeId tr = transpose(t, c);                // [3,2]
            NodeId rs = reshape(t, tr, {6});            // [6]
            return BuiltGraph{sum_all(t, sigmoid(t, rs)), {a}};
        },
        params);
}

TEST_CASE("embedding_lookup scatters gradients by hashed row, with collisions") {
    Rng rng(13);
    std::vector<Tensor> params{random_tensor({5, 3}, rng)};
    // 12 % 5 == 7 % 5: two lookups collide on row 2 and their grads must add.
    std::vector<uint64_t> ids{12, 7, 0, 9};
    expect_grads_match(
        [ids](Tape& t, const std::vector<Tensor>& p) {
            NodeId tab = t.param(p[0]);
            NodeId e = embedding_lookup(t, tab, ids, 5);
            return BuiltGraph{sum_all(t, sigmoid(t, e)), {tab}};
        },
        params);
}

TEST_CASE("reduce_mean_rows and sum_all gradients") {
    Rng rng(14);
    std::vector<Tensor> params{random_tensor({4, 3}, rng)};
    expect_grads_match(
        [](Tape& t, const std::vector<Tensor>& p) {
            NodeId a = t.param(p[0]);
            return BuiltGraph{sum_all(t, sigmoid(t, reduce_mean_rows(t, a))), {a}};
        },
        params);
}

TEST_CASE("binary cross-entropy: value at zero logit, gradients, reductions") {
    Tape t;
    NodeId z = t.input(Tensor::vec({0.0, 0.0}));
    NodeId l = bce_loss(t, z, Tensor::vec({1.0, 0.0}), Reduction::Mean);
    CHECK(t.value(l).data[0] == doctest::Approx(std::log(2.0)).epsilon(1e-12));

    Rng rng(15);
    for (Reduction red : {Reduction::Mean, Reduction::Sum}) {
        std::vector<Tensor> params{random_tensor({6}, rng, 3.0)};
        Tensor labels = Tensor::vec({1, 0, 1, 1, 0, 0});
        expect_grads_match(
            [labels, red](Tape& tp, const std::vector<Tensor>& p) {
                NodeId a = tp.param(p[0]);
                return BuiltGraph{bce_loss(tp, a, labels, red), {a}};
            },
            params);
    }

    // Stability: huge logits neither overflow nor produce NaN.
    Tape t2;
    NodeId big = t2.input(Tensor::vec({500.0, -500.0}));
    NodeId lb = bce_loss(t2, big, Tensor::vec({0.0, 1.0}), Reduction::Sum);
    CHECK(t2.value(lb).data[0] == doctest::Approx(1000.0).epsilon(1e-12));

    CHECK_THROWS_AS(bce_loss(t2, big, Tensor::vec({0.5, 1.0})), std::invalid_argument);
}

TEST_CASE("scaled dot-product attention gradients through query, keys, values") {
    Rng rng(16);
    std::vector<Tensor> params{random_tensor({4}, rng), random_tensor({3, 4}, rng),
                               random_tensor({3, 5}, rng)};
    expect_grads_match(
        [](Tape& t, const std::vector<Tensor>& p) {
            NodeId q = t.param(p[0]);
            NodeId k = t.param(p[1]);
            NodeId v = t.param(p[2]);
            NodeId o = sdpa(t, q, k, v, 1.0 / 2.0);
            return BuiltGraph{sum_all(t, sigmoid(t, o)), {q, k, v}};
        },
        params);
}

TEST_CASE("a node used by two consumers accumulates both adjoints") {
    Rng rng(17);
    std::vector<Tensor> params{random_tensor({3, 3}, rng)};
    expect_grads_match(
        [](Tape& t, const std::vector<Tensor>& p) {
            NodeId a = t.param(p[0]);
            NodeId s = sigmoid(t, a);
            NodeId left = matmul(t, s, t.input(Tensor::mat(3, 2, {1, 2, 3, 4, 5, 6})));
            NodeId right = elementwise_mul(t, s, s);
            return BuiltGraph{add(t, sum_all(t, left), sum_all(t, right)), {a}};
        },
        params);
}

TEST_CASE("backward is linear in the loss") {
    Rng rng(18);
    Tensor w = random_tensor({3, 3}, rng);
    auto grads_for = [&](double c1, double c2) {
        Tape t;
        NodeId a = t.param(w);
        NodeId l1 = sum_all(t, sigmoid(t, a));
        NodeId l2 = sum_all(t, elementwise_mul(t, a, a));
        NodeId loss = add(t, scale(t, l1, c1), scale(t, l2, c2));
        t.backward(loss);
        return t.grad(a);
    };
    Tensor g10 = grads_for(1.0, 0.0);
    Tensor g01 = grads_for(0.0, 1.0);
    Tensor gmix = grads_for(2.0, -0.5);
    for (size_t i = 0; i < w.numel(); ++i)
        CHECK(gmix.data[i] == doctest::Approx(2.0 * g10.data[i] - 0.5 * g01.data[i]).epsilon(1e-12));
}

TEST_CASE("stop_gradient blocks every upstream flow exactly") {
    Rng rng(19);
    Tensor w1 = random_tensor({2, 3}, rng);
    Tensor w2 = random_tensor({2, 3}, rng);

    auto run = [&](bool use_stop) {
        Tape t;
        NodeId a = t.param(w1);
        NodeId b = t.param(w2);
        NodeId h = sigmoid(t, a);
        NodeId hh = use_stop ? stop_gradient(t, h) : h;
        NodeId loss = sum_all(t, elementwise_mul(t, hh, b));
        t.backward(loss);
        return std::pair<Tensor, Tensor>(t.grad(a), t.grad(b));
    };

    auto [ga_stopped, gb_stopped] = run(true);
    // Upstream of the stop: bitwise zero, not merely small.
    for (double v : ga_stopped.data) {
        CHECK(v == 0.0);
        CHECK(!std::signbit(v));
    }
    // Downstream parameters still learn.
    double nb = 0.0;
    for (double v : gb_stopped.data) nb += std::abs(v);
    CHECK(nb > 0.0);

    // Negative control: the same graph without the stop moves w1.
    auto [ga_open, gb_open] = run(false);
    double na = 0.0;
    for (double v : ga_open.data) na += std::abs(v);
    CHECK(na > 0.0);
    (void)gb_open;
}

TEST_CASE("stop_gradient value passes through unchanged") {
    Tape t;
    Tensor x = Tensor::vec({1.5, -2.5, 0.25});
    NodeId a = t.param(x);
    NodeId s = stop_gradient(t, a);
    for (size_t i = 0; i < x.numel(); ++i) CHECK(t.value(s).data[i] == x.data[i]);
}
