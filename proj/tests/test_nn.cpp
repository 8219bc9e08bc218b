#include <cmath>

#include "doctest.h"
#include "oracles.hpp"
#include "vfl/nn.hpp"

using namespace vfl;
using oracles::random_tensor;

namespace {

nn::Mlp identity_mlp(std::size_t d) {
    nn::Mlp m;
    nn::DenseLayer l{Tensor({d, d}), Tensor({d})};
    for (std::size_t i = 0; i < d; ++i) l.weight.at(i, i) = 1.0;
    m.layers.push_back(std::move(l));
    return m;
}

double bce_value(const Tensor& logits, const Tensor& labels) {
    ad::Tape t;
    ad::Var l = t.input(logits, true);
    return t.value(nn::bce_with_logits(t, l, labels))[0];
}

}  // namespace

TEST_CASE("single identity layer passes input through") {
    nn::Mlp m = identity_mlp(2);
    Tensor x = Tensor::matrix({{1.0, 2.0}});
    CHECK(nn::mlp_apply(m, x) == x);

    // Output layer is linear: negatives survive a single-layer net.
    nn::Mlp m1 = identity_mlp(1);
    Tensor neg = Tensor::matrix({{-1.0}});
    CHECK(nn::mlp_apply(m1, neg) == neg);
}

TEST_CASE("two-layer forward matches a hand matrix-multiply oracle") {
    nn::Mlp m;
    m.layers.push_back({Tensor::matrix({{1.0, -2.0, 0.5}, {0.0, 1.0, -1.0}}),
                        Tensor({3}, std::vector<double>{0.1, -0.2, 0.3})});
    m.layers.push_back({Tensor::matrix({{2.0, 0.0}, {-1.0, 1.0}, {0.5, 0.5}}),
                        Tensor({2}, std::vector<double>{0.0, 1.0})});
    Tensor x = Tensor::matrix({{1.0, 0.0}});

    // Hand computation, relu after layer 1, linear output.
    Tensor h1 = oracles::matmul_reference(x, m.layers[0].weight);
    for (std::size_t j = 0; j < 3; ++j) {
        h1[j] += m.layers[0].bias[j];
        if (h1[j] < 0.0) h1[j] = 0.0;
    }
    Tensor h2 = oracles::matmul_reference(h1, m.layers[1].weight);
    for (std::size_t j = 0; j < 2; ++j) h2[j] += m.layers[1].bias[j];

    Tensor got = nn::mlp_apply(m, x);
    CHECK(oracles::max_abs_diff(got, h2) < 1e-12);
}

TEST_CASE("tape forward equals graph-free forward bitwise") {
    Rng rng(8);
    nn::Mlp m = nn::make_mlp({5, 7, 3}, rng);
    Tensor x = random_tensor({6, 5}, rng);
    ad::Tape t;
    auto vars = nn::bind(t, m);
    ad::Var out = nn::mlp_forward(t, vars, t.input(x));
    CHECK(t.value(out) == nn::mlp_apply(m, x));
}

TEST_CASE("batched forward equals row-by-row forward exactly") {
    Rng rng(9);
    nn::Mlp m = nn::make_mlp({4, 6, 2}, rng);
    Tensor x = random_tensor({5, 4}, rng);
    Tensor batched = nn::mlp_apply(m, x);
    for (std::size_t i = 0; i < 5; ++i) {
        Tensor row({1, 4});
        for (std::size_t j = 0; j < 4; ++j) row.at(0, j) = x.at(i, j);
        Tensor single = nn::mlp_apply(m, row);
        for (std::size_t j = 0; j < 2; ++j) CHECK(single.at(0, j) == batched.at(i, j));
    }
}

TEST_CASE("mlp dimension mismatch raises") {
    Rng rng(10);
    nn::Mlp m = nn::make_mlp({4, 2}, rng);
    CHECK_THROWS(nn::mlp_apply(m, Tensor({3, 5})));
}

TEST_CASE("bce with logits: analytic anchors") {
    CHECK(bce_value(Tensor({1}, std::vector<double>{0.0}), Tensor({1}, std::vector<double>{1.0})) ==
          doctest::Approx(std::log(2.0)));
    CHECK(bce_value(Tensor({1}, std::vector<double>{0.0}), Tensor({1}, std::vector<double>{0.0})) ==
          doctest::Approx(std::log(2.0)));

    // Saturation without overflow.
    const double big = bce_value(Tensor({1}, std::vector<double>{100.0}),
                                 Tensor({1}, std::vector<double>{0.0}));
    CHECK(big == doctest::Approx(100.0));
    const double small = bce_value(Tensor({1}, std::vector<double>{100.0}),
                                   Tensor({1}, std::vector<double>{1.0}));
    CHECK(small == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(std::isfinite(big));
}

TEST_CASE("bce rejects bad inputs") {
    ad::Tape t;
    ad::Var l = t.input(Tensor({2}, std::vector<double>{0.1, 0.2}), true);
    CHECK_THROWS(nn::bce_with_logits(t, l, Tensor({2}, std::vector<double>{0.0, 0.5})));
    ad::Var inf = t.input(Tensor({1}, std::vector<double>{INFINITY}), true);
    CHECK_THROWS(nn::bce_with_logits(t, inf, Tensor({1}, std::vector<double>{1.0})));
}

TEST_CASE("bce gradient equals (sigmoid(l) - y) / n") {
    Rng rng(12);
    const std::size_t n = 7;
    Tensor logits = random_tensor({n}, rng, -4.0, 4.0);
    Tensor labels({n});
    for (std::size_t i = 0; i < n; ++i) labels[i] = rng.uniform() < 0.5 ? 0.0 : 1.0;

    ad::Tape t;
    ad::Var l = t.input(logits, true);
    ad::Var loss = nn::bce_with_logits(t, l, labels);
    Tensor grad = t.backward(loss, Tensor::scalar(1.0)).at(l);

    // Closed form from the logistic loss derivative.
    for (std::size_t i = 0; i < n; ++i) {
        const double p = 1.0 / (1.0 + std::exp(-logits[i]));
        const double expected = (p - labels[i]) / static_cast<double>(n);
        CHECK(std::abs(grad[i] - expected) / std::max(std::abs(expected), 1e-8) < 1e-6);
    }

    auto f = [&](const Tensor& lv) {
        return bce_value(lv, labels);
    };
    Tensor fd = ad::finite_difference_gradient(f, logits, 1e-5);
    CHECK(oracles::max_rel_diff(grad, fd, 1e-6) < 1e-6);
}

TEST_CASE("bce gradient is exact at logit zero") {
    ad::Tape t;
    ad::Var l = t.input(Tensor({1}, std::vector<double>{0.0}), true);
    ad::Var loss = nn::bce_with_logits(t, l, Tensor({1}, std::vector<double>{1.0}));
    CHECK(t.backward(loss, Tensor::scalar(1.0)).at(l)[0] == doctest::Approx(-0.5));
}

TEST_CASE("mse loss values") {
    Tensor a = Tensor::matrix({{0.0, 0.0}});
    Tensor b = Tensor::matrix({{3.0, 4.0}});
    CHECK(nn::mse_loss_value(a, a) == 0.0);
    CHECK(nn::mse_loss_value(a, b) == doctest::Approx(12.5));

    Rng rng(13);
    Tensor p = random_tensor({4, 3}, rng);
    Tensor q = random_tensor({4, 3}, rng);
    CHECK(std::abs(nn::mse_loss_value(p, q) - oracles::mse_two_loop(p, q)) < 1e-12);

    ad::Tape t;
    ad::Var pv = t.input(p, true);
    ad::Var qv = t.input(q);
    CHECK(std::abs(t.value(nn::mse_loss(t, pv, qv))[0] - oracles::mse_two_loop(p, q)) < 1e-12);
    CHECK_THROWS(nn::mse_loss_value(p, Tensor({3, 4})));
}

TEST_CASE("sgd step") {
    Tensor p = Tensor::scalar(1.0);
    Tensor g = Tensor::scalar(2.0);
    nn::SgdState state;
    Tensor* params[] = {&p};
    Tensor grads[] = {g};
    state.step(params, grads, {0.1, 0.0});
    CHECK(p[0] == doctest::Approx(0.8));

    Tensor zero = Tensor::scalar(0.0);
    Tensor grads0[] = {zero};
    const double before = p[0];
    state.step(params, grads0, {0.1, 0.0});
    CHECK(p[0] == before);
}

TEST_CASE("sgd momentum recurrence") {
    // v <- 0.9 v + g with g = 1, lr = 0.1: steps subtract 0.1 then 0.19.
    Tensor p = Tensor::scalar(5.0);
    nn::SgdState state;
    Tensor* params[] = {&p};
    Tensor one = Tensor::scalar(1.0);
    Tensor grads[] = {one};
    state.step(params, grads, {0.1, 0.9});
    state.step(params, grads, {0.1, 0.9});
    CHECK(p[0] == doctest::Approx(5.0 - 0.1 - 0.19));
}

TEST_CASE("sgd rejects inconsistent inputs") {
    Tensor p = Tensor::scalar(1.0);
    nn::SgdState state;
    Tensor* params[] = {&p};
    CHECK_THROWS(state.step(params, {}, {0.1, 0.0}));
    Tensor bad = Tensor({2}, 1.0);
    Tensor grads[] = {bad};
    CHECK_THROWS(state.step(params, grads, {0.1, 0.0}));
    CHECK_THROWS(state.step(params, grads, {-0.1, 0.0}));
}

TEST_CASE("one sgd step decreases a convex quadratic") {
    Rng rng(14);
    Tensor p = random_tensor({6}, rng);
    auto loss = [&]() {
        double acc = 0.0;
        for (std::size_t i = 0; i < p.size(); ++i) acc += p[i] * p[i];
        return acc;
    };
    const double before = loss();
    Tensor grad({6});
    for (std::size_t i = 0; i < 6; ++i) grad[i] = 2.0 * p[i];
    nn::SgdState state;
    Tensor* params[] = {&p};
    Tensor grads[] = {grad};
    state.step(params, grads, {1e-3, 0.0});
    CHECK(loss() < before);
}

TEST_CASE("glorot init is seeded and in range") {
    Rng a(77), b(77);
    nn::Mlp m1 = nn::make_mlp({8, 4}, a);
    nn::Mlp m2 = nn::make_mlp({8, 4}, b);
    CHECK(m1.layers[0].weight == m2.layers[0].weight);
    const double limit = std::sqrt(6.0 / 12.0);
    for (std::size_t i = 0; i < m1.layers[0].weight.size(); ++i) {
        CHECK(std::abs(m1.layers[0].weight[i]) <= limit);
    }
    for (std::size_t i = 0; i < m1.layers[0].bias.size(); ++i)
        CHECK(m1.layers[0].bias[i] == 0.0);
}
