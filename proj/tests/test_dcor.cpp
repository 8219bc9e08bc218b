#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "oracles.hpp"
#include "vfl/dcor.hpp"

using namespace vfl;
using oracles::random_tensor;

TEST_CASE("pairwise distances: hand values") {
    Tensor x1 = Tensor::matrix({{0.0}, {3.0}});
    Tensor d1 = dcor::pairwise_distances(x1, 0.0);
    CHECK(d1.at(0, 0) == 0.0);
    CHECK(d1.at(0, 1) == 3.0);
    CHECK(d1.at(1, 0) == 3.0);

    Tensor x2 = Tensor::matrix({{0.0, 0.0}, {3.0, 4.0}});
    CHECK(dcor::pairwise_distances(x2, 0.0).at(0, 1) == doctest::Approx(5.0));

    CHECK_THROWS(dcor::pairwise_distances(Tensor({1, 3}), 0.0));
}

TEST_CASE("pairwise distances match the naive double loop") {
    Rng rng(21);
    Tensor x = random_tensor({5, 3}, rng);
    Tensor lib = dcor::pairwise_distances(x, 0.0);
    Tensor ref = oracles::distances_two_loop(x, 0.0);
    CHECK(oracles::max_abs_diff(lib, ref) < 1e-12);
}

TEST_CASE("double centering") {
    Tensor constant({3, 3}, 7.5);
    Tensor centered = dcor::double_center(constant);
    for (std::size_t i = 0; i < centered.size(); ++i) CHECK(std::abs(centered[i]) < 1e-12);

    Tensor d = Tensor::matrix({{0.0, 1.0}, {1.0, 0.0}});
    Tensor a = dcor::double_center(d);
    CHECK(a.at(0, 0) == doctest::Approx(-0.5));
    CHECK(a.at(0, 1) == doctest::Approx(0.5));
    CHECK(a.at(1, 0) == doctest::Approx(0.5));
    CHECK(a.at(1, 1) == doctest::Approx(-0.5));

    Rng rng(22);
    Tensor sym({6, 6});
    for (std::size_t i = 0; i < 6; ++i)
        for (std::size_t j = i; j < 6; ++j) {
            const double v = rng.uniform();
            sym.at(i, j) = v;
            sym.at(j, i) = v;
        }
    Tensor c = dcor::double_center(sym);
    for (std::size_t i = 0; i < 6; ++i) {
        double row = 0.0, col = 0.0;
        for (std::size_t j = 0; j < 6; ++j) {
            row += c.at(i, j);
            col += c.at(j, i);
        }
        CHECK(std::abs(row) < 1e-12);
        CHECK(std::abs(col) < 1e-12);
    }

    CHECK_THROWS(dcor::double_center(Tensor({2, 3})));
}

TEST_CASE("dcor anchors") {
    Rng rng(23);
    Tensor x = random_tensor({6, 3}, rng);
    CHECK(dcor::dcor(x, x).dcor == doctest::Approx(1.0).epsilon(1e-9));

    // n=2 with distinct rows on both sides is always 1.
    Tensor a = Tensor::matrix({{0.0, 1.0}, {2.0, -1.0}});
    Tensor b = Tensor::matrix({{5.0}, {-3.0}});
    CHECK(dcor::dcor(a, b).dcor == doctest::Approx(1.0).epsilon(1e-9));

    // Points on a noiseless line are perfectly dependent.
    Tensor line_x({10, 1}), line_y({10, 1});
    for (std::size_t i = 0; i < 10; ++i) {
        line_x[i] = static_cast<double>(i) * 0.7 - 2.0;
        line_y[i] = 2.0 * line_x[i] + 1.0;
    }
    CHECK(std::abs(dcor::dcor(line_x, line_y).dcor - 1.0) < 1e-9);

    CHECK_THROWS(dcor::dcor(Tensor({4, 2}), Tensor({5, 2})));
}

TEST_CASE("independent batches give small dcor matching the naive reference") {
    Rng rng(24);
    Tensor x({64, 4}), y({64, 6});
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = rng.normal();
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = rng.normal();
    dcor::DcorResult r = dcor::dcor(x, y);
    CHECK(std::abs(r.dcor - oracles::dcor_naive(x, y)) < 1e-10);
    CHECK(r.dcor < 0.5);
}

TEST_CASE("library dcor equals the naive four-loop reference for small n") {
    Rng rng(25);
    for (int rep = 0; rep < 200; ++rep) {
        const std::size_t n = 2 + rng.below(7);   // 2..8
        const std::size_t dx = 1 + rng.below(4);
        const std::size_t dy = 1 + rng.below(4);
        Tensor x = random_tensor({n, dx}, rng, -2.0, 2.0);
        Tensor y = random_tensor({n, dy}, rng, -2.0, 2.0);
        CHECK(std::abs(dcor::dcor(x, y).dcor - oracles::dcor_naive(x, y)) < 1e-10);
    }
}

TEST_CASE("dcor symmetry is exact") {
    Rng rng(26);
    for (int rep = 0; rep < 20; ++rep) {
        Tensor x = random_tensor({12, 3}, rng);
        Tensor y = random_tensor({12, 5}, rng);
        CHECK(dcor::dcor(x, y).dcor == dcor::dcor(y, x).dcor);
    }
}

TEST_CASE("dcor invariances: translation, positive scale, rotation") {
    Rng rng(27);
    Tensor x = random_tensor({16, 4}, rng);
    Tensor y = random_tensor({16, 3}, rng);
    const double base = dcor::dcor(x, y).dcor;

    Tensor shifted = x;
    for (std::size_t i = 0; i < shifted.rows(); ++i)
        for (std::size_t j = 0; j < shifted.cols(); ++j) shifted.at(i, j) += 3.25;
    CHECK(std::abs(dcor::dcor(shifted, y).dcor - base) < 1e-9);

    Tensor scaled = x;
    for (std::size_t i = 0; i < scaled.size(); ++i) scaled[i] *= 2.75;
    CHECK(std::abs(dcor::dcor(scaled, y).dcor - base) < 1e-9);

    Tensor q = oracles::random_orthogonal(4, rng);
    Tensor rotated = oracles::matmul_reference(x, q);
    CHECK(std::abs(dcor::dcor(rotated, y).dcor - base) < 1e-9);
}

TEST_CASE("dcor stays in [0,1] over many random batches") {
    Rng rng(28);
    for (int rep = 0; rep < 1000; ++rep) {
        const std::size_t n = 2 + rng.below(15);
        Tensor x = random_tensor({n, 1 + rng.below(3)}, rng, -3.0, 3.0);
        Tensor y = random_tensor({n, 1 + rng.below(3)}, rng, -3.0, 3.0);
        const double v = dcor::dcor(x, y).dcor;
        CHECK(v >= 0.0);
        CHECK(v <= 1.0 + 1e-9);
    }
}

TEST_CASE("degenerate batches are flagged and report zero") {
    Tensor x = Tensor::matrix({{1.0, 2.0}, {1.0, 2.0}, {1.0, 2.0}});
    Tensor y = Tensor::matrix({{0.5}, {1.5}, {2.5}});
    dcor::DcorResult r = dcor::dcor(x, y);
    CHECK(r.degenerate);
    CHECK(r.dcor == 0.0);
}

TEST_CASE("log dcor loss: value anchors and clamp") {
    Rng rng(29);
    Tensor x0 = random_tensor({8, 3}, rng);
    {
        ad::Tape t;
        ad::Var x = t.input(x0);
        ad::Var y = t.input(x0, true);
        ad::Var loss = dcor::log_dcor_loss(t, x, y);
        CHECK(t.value(loss)[0] == 0.0);  // dcor(x,x) = 1 exactly through the log decomposition
    }
    {
        ad::Tape t;
        ad::Var x = t.input(x0);
        ad::Var y = t.input(Tensor({8, 2}, 1.0), true);  // constant batch: degenerate
        dcor::DcorResult r;
        ad::Var loss = dcor::log_dcor_loss(t, x, y, {}, &r);
        CHECK(r.degenerate);
        CHECK(t.value(loss)[0] == doctest::Approx(std::log(dcor::kEpsClamp)));
        Tensor g = t.backward(loss, Tensor::scalar(1.0)).at(y);
        for (std::size_t i = 0; i < g.size(); ++i) CHECK(g[i] == 0.0);
    }
}

TEST_CASE("log dcor loss gradient matches finite differences") {
    Rng rng(30);
    Tensor x0({32, 4}), y0({32, 8});
    for (std::size_t i = 0; i < x0.size(); ++i) x0[i] = rng.normal();
    for (std::size_t i = 0; i < y0.size(); ++i) y0[i] = rng.normal();

    auto loss_at = [&](const Tensor& yv) {
        ad::Tape t;
        ad::Var x = t.input(x0);
        ad::Var y = t.input(yv, true);
        return t.value(dcor::log_dcor_loss(t, x, y))[0];
    };

    ad::Tape t;
    ad::Var x = t.input(x0);
    ad::Var y = t.input(y0, true);
    ad::Var loss = dcor::log_dcor_loss(t, x, y);
    Tensor grad = t.backward(loss, Tensor::scalar(1.0)).at(y);
    Tensor fd = ad::finite_difference_gradient(loss_at, y0, 1e-5);
    CHECK(oracles::max_rel_diff(grad, fd, 1e-4) < 1e-4);
}

TEST_CASE("log dcor loss on a small pair matches finite differences") {
    Rng rng(33);
    Tensor x0({6, 3}), y0({6, 2});
    for (std::size_t i = 0; i < x0.size(); ++i) x0[i] = rng.normal();
    for (std::size_t i = 0; i < y0.size(); ++i) y0[i] = rng.normal();
    auto loss_at = [&](const Tensor& yv) {
        ad::Tape t;
        ad::Var y = t.input(yv, true);
        return t.value(dcor::log_dcor_loss(t, t.input(x0), y))[0];
    };
    ad::Tape t;
    ad::Var y = t.input(y0, true);
    ad::Var loss = dcor::log_dcor_loss(t, t.input(x0), y);
    Tensor grad = t.backward(loss, Tensor::scalar(1.0)).at(y);
    Tensor fd = ad::finite_difference_gradient(loss_at, y0, 1e-5);
    CHECK(oracles::max_rel_diff(grad, fd, 1e-4) < 1e-4);
}

TEST_CASE("raw dcor loss equals the numeric estimate") {
    Rng rng(34);
    Tensor x0({16, 3}), y0({16, 2});
    for (std::size_t i = 0; i < x0.size(); ++i) x0[i] = rng.normal();
    for (std::size_t i = 0; i < y0.size(); ++i) y0[i] = rng.normal();
    ad::Tape t;
    dcor::DcorLossOptions opt;
    opt.log_form = false;
    opt.eps_dist = 0.0;
    ad::Var loss = dcor::log_dcor_loss(t, t.input(x0), t.input(y0, true), opt);
    CHECK(t.value(loss)[0] == doctest::Approx(dcor::dcor(x0, y0).dcor).epsilon(1e-9));
}

TEST_CASE("median dcor against fresh noise decreases with batch size") {
    // Meaningful x: correlated columns, so dependence with pure noise decays
    // as the estimate sharpens with n.
    Rng rng(35);
    const std::size_t pool_n = 1200, d = 6;
    Tensor pool({pool_n, d});
    for (std::size_t i = 0; i < pool_n; ++i) {
        const double latent = rng.normal();
        for (std::size_t j = 0; j < d; ++j)
            pool.at(i, j) = latent + 0.3 * rng.normal();
    }

    std::vector<std::size_t> sizes = {16, 64, 256, 1024};
    std::vector<double> medians;
    for (std::size_t n : sizes) {
        std::vector<double> vals;
        for (int trial = 0; trial < 20; ++trial) {
            std::vector<std::size_t> rows(pool_n);
            for (std::size_t i = 0; i < pool_n; ++i) rows[i] = i;
            rng.shuffle(rows);
            Tensor x({n, d}), noise({n, d});
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < d; ++j) {
                    x.at(i, j) = pool.at(rows[i], j);
                    noise.at(i, j) = rng.normal();
                }
            vals.push_back(dcor::dcor(x, noise).dcor);
        }
        std::sort(vals.begin(), vals.end());
        medians.push_back(0.5 * (vals[9] + vals[10]));
    }
    for (std::size_t i = 0; i + 1 < medians.size(); ++i) CHECK(medians[i] > medians[i + 1]);
}
