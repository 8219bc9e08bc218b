#include <cmath>

#include "doctest.h"
#include "oracles.hpp"
#include "vfl/grl.hpp"
#include "vfl/nn.hpp"

using namespace vfl;

TEST_CASE("forward is a bit-identical identity") {
    grl::GrlNode g{1.0};
    Tensor x = Tensor::matrix({{1.0, -2.0}, {0.0, 3.0}});
    CHECK(grl::grl_forward(g, x) == x);

    Tensor tiny = Tensor::matrix({{0.0}});
    CHECK(grl::grl_forward(g, tiny) == tiny);
    CHECK(grl::grl_forward(g, grl::grl_forward(g, x)) == x);
}

TEST_CASE("backward multiplies the upstream gradient by -lambda") {
    {
        grl::GrlNode g{1.0};
        Tensor up({2}, std::vector<double>{1.0, -2.0});
        Tensor out = grl::grl_backward(g, up);
        CHECK(out[0] == -1.0);
        CHECK(out[1] == 2.0);
    }
    {
        grl::GrlNode g{0.5};
        Tensor out = grl::grl_backward(g, Tensor({1}, std::vector<double>{4.0}));
        CHECK(out[0] == -2.0);
    }
    {
        grl::GrlNode g{1.0};
        Tensor out = grl::grl_backward(g, Tensor({3}, 0.0));
        for (std::size_t i = 0; i < 3; ++i) CHECK(out[i] == 0.0);
    }
}

TEST_CASE("lambda must be positive") {
    ad::Tape t;
    ad::Var x = t.input(Tensor::scalar(1.0), true);
    CHECK_THROWS(grl::reverse_gradient(t, x, 0.0));
    CHECK_THROWS(grl::reverse_gradient(t, x, -1.0));
}

TEST_CASE("end-to-end sign flip on the extractor, none on the reconstructor") {
    // L = mse(R(grl(F(x))), x): F's parameter gradients must be exactly
    // -lambda times the no-GRL run's; R's must be bit-identical.
    Rng rng(31);
    nn::Mlp f = nn::make_mlp({4, 6, 3}, rng);
    nn::Mlp r = nn::make_mlp({3, 6, 4}, rng);
    Tensor x0 = oracles::random_tensor({5, 4}, rng);

    auto run = [&](bool with_grl) {
        ad::Tape t;
        ad::Var x = t.input(x0);
        nn::MlpVars fv = nn::bind(t, f);
        nn::MlpVars rv = nn::bind(t, r);
        ad::Var emb = nn::mlp_forward(t, fv, x);
        ad::Var head_in = with_grl ? grl::reverse_gradient(t, emb, 1.0) : emb;
        ad::Var rec = nn::mlp_forward(t, rv, head_in);
        ad::Var loss = nn::mse_loss(t, rec, x);
        auto g = t.backward(loss, Tensor::scalar(1.0));
        return std::pair{nn::collect_gradients(g, fv), nn::collect_gradients(g, rv)};
    };

    auto [f_grl, r_grl] = run(true);
    auto [f_plain, r_plain] = run(false);

    for (std::size_t p = 0; p < f_grl.size(); ++p)
        for (std::size_t i = 0; i < f_grl[p].size(); ++i)
            CHECK(std::abs(f_grl[p][i] + f_plain[p][i]) < 1e-12);
    for (std::size_t p = 0; p < r_grl.size(); ++p) CHECK(r_grl[p] == r_plain[p]);
}
