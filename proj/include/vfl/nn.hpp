#pragma once

#include <span>
#include <vector>

#include "vfl/autodiff.hpp"
#include "vfl/rng.hpp"
#include "vfl/tensor.hpp"

namespace vfl::nn {

struct DenseLayer {
    Tensor weight;  // [in x out]
    Tensor bias;    // [out]
};

// Fully connected net: relu on hidden layers, identity on the output layer.
struct Mlp {
    std::vector<DenseLayer> layers;

    std::size_t in_dim() const;
    std::size_t out_dim() const;

    // All trainable tensors in a fixed order: layer0.weight, layer0.bias,
    // layer1.weight, ... Used for optimizer state and checkpoints.
    std::vector<Tensor*> parameters();
    std::vector<const Tensor*> parameters() const;
};

// Glorot-uniform weights, zero biases. dims = {in, hidden..., out}.
Mlp make_mlp(const std::vector<std::size_t>& dims, Rng& rng);

// Parameters of one Mlp registered on a tape for the current batch.
struct MlpVars {
    std::vector<ad::Var> weights;
    std::vector<ad::Var> biases;

    std::vector<ad::Var> all() const;
};

MlpVars bind(ad::Tape& tape, const Mlp& m);
ad::Var mlp_forward(ad::Tape& tape, const MlpVars& vars, ad::Var x);

// Graph-free forward pass; bitwise identical to the tape version.
Tensor mlp_apply(const Mlp& m, const Tensor& x);

// Gradients of `map` in Mlp::parameters() order. Throws if an entry is
// missing or shaped wrong.
std::vector<Tensor> collect_gradients(const ad::GradientMap& map, const MlpVars& vars);

// Mean over the batch of log(1 + exp(-l)) + (1 - y) l, assembled from tape
// primitives in an overflow-free arrangement whose gradient is exactly
// (sigmoid(l) - y) / n everywhere. Labels must be 0 or 1; logits must be
// finite.
ad::Var bce_with_logits(ad::Tape& tape, ad::Var logits, const Tensor& labels);

// Mean over all elements of (a - b)^2.
ad::Var mse_loss(ad::Tape& tape, ad::Var a, ad::Var b);
double mse_loss_value(const Tensor& a, const Tensor& b);

struct SgdOptimizer {
    double learning_rate = 0.01;
    double momentum = 0.0;  // in [0, 1)
};

// Per-model momentum buffers. step() applies v <- momentum*v + g,
// p <- p - lr*v for each parameter.
class SgdState {
public:
    void step(std::span<Tensor* const> params, std::span<const Tensor> grads,
              const SgdOptimizer& opt);

private:
    std::vector<Tensor> velocity_;
};

void sgd_step(Mlp& m, std::span<const Tensor> grads, const SgdOptimizer& opt, SgdState& state);

}  // namespace vfl::nn
