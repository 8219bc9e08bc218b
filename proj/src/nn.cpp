#include "vfl/nn.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace vfl::nn {

std::size_t Mlp::in_dim() const {
    if (layers.empty()) throw std::logic_error("mlp: no layers");
    return layers.front().weight.rows();
}

std::size_t Mlp::out_dim() const {
    if (layers.empty()) throw std::logic_error("mlp: no layers");
    return layers.back().weight.cols();
}

std::vector<Tensor*> Mlp::parameters() {
    std::vector<Tensor*> out;
    for (auto& l : layers) {
        out.push_back(&l.weight);
        out.push_back(&l.bias);
    }
    return out;
}

std::vector<const Tensor*> Mlp::parameters() const {
    std::vector<const Tensor*> out;
    for (const auto& l : layers) {
        out.push_back(&l.weight);
        out.push_back(&l.bias);
    }
    return out;
}

Mlp make_mlp(const std::vector<std::size_t>& dims, Rng& rng) {
    if (dims.size() < 2) throw std::invalid_argument("make_mlp: need at least in and out dims");
    Mlp m;
    for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
        const std::size_t fan_in = dims[i], fan_out = dims[i + 1];
        const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        DenseLayer layer{Tensor({fan_in, fan_out}), Tensor({fan_out})};
        for (std::size_t j = 0; j < layer.weight.size(); ++j)
            layer.weight[j] = rng.uniform(-limit, limit);
        m.layers.push_back(std::move(layer));
    }
    return m;
}

std::vector<ad::Var> MlpVars::all() const {
    std::vector<ad::Var> out;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        out.push_back(weights[i]);
        out.push_back(biases[i]);
    }
    return out;
}

MlpVars bind(ad::Tape& tape, const Mlp& m) {
    MlpVars vars;
    for (const auto& l : m.layers) {
        vars.weights.push_back(tape.param(l.weight));
        vars.biases.push_back(tape.param(l.bias));
    }
    return vars;
}

ad::Var mlp_forward(ad::Tape& tape, const MlpVars& vars, ad::Var x) {
    if (vars.weights.empty()) throw std::invalid_argument("mlp_forward: unbound model");
    const std::size_t n = tape.value(x).rows();
    ad::Var h = x;
    for (std::size_t i = 0; i < vars.weights.size(); ++i) {
        h = tape.matmul(h, vars.weights[i]);
        const std::size_t out = tape.value(vars.weights[i]).cols();
        h = tape.add(h, tape.broadcast(vars.biases[i], {n, out}));
        if (i + 1 < vars.weights.size()) h = tape.relu(h);
    }
    return h;
}

Tensor mlp_apply(const Mlp& m, const Tensor& x) {
    if (m.layers.empty()) throw std::invalid_argument("mlp_apply: empty model");
    if (x.rank() != 2 || x.cols() != m.in_dim())
        throw std::invalid_argument("mlp_apply: input " + x.shape_str() + " does not match in_dim " +
                                    std::to_string(m.in_dim()));
    Tensor h = x;
    for (std::size_t li = 0; li < m.layers.size(); ++li) {
        const DenseLayer& l = m.layers[li];
        const std::size_t n = h.rows(), k = h.cols(), out = l.weight.cols();
        Tensor next({n, out});
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t kk = 0; kk < k; ++kk) {
                const double hv = h.at(i, kk);
                if (hv == 0.0) continue;
                for (std::size_t j = 0; j < out; ++j) next.at(i, j) += hv * l.weight.at(kk, j);
            }
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < out; ++j) next.at(i, j) += l.bias[j];
        if (li + 1 < m.layers.size())
            for (std::size_t i = 0; i < next.size(); ++i)
                if (next[i] < 0.0) next[i] = 0.0;
        h = std::move(next);
    }
    return h;
}

std::vector<Tensor> collect_gradients(const ad::GradientMap& map, const MlpVars& vars) {
    std::vector<Tensor> grads;
    for (std::size_t i = 0; i < vars.weights.size(); ++i) {
        grads.push_back(map.at(vars.weights[i]));
        grads.push_back(map.at(vars.biases[i]));
    }
    return grads;
}

ad::Var bce_with_logits(ad::Tape& tape, ad::Var logits, const Tensor& labels) {
    const Tensor& lv = tape.value(logits);
    if (lv.size() != labels.size())
        throw std::invalid_argument("bce_with_logits: " + std::to_string(lv.size()) +
                                    " logits vs " + std::to_string(labels.size()) + " labels");
    if (!lv.all_finite()) throw std::invalid_argument("bce_with_logits: non-finite logit");
    const std::vector<std::size_t> shape = lv.shape();
    Tensor sign(shape);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const double y = labels[i];
        if (y != 0.0 && y != 1.0)
            throw std::invalid_argument("bce_with_logits: label " + std::to_string(y) +
                                        " not in {0,1}");
        sign[i] = 1.0 - 2.0 * y;
    }
    // Per-element loss is softplus((1-2y) * l). With m = relu(z) the
    // arrangement m + log(exp(-m) + exp(z-m)) keeps both exponents <= 0 and
    // its derivative is sigmoid(z) independent of the relu subgradient
    // convention at z = 0.
    ad::Var z = tape.mul(logits, tape.input(std::move(sign)));
    ad::Var m = tape.relu(z);
    ad::Var zero = tape.input(Tensor(shape, 0.0));
    ad::Var neg_m = tape.sub(zero, m);
    ad::Var inner = tape.add(tape.exp(neg_m), tape.exp(tape.sub(z, m)));
    ad::Var per_elem = tape.add(m, tape.log(inner));
    return tape.mean(per_elem);
}

ad::Var mse_loss(ad::Tape& tape, ad::Var a, ad::Var b) {
    const Tensor& av = tape.value(a);
    const Tensor& bv = tape.value(b);
    if (!av.same_shape(bv))
        throw std::invalid_argument("mse_loss: shape mismatch " + av.shape_str() + " vs " +
                                    bv.shape_str());
    ad::Var diff = tape.sub(a, b);
    return tape.mean(tape.mul(diff, diff));
}

double mse_loss_value(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b))
        throw std::invalid_argument("mse_loss: shape mismatch " + a.shape_str() + " vs " +
                                    b.shape_str());
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        acc += d * d;
    }
    return acc / static_cast<double>(a.size());
}

void SgdState::step(std::span<Tensor* const> params, std::span<const Tensor> grads,
                    const SgdOptimizer& opt) {
    if (!(opt.learning_rate > 0.0))
        throw std::invalid_argument("sgd: learning rate must be > 0");
    if (opt.momentum < 0.0 || opt.momentum >= 1.0)
        throw std::invalid_argument("sgd: momentum must be in [0, 1)");
    if (params.size() != grads.size())
        throw std::invalid_argument("sgd: " + std::to_string(params.size()) + " params vs " +
                                    std::to_string(grads.size()) + " gradients");
    if (velocity_.empty()) {
        velocity_.reserve(params.size());
        for (const Tensor* p : params) velocity_.push_back(Tensor::zeros(p->shape()));
    }
    if (velocity_.size() != params.size())
        throw std::invalid_argument("sgd: parameter count changed under one optimizer state");
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor& p = *params[i];
        const Tensor& g = grads[i];
        if (!p.same_shape(g))
            throw std::invalid_argument("sgd: gradient shape " + g.shape_str() +
                                        " does not match parameter " + p.shape_str());
        Tensor& v = velocity_[i];
        for (std::size_t j = 0; j < p.size(); ++j) {
            v[j] = opt.momentum * v[j] + g[j];
            p[j] -= opt.learning_rate * v[j];
        }
    }
}

void sgd_step(Mlp& m, std::span<const Tensor> grads, const SgdOptimizer& opt, SgdState& state) {
    auto params = m.parameters();
    state.step(params, grads, opt);
}

}  // namespace vfl::nn
