#include "vfl/grl.hpp"

#include <stdexcept>

namespace vfl::grl {

Tensor grl_forward(const GrlNode&, const Tensor& x) { return x; }

Tensor grl_backward(const GrlNode& g, const Tensor& upstream) {
    Tensor out = upstream;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = -g.lambda * out[i];
    return out;
}

ad::Var reverse_gradient(ad::Tape& tape, ad::Var x, double lambda) {
    if (!(lambda > 0.0)) throw std::invalid_argument("grl: lambda must be > 0");
    GrlNode node{lambda};
    return tape.custom("grl", grl_forward(node, tape.value(x)), {x},
                       [node](const Tensor& up) {
                           return std::vector<Tensor>{grl_backward(node, up)};
                       });
}

}  // namespace vfl::grl
