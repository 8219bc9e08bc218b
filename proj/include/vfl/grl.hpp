#pragma once

#include "vfl/autodiff.hpp"

namespace vfl::grl {

// Gradient reversal layer: identity in the forward pass, multiplies the
// upstream gradient by -lambda in the backward pass. Inserting it between
// the feature extractor and an adversarial head turns joint gradient
// descent into ascent on the extractor.
struct GrlNode {
    double lambda = 1.0;
};

// Forward: bit-identical copy of the input.
Tensor grl_forward(const GrlNode& g, const Tensor& x);

// Backward: -lambda * upstream, elementwise.
Tensor grl_backward(const GrlNode& g, const Tensor& upstream);

// Tape node combining the two rules. lambda must be > 0.
ad::Var reverse_gradient(ad::Tape& tape, ad::Var x, double lambda = 1.0);

}  // namespace vfl::grl
