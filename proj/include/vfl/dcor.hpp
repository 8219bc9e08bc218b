#pragma once

#include "vfl/autodiff.hpp"
#include "vfl/tensor.hpp"

namespace vfl::dcor {

// Epsilon under the square root of pairwise distances during training;
// keeps the norm differentiable when two batch rows coincide. Evaluation
// uses 0.
inline constexpr double kTrainEpsDist = 1e-12;
// Floor inside log(dCor); bounds the loss and zeroes its gradient once the
// correlation is this small.
inline constexpr double kEpsClamp = 1e-6;
// Distance variances below this mark the batch degenerate (constant rows).
inline constexpr double kDegenerateDvar = 1e-12;

struct DcorResult {
    double dcor = 0.0;     // in [0, 1] up to floating slack
    double dcov2 = 0.0;
    double dvar2_x = 0.0;
    double dvar2_y = 0.0;
    bool degenerate = false;  // either distance variance ~ 0; dcor reported as 0
};

// D[i][j] = sqrt(sum_k (x_ik - x_jk)^2 + eps_dist). Requires n >= 2.
Tensor pairwise_distances(const Tensor& x, double eps_dist = 0.0);

// Szekely double centering: A_ij = D_ij - rowmean_i - colmean_j + grandmean.
// Every row and column of the result sums to zero.
Tensor double_center(const Tensor& d);

// Biased sample distance correlation between two batches with the same row
// count (columns may differ): dcov2 = (1/n^2) sum A.B, dcor =
// sqrt(dcov2 / sqrt(dvar2_x dvar2_y)).
DcorResult dcor(const Tensor& x, const Tensor& y, double eps_dist = 0.0);

struct DcorLossOptions {
    double eps_dist = kTrainEpsDist;
    double eps_clamp = kEpsClamp;
    bool log_form = true;  // false: the raw correlation as the loss
};

// log(max(dCor(x, y), eps_clamp)) as a differentiable subgraph built from
// tape primitives. In the degenerate or clamped regime the result is a
// constant node, so the gradient is exactly zero. `result`, when given,
// receives the numeric evaluation used for the branch decision.
ad::Var log_dcor_loss(ad::Tape& tape, ad::Var x, ad::Var y, const DcorLossOptions& opt = {},
                      DcorResult* result = nullptr);

}  // namespace vfl::dcor
