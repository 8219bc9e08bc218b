#include "vfl/dcor.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace vfl::dcor {

namespace {

void check_batch(const Tensor& x, const char* op) {
    if (x.rank() != 2)
        throw std::invalid_argument(std::string(op) + ": expected [n x d] batch, got " +
                                    x.shape_str());
    if (x.rows() < 2)
        throw std::invalid_argument(std::string(op) + ": need at least 2 samples, got " +
                                    std::to_string(x.rows()));
}

double dot_mean(const Tensor& a, const Tensor& b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc / static_cast<double>(a.size());
}

// Multiply by a constant scalar via primitives.
ad::Var scale(ad::Tape& t, ad::Var v, double c) {
    return t.mul(v, t.broadcast(t.input(Tensor::scalar(c)), t.value(v).shape()));
}

// Pairwise-distance matrix on the tape: D = sqrt(relu(r 1^T + 1 r^T - 2 X X^T) + eps)
// with r the squared row norms. relu clears the tiny negatives the Gram
// form can produce for coincident rows; their true derivative there is zero.
ad::Var distances_on_tape(ad::Tape& t, ad::Var x, double eps) {
    const Tensor& xv = t.value(x);
    const std::size_t n = xv.rows(), d = xv.cols();
    ad::Var sq = t.mul(x, x);
    ad::Var ones = t.input(Tensor({d, 1}, 1.0));
    ad::Var row_norms = t.matmul(sq, ones);                       // [n x 1]
    ad::Var gram = t.matmul(x, t.transpose(x));                   // [n x n]
    ad::Var r_col = t.broadcast(row_norms, {n, n});
    ad::Var r_row = t.transpose(r_col);
    ad::Var d2 = t.sub(t.add(r_col, r_row), scale(t, gram, 2.0));
    ad::Var d2e = t.add(t.relu(d2), t.broadcast(t.input(Tensor::scalar(eps)), {n, n}));
    return t.sqrt(d2e);
}

ad::Var center_on_tape(ad::Tape& t, ad::Var dist) {
    const std::size_t n = t.value(dist).rows();
    const double inv_n = 1.0 / static_cast<double>(n);
    ad::Var ones = t.input(Tensor({n, 1}, 1.0));
    ad::Var row_means = scale(t, t.matmul(dist, ones), inv_n);               // [n x 1]
    ad::Var col_means = scale(t, t.matmul(t.transpose(dist), ones), inv_n);  // [n x 1]
    ad::Var rm = t.broadcast(row_means, {n, n});
    ad::Var cm = t.transpose(t.broadcast(col_means, {n, n}));
    ad::Var gm = t.broadcast(scale(t, t.sum(dist), inv_n * inv_n), {n, n});
    return t.add(t.sub(t.sub(dist, rm), cm), gm);
}

}  // namespace

Tensor pairwise_distances(const Tensor& x, double eps_dist) {
    check_batch(x, "pairwise_distances");
    const std::size_t n = x.rows(), d = x.cols();
    Tensor out({n, n});
    for (std::size_t i = 0; i < n; ++i) {
        out.at(i, i) = std::sqrt(eps_dist);
        for (std::size_t j = i + 1; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t k = 0; k < d; ++k) {
                const double diff = x.at(i, k) - x.at(j, k);
                acc += diff * diff;
            }
            const double dist = std::sqrt(acc + eps_dist);
            out.at(i, j) = dist;
            out.at(j, i) = dist;
        }
    }
    return out;
}

Tensor double_center(const Tensor& d) {
    if (d.rank() != 2 || d.rows() != d.cols())
        throw std::invalid_argument("double_center: expected square matrix, got " + d.shape_str());
    const std::size_t n = d.rows();
    std::vector<double> row_mean(n, 0.0), col_mean(n, 0.0);
    double grand = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            row_mean[i] += d.at(i, j);
            col_mean[j] += d.at(i, j);
            grand += d.at(i, j);
        }
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
        row_mean[i] *= inv_n;
        col_mean[i] *= inv_n;
    }
    grand *= inv_n * inv_n;
    Tensor out({n, n});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            out.at(i, j) = d.at(i, j) - row_mean[i] - col_mean[j] + grand;
    return out;
}

DcorResult dcor(const Tensor& x, const Tensor& y, double eps_dist) {
    check_batch(x, "dcor");
    check_batch(y, "dcor");
    if (x.rows() != y.rows())
        throw std::invalid_argument("dcor: batch sizes differ, " + std::to_string(x.rows()) +
                                    " vs " + std::to_string(y.rows()));
    const Tensor a = double_center(pairwise_distances(x, eps_dist));
    const Tensor b = double_center(pairwise_distances(y, eps_dist));
    DcorResult r;
    r.dcov2 = dot_mean(a, b);
    r.dvar2_x = dot_mean(a, a);
    r.dvar2_y = dot_mean(b, b);
    if (r.dvar2_x < kDegenerateDvar || r.dvar2_y < kDegenerateDvar) {
        r.degenerate = true;
        r.dcor = 0.0;
        return r;
    }
    const double ratio = r.dcov2 / std::sqrt(r.dvar2_x * r.dvar2_y);
    r.dcor = ratio > 0.0 ? std::sqrt(ratio) : 0.0;
    return r;
}

ad::Var log_dcor_loss(ad::Tape& tape, ad::Var x, ad::Var y, const DcorLossOptions& opt,
                      DcorResult* result) {
    check_batch(tape.value(x), "log_dcor_loss");
    check_batch(tape.value(y), "log_dcor_loss");
    if (tape.value(x).rows() != tape.value(y).rows())
        throw std::invalid_argument("log_dcor_loss: batch sizes differ");

    const std::size_t n = tape.value(x).rows();
    const double inv_n2 = 1.0 / (static_cast<double>(n) * static_cast<double>(n));
    ad::Var a = center_on_tape(tape, distances_on_tape(tape, x, opt.eps_dist));
    ad::Var b = center_on_tape(tape, distances_on_tape(tape, y, opt.eps_dist));
    ad::Var dcov2 = scale(tape, tape.sum(tape.mul(a, b)), inv_n2);
    ad::Var dvar2_x = scale(tape, tape.sum(tape.mul(a, a)), inv_n2);
    ad::Var dvar2_y = scale(tape, tape.sum(tape.mul(b, b)), inv_n2);

    DcorResult eval;
    eval.dcov2 = tape.value(dcov2)[0];
    eval.dvar2_x = tape.value(dvar2_x)[0];
    eval.dvar2_y = tape.value(dvar2_y)[0];
    eval.degenerate = eval.dvar2_x < kDegenerateDvar || eval.dvar2_y < kDegenerateDvar;
    if (!eval.degenerate) {
        const double ratio = eval.dcov2 / std::sqrt(eval.dvar2_x * eval.dvar2_y);
        eval.dcor = ratio > 0.0 ? std::sqrt(ratio) : 0.0;
    }
    if (result) *result = eval;

    if (eval.degenerate || eval.dcor < opt.eps_clamp) {
        // Constant node: loss bounded, gradient exactly zero.
        const double floor = opt.log_form ? std::log(opt.eps_clamp) : opt.eps_clamp;
        return tape.input(Tensor::scalar(floor));
    }

    // log dCor = 1/2 log dcov2 - 1/4 log dvar2_x - 1/4 log dvar2_y; the
    // decomposition avoids a division primitive and is exact for y = x.
    ad::Var log_dcor = tape.add(
        scale(tape, tape.log(dcov2), 0.5),
        tape.add(scale(tape, tape.log(dvar2_x), -0.25), scale(tape, tape.log(dvar2_y), -0.25)));
    return opt.log_form ? log_dcor : tape.exp(log_dcor);
}

}  // namespace vfl::dcor
