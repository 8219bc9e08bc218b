#pragma once

// Independent reference implementations used as test oracles. Everything in
// this header is deliberately written as plain loops, separate from the
// library code paths it checks.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "vfl/rng.hpp"
#include "vfl/tensor.hpp"

namespace oracles {

inline vfl::Tensor random_tensor(std::vector<std::size_t> shape, vfl::Rng& rng, double lo = -1.0,
                                 double hi = 1.0) {
    vfl::Tensor t(std::move(shape));
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
    return t;
}

// Naive two-loop mean squared error.
inline double mse_two_loop(const vfl::Tensor& a, const vfl::Tensor& b) {
    double acc = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) {
            const double d = a.at(i, j) - b.at(i, j);
            acc += d * d;
            ++count;
        }
    return acc / static_cast<double>(count);
}

// Hand matrix multiply, j-inner ordering (different from the library kernel).
inline vfl::Tensor matmul_reference(const vfl::Tensor& a, const vfl::Tensor& b) {
    vfl::Tensor out({a.rows(), b.cols()});
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < b.cols(); ++j) {
            double acc = 0.0;
            for (std::size_t k = 0; k < a.cols(); ++k) acc += a.at(i, k) * b.at(k, j);
            out.at(i, j) = acc;
        }
    return out;
}

// Naive pairwise Euclidean distances.
inline vfl::Tensor distances_two_loop(const vfl::Tensor& x, double eps) {
    const std::size_t n = x.rows();
    vfl::Tensor d({n, n});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t k = 0; k < x.cols(); ++k) {
                const double diff = x.at(i, k) - x.at(j, k);
                acc += diff * diff;
            }
            d.at(i, j) = std::sqrt(acc + eps);
        }
    return d;
}

// Fully naive biased sample distance correlation: explicit distance loops,
// explicit centering loops, explicit accumulation loops.
inline double dcor_naive(const vfl::Tensor& x, const vfl::Tensor& y) {
    const std::size_t n = x.rows();
    const vfl::Tensor dx = distances_two_loop(x, 0.0);
    const vfl::Tensor dy = distances_two_loop(y, 0.0);

    auto center = [n](const vfl::Tensor& d) {
        std::vector<double> rm(n, 0.0), cm(n, 0.0);
        double gm = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                rm[i] += d.at(i, j) / n;
                cm[j] += d.at(i, j) / n;
                gm += d.at(i, j) / (static_cast<double>(n) * n);
            }
        vfl::Tensor a({n, n});
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) a.at(i, j) = d.at(i, j) - rm[i] - cm[j] + gm;
        return a;
    };

    const vfl::Tensor a = center(dx);
    const vfl::Tensor b = center(dy);
    double dcov2 = 0.0, dvarx = 0.0, dvary = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            dcov2 += a.at(i, j) * b.at(i, j);
            dvarx += a.at(i, j) * a.at(i, j);
            dvary += b.at(i, j) * b.at(i, j);
        }
    const double n2 = static_cast<double>(n) * n;
    dcov2 /= n2;
    dvarx /= n2;
    dvary /= n2;
    if (dvarx < 1e-12 || dvary < 1e-12) return 0.0;
    return std::sqrt(dcov2 / std::sqrt(dvarx * dvary));
}

// Brute-force AUC by pair counting: (concordant + 0.5 ties) / (P * N).
inline double auc_pair_count(const std::vector<double>& scores, const std::vector<double>& labels) {
    double concordant = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (labels[i] != 1.0) continue;
        for (std::size_t j = 0; j < scores.size(); ++j) {
            if (labels[j] != 0.0) continue;
            ++pairs;
            if (scores[i] > scores[j]) concordant += 1.0;
            else if (scores[i] == scores[j]) concordant += 0.5;
        }
    }
    if (pairs == 0) throw std::invalid_argument("auc oracle: single-class labels");
    return concordant / static_cast<double>(pairs);
}

// Random orthogonal matrix via Gram-Schmidt on a Gaussian matrix.
inline vfl::Tensor random_orthogonal(std::size_t d, vfl::Rng& rng) {
    vfl::Tensor q({d, d});
    for (std::size_t i = 0; i < q.size(); ++i) q[i] = rng.normal();
    for (std::size_t c = 0; c < d; ++c) {
        for (std::size_t prev = 0; prev < c; ++prev) {
            double dot = 0.0;
            for (std::size_t r = 0; r < d; ++r) dot += q.at(r, c) * q.at(r, prev);
            for (std::size_t r = 0; r < d; ++r) q.at(r, c) -= dot * q.at(r, prev);
        }
        double norm = 0.0;
        for (std::size_t r = 0; r < d; ++r) norm += q.at(r, c) * q.at(r, c);
        norm = std::sqrt(norm);
        for (std::size_t r = 0; r < d; ++r) q.at(r, c) /= norm;
    }
    return q;
}

// Plain full-batch logistic regression fit; the utility oracle.
struct LogisticFit {
    std::vector<double> w;
    double b = 0.0;

    double score(const vfl::Tensor& x, std::size_t row) const {
        double z = b;
        for (std::size_t j = 0; j < w.size(); ++j) z += w[j] * x.at(row, j);
        return z;
    }
};

inline LogisticFit fit_logistic(const vfl::Tensor& x, const vfl::Tensor& y,
                                const std::vector<std::size_t>& rows, std::size_t epochs = 300,
                                double lr = 0.5) {
    LogisticFit fit;
    fit.w.assign(x.cols(), 0.0);
    const double inv_n = 1.0 / static_cast<double>(rows.size());
    for (std::size_t e = 0; e < epochs; ++e) {
        std::vector<double> gw(x.cols(), 0.0);
        double gb = 0.0;
        for (std::size_t r : rows) {
            double z = fit.b;
            for (std::size_t j = 0; j < x.cols(); ++j) z += fit.w[j] * x.at(r, j);
            const double p = 1.0 / (1.0 + std::exp(-z));
            const double err = p - y[r];
            for (std::size_t j = 0; j < x.cols(); ++j) gw[j] += err * x.at(r, j);
            gb += err;
        }
        for (std::size_t j = 0; j < x.cols(); ++j) fit.w[j] -= lr * inv_n * gw[j];
        fit.b -= lr * inv_n * gb;
    }
    return fit;
}

inline double max_abs_diff(const vfl::Tensor& a, const vfl::Tensor& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

inline double max_rel_diff(const vfl::Tensor& a, const vfl::Tensor& b, double floor = 1e-8) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double denom = std::max({std::abs(a[i]), std::abs(b[i]), floor});
        m = std::max(m, std::abs(a[i] - b[i]) / denom);
    }
    return m;
}

}  // namespace oracles
