#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "vfl/rng.hpp"
#include "vfl/tensor.hpp"

namespace vfl::data {

enum class Split { Train, Attack, Eval };

struct SplitFractions {
    double train = 0.8;
    double attack = 0.1;  // attacker-training split for the evaluation harness
    // eval takes the remainder
};

// Tabular dataset with passive-party features, optional active-party
// features, binary labels, and disjoint covering train/attack/eval splits
// that each contain both classes.
struct Dataset {
    Tensor x_passive;                 // [N x d_p]
    std::optional<Tensor> x_active;   // [N x d_a]
    Tensor labels;                    // [N], values in {0,1}
    std::vector<std::size_t> train_idx, attack_idx, eval_idx;

    std::size_t n() const { return labels.size(); }
    std::size_t d_passive() const { return x_passive.cols(); }
    std::size_t d_active() const { return x_active ? x_active->cols() : 0; }
    const std::vector<std::size_t>& split(Split s) const;
};

struct SyntheticSpec {
    std::size_t n = 20000;
    std::size_t d_passive = 16;
    std::size_t d_active = 0;
    std::size_t informative_dims = 8;
    double label_scale = 4.0;      // |w| multiplier; large values approach a hard halfspace
    double label_noise_std = 0.25; // logit noise before the Bernoulli draw
    double bias = 0.0;
    std::uint64_t seed = 1;
    SplitFractions splits;
};

// Gaussian features with a planted low-rank factor structure; labels drawn
// from Bernoulli(sigmoid(scale*(w.x_informative + bias) + noise)).
// Deterministic under the seed.
Dataset generate_synthetic(const SyntheticSpec& spec);

struct CsvSchema {
    std::string label_column;
    std::vector<std::string> passive_features;
    std::vector<std::string> active_features;  // may be empty
    SplitFractions splits;
    std::uint64_t shuffle_seed = 1;
};

Dataset load_csv(const std::string& path, const CsvSchema& schema);

// Writes header + rows; column order: passive features, active features,
// label. Values are shortest-round-trip formatted so a reload is
// element-identical.
void save_csv(const std::string& path, const Dataset& d, const CsvSchema& schema);

struct Standardization {
    std::vector<double> mean, stddev;  // per passive column (then active columns)
};

// Shifts/scales every split by train-split statistics, in place. Columns
// with stddev < 1e-9 are shifted only.
Standardization standardize(Dataset& d);

struct Batch {
    Tensor x_passive;
    std::optional<Tensor> x_active;
    Tensor labels;
    std::vector<std::size_t> rows;  // dataset row indices
};

// Seeded shuffling batch stream over one split; reshuffles every epoch and
// drops the short final batch so every batch has the same size.
class BatchIterator {
public:
    BatchIterator(const Dataset& d, Split split, std::size_t batch_size, std::uint64_t seed);

    Batch next();
    std::size_t batches_per_epoch() const { return order_.size() / batch_size_; }

private:
    void reshuffle();

    const Dataset* data_;
    std::size_t batch_size_;
    Rng rng_;
    std::vector<std::size_t> order_;
    std::size_t cursor_ = 0;
};

// Gathers rows of a [N x d] matrix into a batch tensor.
Tensor gather_rows(const Tensor& m, const std::vector<std::size_t>& rows);

}  // namespace vfl::data
