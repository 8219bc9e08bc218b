#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "vfl/data.hpp"
#include "vfl/defense.hpp"
#include "vfl/nn.hpp"
#include "vfl/rng.hpp"

namespace vfl::eval {

// One privacy/utility snapshot. Inactive loss terms are recorded as 0.
struct MetricsRecord {
    std::uint64_t step = 0;
    double l_c = 0.0;
    double l_r = 0.0;
    double l_n = 0.0;
    double l_d = 0.0;
    double attacker_mse = 0.0;
    double dcor_x_fx = 0.0;
    double auc = 0.0;
};

class UndefinedAucError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Mann-Whitney AUC with midrank tie handling:
// (#concordant pairs + 0.5 #ties) / (#pos * #neg). Throws UndefinedAucError
// when only one class is present.
double eval_auc(std::span<const double> scores, std::span<const double> labels);

struct AttackOptions {
    std::size_t epochs = 5;
    std::size_t batch_size = 64;
    double learning_rate = 0.05;
    double momentum = 0.9;
    std::vector<std::size_t> hidden;  // reconstructor hidden dims; defaults to {128}
    // Embedding noise the attacker observes, matching the defender's
    // baseline perturbation (0 = clean embeddings).
    double embedding_noise_std = 0.0;
};

// Trains a fresh reconstructor against the frozen extractor on the attack
// split, minimizing mse(R_I(F(x)), x). F is never modified.
nn::Mlp train_independent_reconstructor(const nn::Mlp& extractor, const data::Dataset& d,
                                        const AttackOptions& opt, Rng rng);

// mse(R_I(F(x_eval)), x_eval); larger means less is recoverable.
double eval_reconstruction_mse(const nn::Mlp& reconstructor, const nn::Mlp& extractor,
                               const Tensor& x_eval);

struct EvalOptions {
    std::size_t batch_size = 64;
    double embedding_noise_std = 0.0;
    std::uint64_t noise_seed = 0;  // seeds eval-time embedding noise draws
};

// Averages attacker MSE, dCor(X, F(X)) (eps_dist = 0), and AUC over the
// full-size batches of the eval split. Throws if the split yields none.
MetricsRecord run_evaluation(const nn::Mlp& extractor, const nn::Mlp& predictor,
                             const nn::Mlp& reconstructor, const data::Dataset& d,
                             const EvalOptions& opt);

// Metrics files: JSON-lines (one record per line) and CSV with a header,
// fields in declaration order.
void write_metrics_jsonl(const std::string& path, std::span<const MetricsRecord> records);
void write_metrics_csv(const std::string& path, std::span<const MetricsRecord> records);

}  // namespace vfl::eval
