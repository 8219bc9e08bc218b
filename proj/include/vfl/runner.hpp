#pragma once

#include <optional>
#include <vector>

#include "vfl/attack_eval.hpp"
#include "vfl/config.hpp"
#include "vfl/data.hpp"
#include "vfl/nn.hpp"
#include "vfl/protocol.hpp"

namespace vfl::run {

struct TrainOutput {
    std::vector<eval::MetricsRecord> metrics;
    nn::Mlp f;
    nn::Mlp h;
    std::optional<nn::Mlp> r;
};

// Drives the lockstep two-party loop over the configured number of batches,
// evaluating privacy/utility at the configured cadence (plus an initial
// record at step 0 whenever any training happens). The dataset is
// standardized in place first. Deterministic: one seed fixes everything.
TrainOutput run_training(const cfg::RunConfig& config, data::Dataset& dataset);

// Convenience: builds the dataset from the config, then trains.
TrainOutput run_training(const cfg::RunConfig& config);

// Trains a fresh independent reconstructor against the given frozen
// extractor and evaluates it (the `attack` subcommand's core).
eval::MetricsRecord run_attack(const cfg::RunConfig& config, const nn::Mlp& extractor,
                               const nn::Mlp& predictor, data::Dataset& dataset);

}  // namespace vfl::run
