#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "vfl/data.hpp"
#include "vfl/defense.hpp"

#include "json.hpp"

namespace vfl::cfg {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct CsvSource {
    std::string path;
    std::string label_column = "label";
    std::vector<std::string> passive_features;
    std::vector<std::string> active_features;
};

struct DatasetConfig {
    // kind "synthetic" uses `synthetic`; kind "csv" uses `csv`.
    std::string kind = "synthetic";
    data::SyntheticSpec synthetic;
    CsvSource csv;
    data::SplitFractions splits;
};

struct ModelConfig {
    std::size_t d_emb = 16;
    std::vector<std::size_t> f_hidden = {128};
    std::vector<std::size_t> h_hidden = {32};
    std::vector<std::size_t> r_hidden = {128};
};

struct OptimizerConfig {
    double learning_rate = 0.05;
    double momentum = 0.9;
};

struct TrainingConfig {
    std::size_t batches = 5000;
    std::size_t batch_size = 64;
    std::size_t eval_cadence = 500;
    std::string transport = "inproc";  // or "socket"
};

struct AttackConfig {
    std::size_t epochs = 5;
    std::size_t batch_size = 64;
    double learning_rate = 0.05;
    double momentum = 0.9;
    std::vector<std::size_t> hidden;  // empty: same as model.r_hidden
};

struct DcorStudyConfig {
    std::vector<std::size_t> batch_sizes = {16, 64, 256, 1024};
    std::size_t trials = 20;
};

struct RunConfig {
    std::uint64_t seed = 1;
    std::string out_dir = "runs/out";
    DatasetConfig dataset;
    ModelConfig model;
    OptimizerConfig optimizer;
    defense::DefenseConfig defense;
    TrainingConfig training;
    AttackConfig attack;
    // Dotted-path parameter grid for `sweep`, e.g. "defense.alpha_n": [0, 0.01].
    std::map<std::string, nlohmann::json> sweep_grid;
    DcorStudyConfig dcor_study;
};

// Strict parse: unknown keys, wrong types, and invalid values all throw
// ConfigError with the offending path.
RunConfig parse_config(const nlohmann::json& j);
RunConfig load_config_file(const std::string& path);

// Full round-trippable form with every default materialized; feeding it back
// through parse_config reproduces the run exactly.
nlohmann::ordered_json resolved_json(const RunConfig& c);

// Applies one dotted-path override ("defense.alpha_n" = 0.01) to raw JSON.
void apply_override(nlohmann::json& j, const std::string& dotted_path,
                    const nlohmann::json& value);

data::Dataset build_dataset(const RunConfig& c);

}  // namespace vfl::cfg
