#include <cstdint>
#include <string>

#include "CLI11.hpp"
#include "vfl/cli.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Two-party split-learning simulator with reconstruction-attack defenses"};
    app.require_subcommand(1);

    vfl::cli::CommonArgs common;
    std::string checkpoint;
    std::size_t parallel = 1;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", common.config_path, "Run configuration (JSON)")
            ->required();
        cmd->add_option("--out", common.out_dir, "Output directory (overrides config and env)");
        cmd->add_option("--seed", common.seed, "Seed override");
    };

    CLI::App* train = app.add_subcommand("train", "Train the two-party model with defenses");
    add_common(train);

    CLI::App* attack = app.add_subcommand("attack", "Attack a frozen extractor checkpoint");
    attack->add_option("checkpoint", checkpoint, "Checkpoint file written by train")->required();
    add_common(attack);

    CLI::App* sweep = app.add_subcommand("sweep", "Run the config's parameter grid");
    add_common(sweep);
    sweep->add_option("--parallel", parallel, "Worker threads for sweep cells");

    CLI::App* study =
        app.add_subcommand("dcor-batch-study", "Distance correlation vs noise across batch sizes");
    add_common(study);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : vfl::cli::kExitBadInput;
    }

    if (train->parsed()) return vfl::cli::cmd_train(common);
    if (attack->parsed()) return vfl::cli::cmd_attack(common, checkpoint);
    if (sweep->parsed()) return vfl::cli::cmd_sweep(common, parallel);
    if (study->parsed()) return vfl::cli::cmd_dcor_batch_study(common);
    return vfl::cli::kExitBadInput;
}
