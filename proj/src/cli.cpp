#include "vfl/cli.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <thread>

#include "vfl/checkpoint.hpp"
#include "vfl/config.hpp"
#include "vfl/dcor.hpp"
#include "vfl/runner.hpp"

namespace vfl::cli {

namespace fs = std::filesystem;

namespace {

std::string fmt(double v) {
    char buf[32];
    auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    if (ec != std::errc()) throw std::runtime_error("cli: formatting failure");
    return std::string(buf, p);
}

cfg::RunConfig load_with_overrides(const CommonArgs& args) {
    cfg::RunConfig c = cfg::load_config_file(args.config_path);
    if (args.seed) c.seed = *args.seed;
    if (args.out_dir) {
        c.out_dir = *args.out_dir;
    } else if (const char* env = std::getenv(kOutDirEnv); env && *env) {
        c.out_dir = env;
    }
    return c;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cli: cannot write " + path.string());
    out << text;
}

void write_run_outputs(const fs::path& dir, const cfg::RunConfig& c,
                       const run::TrainOutput& result) {
    fs::create_directories(dir);
    eval::write_metrics_jsonl((dir / "metrics.jsonl").string(), result.metrics);
    eval::write_metrics_csv((dir / "metrics.csv").string(), result.metrics);
    write_text(dir / "resolved_config.json", cfg::resolved_json(c).dump(2) + "\n");
    std::vector<std::pair<std::string, const nn::Mlp*>> models{{"f", &result.f}, {"h", &result.h}};
    if (result.r) models.emplace_back("r", &*result.r);
    nn::save_models((dir / "model.ckpt").string(), models);
}

// Distinguishes config/input mistakes (exit 2) from runtime failures (1).
template <typename Fn>
int guarded(Fn&& fn) {
    try {
        return fn();
    } catch (const cfg::ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitBadInput;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
}

}  // namespace

int cmd_train(const CommonArgs& args) {
    return guarded([&] {
        const cfg::RunConfig c = load_with_overrides(args);
        run::TrainOutput result = run::run_training(c);
        write_run_outputs(c.out_dir, c, result);
        std::cout << "train: wrote " << result.metrics.size() << " metric records to " << c.out_dir
                  << '\n';
        return kExitOk;
    });
}

int cmd_attack(const CommonArgs& args, const std::string& checkpoint_path) {
    return guarded([&] {
        const cfg::RunConfig c = load_with_overrides(args);
        if (!fs::exists(checkpoint_path))
            throw cfg::ConfigError("attack: checkpoint not found: " + checkpoint_path);

        nn::Mlp extractor = nn::load_model(checkpoint_path, "f");
        nn::Mlp predictor = nn::load_model(checkpoint_path, "h");

        data::Dataset dataset = cfg::build_dataset(c);
        data::standardize(dataset);
        if (extractor.in_dim() != dataset.d_passive())
            throw cfg::ConfigError("attack: extractor expects " +
                                   std::to_string(extractor.in_dim()) + " features, dataset has " +
                                   std::to_string(dataset.d_passive()));
        if (predictor.in_dim() != extractor.out_dim() + dataset.d_active())
            throw cfg::ConfigError("attack: predictor expects " +
                                   std::to_string(predictor.in_dim()) + " inputs, checkpoint F emits " +
                                   std::to_string(extractor.out_dim()));

        const eval::MetricsRecord rec = run::run_attack(c, extractor, predictor, dataset);
        fs::create_directories(c.out_dir);
        nlohmann::ordered_json report;
        report["checkpoint"] = checkpoint_path;
        report["attacker_mse"] = rec.attacker_mse;
        report["dcor_x_fx"] = rec.dcor_x_fx;
        report["auc"] = rec.auc;
        write_text(fs::path(c.out_dir) / "attack_report.json", report.dump(2) + "\n");
        std::cout << "attack: mse=" << fmt(rec.attacker_mse) << " dcor=" << fmt(rec.dcor_x_fx)
                  << " auc=" << fmt(rec.auc) << '\n';
        return kExitOk;
    });
}

int cmd_sweep(const CommonArgs& args, std::size_t parallel) {
    return guarded([&] {
        const cfg::RunConfig base = load_with_overrides(args);
        if (base.sweep_grid.empty())
            throw cfg::ConfigError("sweep: config has no sweep.grid entries");

        // Cross product in deterministic order: keys sorted (std::map),
        // values in listed order.
        std::vector<std::string> keys;
        for (const auto& [k, v] : base.sweep_grid) keys.push_back(k);
        std::vector<std::size_t> sizes;
        std::size_t cells = 1;
        for (const auto& k : keys) {
            sizes.push_back(base.sweep_grid.at(k).size());
            cells *= sizes.back();
        }

        std::ifstream in(args.config_path);
        nlohmann::json base_json;
        in >> base_json;
        base_json.erase("sweep");

        struct Cell {
            std::vector<std::pair<std::string, nlohmann::json>> overrides;
            std::string status = "ok";
            eval::MetricsRecord final{};
        };
        std::vector<Cell> results(cells);

        const fs::path out_root = base.out_dir;
        fs::create_directories(out_root);

        std::atomic<std::size_t> next{0};
        auto worker = [&] {
            for (;;) {
                const std::size_t cell = next.fetch_add(1);
                if (cell >= cells) return;
                Cell& r = results[cell];
                try {
                    nlohmann::json cell_json = base_json;
                    std::size_t rem = cell;
                    for (std::size_t k = 0; k < keys.size(); ++k) {
                        const auto& values = base.sweep_grid.at(keys[k]);
                        const nlohmann::json& v = values.at(rem % sizes[k]);
                        rem /= sizes[k];
                        cfg::apply_override(cell_json, keys[k], v);
                        r.overrides.emplace_back(keys[k], v);
                    }
                    cfg::RunConfig cc = cfg::parse_config(cell_json);
                    if (args.seed) cc.seed = *args.seed;
                    cc.out_dir = (out_root / ("cell_" + std::to_string(cell))).string();
                    run::TrainOutput res = run::run_training(cc);
                    write_run_outputs(cc.out_dir, cc, res);
                    if (res.metrics.empty())
                        throw std::runtime_error("sweep: cell produced no metrics");
                    r.final = res.metrics.back();
                } catch (const std::exception& e) {
                    r.status = std::string("failed: ") + e.what();
                }
            }
        };

        const std::size_t workers = std::max<std::size_t>(1, std::min(parallel, cells));
        std::vector<std::thread> pool;
        for (std::size_t i = 0; i + 1 < workers; ++i) pool.emplace_back(worker);
        worker();
        for (auto& t : pool) t.join();

        std::ofstream summary(out_root / "summary.csv");
        if (!summary) throw std::runtime_error("sweep: cannot write summary.csv");
        summary << "cell";
        for (const auto& k : keys) summary << ',' << k;
        summary << ",status,attacker_mse,dcor_x_fx,auc\n";
        std::size_t failures = 0;
        for (std::size_t cell = 0; cell < cells; ++cell) {
            const Cell& r = results[cell];
            summary << cell;
            for (const auto& [k, v] : r.overrides) summary << ',' << v.dump();
            summary << ',' << (r.status == "ok" ? "ok" : "failed") << ','
                    << fmt(r.final.attacker_mse) << ',' << fmt(r.final.dcor_x_fx) << ','
                    << fmt(r.final.auc) << '\n';
            if (r.status != "ok") {
                ++failures;
                std::cerr << "sweep cell " << cell << " " << r.status << '\n';
            }
        }
        std::cout << "sweep: " << cells - failures << "/" << cells << " cells finished, summary at "
                  << (out_root / "summary.csv") << '\n';
        return kExitOk;
    });
}

int cmd_dcor_batch_study(const CommonArgs& args) {
    return guarded([&] {
        const cfg::RunConfig c = load_with_overrides(args);
        data::Dataset dataset = cfg::build_dataset(c);
        data::standardize(dataset);

        const std::size_t pool = dataset.n();
        for (std::size_t n : c.dcor_study.batch_sizes)
            if (n > pool)
                throw cfg::ConfigError("dcor-batch-study: batch size " + std::to_string(n) +
                                       " exceeds dataset size " + std::to_string(pool));

        Rng rng = Rng(c.seed).fork(77);
        fs::create_directories(c.out_dir);
        std::ofstream out(fs::path(c.out_dir) / "dcor_batch_study.csv");
        if (!out) throw std::runtime_error("dcor-batch-study: cannot write output");
        out << "batch_size,median_dcor,q1,q3,trials\n";

        std::vector<std::size_t> rows(pool);
        for (std::size_t i = 0; i < pool; ++i) rows[i] = i;

        for (std::size_t n : c.dcor_study.batch_sizes) {
            std::vector<double> vals;
            vals.reserve(c.dcor_study.trials);
            for (std::size_t trial = 0; trial < c.dcor_study.trials; ++trial) {
                rng.shuffle(rows);
                std::vector<std::size_t> take(rows.begin(), rows.begin() + n);
                const Tensor x = data::gather_rows(dataset.x_passive, take);
                Tensor noise({n, dataset.d_passive()});
                for (std::size_t i = 0; i < noise.size(); ++i) noise[i] = rng.normal();
                vals.push_back(dcor::dcor(x, noise).dcor);
            }
            std::sort(vals.begin(), vals.end());
            auto quantile = [&](double q) {
                const double pos = q * static_cast<double>(vals.size() - 1);
                const std::size_t lo = static_cast<std::size_t>(pos);
                const std::size_t hi = std::min(lo + 1, vals.size() - 1);
                const double w = pos - static_cast<double>(lo);
                return vals[lo] * (1.0 - w) + vals[hi] * w;
            };
            out << n << ',' << fmt(quantile(0.5)) << ',' << fmt(quantile(0.25)) << ','
                << fmt(quantile(0.75)) << ',' << vals.size() << '\n';
        }
        std::cout << "dcor-batch-study: wrote " << (fs::path(c.out_dir) / "dcor_batch_study.csv")
                  << '\n';
        return kExitOk;
    });
}

}  // namespace vfl::cli
