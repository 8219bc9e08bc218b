#include "vfl/config.hpp"

#include <fstream>
#include <set>

namespace vfl::cfg {

namespace {

using nlohmann::json;

// Pulls typed values out of an object while recording which keys were
// consumed; leftover keys are reported as errors.
class ObjectReader {
public:
    ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError("config: " + path_ + " must be an object");
    }

    ~ObjectReader() = default;

    template <typename T>
    void get(const char* key, T& out) {
        if (auto it = j_.find(key); it != j_.end()) {
            read(*it, out, path_ + "." + key);
            seen_.insert(key);
        }
    }

    bool has(const char* key) {
        seen_.insert(key);
        return j_.contains(key);
    }

    const json& raw(const char* key) {
        seen_.insert(key);
        return j_.at(key);
    }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!seen_.count(it.key()))
                throw ConfigError("config: unknown key '" + path_ + "." + it.key() + "'");
    }

private:
    template <typename T>
    static void read(const json& v, T& out, const std::string& path) {
        try {
            out = v.get<T>();
        } catch (const json::exception&) {
            throw ConfigError("config: bad value at " + path);
        }
    }

    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

defense::NoiseKind parse_noise_kind(const std::string& s, const std::string& path) {
    if (s == "gaussian") return defense::NoiseKind::Gaussian;
    if (s == "uniform") return defense::NoiseKind::Uniform;
    throw ConfigError("config: " + path + " must be 'gaussian' or 'uniform'");
}

}  // namespace

RunConfig parse_config(const json& j) {
    RunConfig c;
    ObjectReader root(j, "$");
    root.get("seed", c.seed);
    root.get("out_dir", c.out_dir);

    if (root.has("dataset")) {
        ObjectReader ds(root.raw("dataset"), "$.dataset");
        ds.get("kind", c.dataset.kind);
        if (c.dataset.kind != "synthetic" && c.dataset.kind != "csv")
            throw ConfigError("config: $.dataset.kind must be 'synthetic' or 'csv'");
        ds.get("n", c.dataset.synthetic.n);
        ds.get("d_passive", c.dataset.synthetic.d_passive);
        ds.get("d_active", c.dataset.synthetic.d_active);
        ds.get("informative_dims", c.dataset.synthetic.informative_dims);
        ds.get("label_scale", c.dataset.synthetic.label_scale);
        ds.get("label_noise_std", c.dataset.synthetic.label_noise_std);
        ds.get("bias", c.dataset.synthetic.bias);
        ds.get("seed", c.dataset.synthetic.seed);
        ds.get("path", c.dataset.csv.path);
        ds.get("label_column", c.dataset.csv.label_column);
        ds.get("passive_features", c.dataset.csv.passive_features);
        ds.get("active_features", c.dataset.csv.active_features);
        if (ds.has("splits")) {
            ObjectReader sp(ds.raw("splits"), "$.dataset.splits");
            sp.get("train", c.dataset.splits.train);
            sp.get("attack", c.dataset.splits.attack);
            sp.finish();
        }
        ds.finish();
        c.dataset.synthetic.splits = c.dataset.splits;
        if (c.dataset.kind == "csv" && c.dataset.csv.path.empty())
            throw ConfigError("config: $.dataset.path required for csv datasets");
        if (c.dataset.kind == "csv" && c.dataset.csv.passive_features.empty())
            throw ConfigError("config: $.dataset.passive_features required for csv datasets");
    }

    if (root.has("model")) {
        ObjectReader m(root.raw("model"), "$.model");
        m.get("d_emb", c.model.d_emb);
        m.get("f_hidden", c.model.f_hidden);
        m.get("h_hidden", c.model.h_hidden);
        m.get("r_hidden", c.model.r_hidden);
        m.finish();
        if (c.model.d_emb == 0) throw ConfigError("config: $.model.d_emb must be >= 1");
    }

    if (root.has("optimizer")) {
        ObjectReader o(root.raw("optimizer"), "$.optimizer");
        o.get("learning_rate", c.optimizer.learning_rate);
        o.get("momentum", c.optimizer.momentum);
        o.finish();
        if (!(c.optimizer.learning_rate > 0.0))
            throw ConfigError("config: $.optimizer.learning_rate must be > 0");
        if (c.optimizer.momentum < 0.0 || c.optimizer.momentum >= 1.0)
            throw ConfigError("config: $.optimizer.momentum must be in [0,1)");
    }

    if (root.has("defense")) {
        ObjectReader d(root.raw("defense"), "$.defense");
        d.get("alpha_r", c.defense.alpha_r);
        d.get("alpha_n", c.defense.alpha_n);
        d.get("alpha_d", c.defense.alpha_d);
        d.get("lambda", c.defense.lambda);
        std::string kind = c.defense.noise_kind == defense::NoiseKind::Gaussian ? "gaussian"
                                                                                : "uniform";
        d.get("noise_kind", kind);
        c.defense.noise_kind = parse_noise_kind(kind, "$.defense.noise_kind");
        if (d.has("noise_params")) {
            ObjectReader np(d.raw("noise_params"), "$.defense.noise_params");
            np.get("std", c.defense.noise_std);
            np.get("low", c.defense.noise_low);
            np.get("high", c.defense.noise_high);
            np.finish();
        }
        d.get("use_log_dcor", c.defense.use_log_dcor);
        d.get("baseline_noise_std", c.defense.baseline_noise_std);
        d.get("share_reconstructor", c.defense.share_reconstructor);
        d.finish();
        try {
            c.defense.validate();
        } catch (const std::exception& e) {
            throw ConfigError(std::string("config: $.defense invalid: ") + e.what());
        }
    }

    if (root.has("training")) {
        ObjectReader t(root.raw("training"), "$.training");
        t.get("batches", c.training.batches);
        t.get("batch_size", c.training.batch_size);
        t.get("eval_cadence", c.training.eval_cadence);
        t.get("transport", c.training.transport);
        t.finish();
        if (c.training.batch_size == 0)
            throw ConfigError("config: $.training.batch_size must be >= 1");
        if (c.training.eval_cadence == 0)
            throw ConfigError("config: $.training.eval_cadence must be >= 1");
        if (c.training.transport != "inproc" && c.training.transport != "socket")
            throw ConfigError("config: $.training.transport must be 'inproc' or 'socket'");
    }

    if (root.has("attack")) {
        ObjectReader a(root.raw("attack"), "$.attack");
        a.get("epochs", c.attack.epochs);
        a.get("batch_size", c.attack.batch_size);
        a.get("learning_rate", c.attack.learning_rate);
        a.get("momentum", c.attack.momentum);
        a.get("hidden", c.attack.hidden);
        a.finish();
    }

    if (root.has("sweep")) {
        ObjectReader s(root.raw("sweep"), "$.sweep");
        if (s.has("grid")) {
            const json& grid = s.raw("grid");
            if (!grid.is_object()) throw ConfigError("config: $.sweep.grid must be an object");
            for (auto it = grid.begin(); it != grid.end(); ++it) {
                if (!it.value().is_array() || it.value().empty())
                    throw ConfigError("config: $.sweep.grid." + it.key() +
                                      " must be a non-empty array");
                c.sweep_grid[it.key()] = it.value();
            }
        }
        s.finish();
    }

    if (root.has("dcor_batch_study")) {
        ObjectReader d(root.raw("dcor_batch_study"), "$.dcor_batch_study");
        d.get("batch_sizes", c.dcor_study.batch_sizes);
        d.get("trials", c.dcor_study.trials);
        d.finish();
        if (c.dcor_study.batch_sizes.empty() || c.dcor_study.trials == 0)
            throw ConfigError("config: $.dcor_batch_study needs batch sizes and trials >= 1");
        for (std::size_t n : c.dcor_study.batch_sizes)
            if (n < 2) throw ConfigError("config: $.dcor_batch_study batch sizes must be >= 2");
    }

    root.finish();
    return c;
}

RunConfig load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError("config: " + path + " is not valid JSON: " + e.what());
    }
    return parse_config(j);
}

nlohmann::ordered_json resolved_json(const RunConfig& c) {
    nlohmann::ordered_json j;
    j["seed"] = c.seed;
    j["out_dir"] = c.out_dir;

    auto& ds = j["dataset"];
    ds["kind"] = c.dataset.kind;
    if (c.dataset.kind == "synthetic") {
        ds["n"] = c.dataset.synthetic.n;
        ds["d_passive"] = c.dataset.synthetic.d_passive;
        ds["d_active"] = c.dataset.synthetic.d_active;
        ds["informative_dims"] = c.dataset.synthetic.informative_dims;
        ds["label_scale"] = c.dataset.synthetic.label_scale;
        ds["label_noise_std"] = c.dataset.synthetic.label_noise_std;
        ds["bias"] = c.dataset.synthetic.bias;
        ds["seed"] = c.dataset.synthetic.seed;
    } else {
        ds["path"] = c.dataset.csv.path;
        ds["label_column"] = c.dataset.csv.label_column;
        ds["passive_features"] = c.dataset.csv.passive_features;
        ds["active_features"] = c.dataset.csv.active_features;
    }
    ds["splits"]["train"] = c.dataset.splits.train;
    ds["splits"]["attack"] = c.dataset.splits.attack;

    j["model"]["d_emb"] = c.model.d_emb;
    j["model"]["f_hidden"] = c.model.f_hidden;
    j["model"]["h_hidden"] = c.model.h_hidden;
    j["model"]["r_hidden"] = c.model.r_hidden;

    j["optimizer"]["learning_rate"] = c.optimizer.learning_rate;
    j["optimizer"]["momentum"] = c.optimizer.momentum;

    auto& d = j["defense"];
    d["alpha_r"] = c.defense.alpha_r;
    d["alpha_n"] = c.defense.alpha_n;
    d["alpha_d"] = c.defense.alpha_d;
    d["lambda"] = c.defense.lambda;
    d["noise_kind"] = c.defense.noise_kind == defense::NoiseKind::Gaussian ? "gaussian" : "uniform";
    d["noise_params"]["std"] = c.defense.noise_std;
    d["noise_params"]["low"] = c.defense.noise_low;
    d["noise_params"]["high"] = c.defense.noise_high;
    d["use_log_dcor"] = c.defense.use_log_dcor;
    d["baseline_noise_std"] = c.defense.baseline_noise_std;
    d["share_reconstructor"] = c.defense.share_reconstructor;

    j["training"]["batches"] = c.training.batches;
    j["training"]["batch_size"] = c.training.batch_size;
    j["training"]["eval_cadence"] = c.training.eval_cadence;
    j["training"]["transport"] = c.training.transport;

    j["attack"]["epochs"] = c.attack.epochs;
    j["attack"]["batch_size"] = c.attack.batch_size;
    j["attack"]["learning_rate"] = c.attack.learning_rate;
    j["attack"]["momentum"] = c.attack.momentum;
    j["attack"]["hidden"] = c.attack.hidden;

    if (!c.sweep_grid.empty()) {
        auto& grid = j["sweep"]["grid"];
        for (const auto& [key, values] : c.sweep_grid) grid[key] = values;
    }

    j["dcor_batch_study"]["batch_sizes"] = c.dcor_study.batch_sizes;
    j["dcor_batch_study"]["trials"] = c.dcor_study.trials;
    return j;
}

void apply_override(nlohmann::json& j, const std::string& dotted_path,
                    const nlohmann::json& value) {
    nlohmann::json* cur = &j;
    std::size_t start = 0;
    for (;;) {
        const std::size_t dot = dotted_path.find('.', start);
        const std::string key = dotted_path.substr(start, dot - start);
        if (key.empty()) throw ConfigError("config: bad override path '" + dotted_path + "'");
        if (dot == std::string::npos) {
            (*cur)[key] = value;
            return;
        }
        cur = &(*cur)[key];
        start = dot + 1;
    }
}

data::Dataset build_dataset(const RunConfig& c) {
    if (c.dataset.kind == "synthetic") {
        data::SyntheticSpec spec = c.dataset.synthetic;
        spec.splits = c.dataset.splits;
        return data::generate_synthetic(spec);
    }
    data::CsvSchema schema;
    schema.label_column = c.dataset.csv.label_column;
    schema.passive_features = c.dataset.csv.passive_features;
    schema.active_features = c.dataset.csv.active_features;
    schema.splits = c.dataset.splits;
    schema.shuffle_seed = c.seed;
    return data::load_csv(c.dataset.csv.path, schema);
}

}  // namespace vfl::cfg
