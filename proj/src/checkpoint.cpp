#include "vfl/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace vfl::nn {

namespace {

constexpr const char* kMagic = "VFLCKPT 1";

struct Entry {
    std::string name;
    std::vector<std::size_t> shape;
};

std::vector<Entry> read_manifest(std::istream& in, const std::string& path) {
    std::string line;
    if (!std::getline(in, line) || line != kMagic)
        throw std::runtime_error("checkpoint: bad magic in " + path);
    std::vector<Entry> entries;
    while (std::getline(in, line)) {
        if (line == "end") return entries;
        std::istringstream ls(line);
        Entry e;
        if (!(ls >> e.name)) throw std::runtime_error("checkpoint: bad manifest line in " + path);
        std::size_t d;
        while (ls >> d) e.shape.push_back(d);
        if (e.shape.empty() || e.shape.size() > 2)
            throw std::runtime_error("checkpoint: tensor '" + e.name + "' has bad rank in " + path);
        entries.push_back(std::move(e));
    }
    throw std::runtime_error("checkpoint: manifest missing 'end' in " + path);
}

}  // namespace

void save_tensors(const std::string& path,
                  const std::vector<std::pair<std::string, const Tensor*>>& named) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("checkpoint: cannot write " + path);
    out << kMagic << '\n';
    for (const auto& [name, t] : named) {
        out << name;
        for (std::size_t d : t->shape()) out << ' ' << d;
        out << '\n';
    }
    out << "end\n";
    for (const auto& [name, t] : named) {
        static_assert(sizeof(double) == 8);
        out.write(reinterpret_cast<const char*>(t->data().data()),
                  static_cast<std::streamsize>(t->size() * sizeof(double)));
    }
    if (!out) throw std::runtime_error("checkpoint: write failed for " + path);
}

std::vector<std::pair<std::string, Tensor>> load_tensors(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
    const std::vector<Entry> entries = read_manifest(in, path);
    std::vector<std::pair<std::string, Tensor>> out;
    for (const auto& e : entries) {
        Tensor t(e.shape);
        in.read(reinterpret_cast<char*>(t.data().data()),
                static_cast<std::streamsize>(t.size() * sizeof(double)));
        if (!in)
            throw std::runtime_error("checkpoint: truncated data for tensor '" + e.name + "' in " +
                                     path);
        out.emplace_back(e.name, std::move(t));
    }
    return out;
}

void save_models(const std::string& path,
                 const std::vector<std::pair<std::string, const Mlp*>>& models) {
    std::vector<std::pair<std::string, const Tensor*>> named;
    for (const auto& [prefix, m] : models) {
        for (std::size_t i = 0; i < m->layers.size(); ++i) {
            named.emplace_back(prefix + ".layer" + std::to_string(i) + ".weight",
                               &m->layers[i].weight);
            named.emplace_back(prefix + ".layer" + std::to_string(i) + ".bias",
                               &m->layers[i].bias);
        }
    }
    save_tensors(path, named);
}

Mlp load_model(const std::string& path, const std::string& prefix) {
    auto tensors = load_tensors(path);
    Mlp m;
    for (std::size_t i = 0;; ++i) {
        const std::string wname = prefix + ".layer" + std::to_string(i) + ".weight";
        const std::string bname = prefix + ".layer" + std::to_string(i) + ".bias";
        Tensor* w = nullptr;
        Tensor* b = nullptr;
        for (auto& [name, t] : tensors) {
            if (name == wname) w = &t;
            if (name == bname) b = &t;
        }
        if (!w && !b) break;
        if (!w || !b)
            throw std::runtime_error("checkpoint: model '" + prefix + "' layer " +
                                     std::to_string(i) + " incomplete in " + path);
        if (w->rank() != 2 || b->size() != w->cols())
            throw std::runtime_error("checkpoint: model '" + prefix + "' layer " +
                                     std::to_string(i) + " shapes inconsistent in " + path);
        m.layers.push_back({std::move(*w), std::move(*b)});
    }
    if (m.layers.empty())
        throw std::runtime_error("checkpoint: no model '" + prefix + "' in " + path);
    for (std::size_t i = 0; i + 1 < m.layers.size(); ++i)
        if (m.layers[i].weight.cols() != m.layers[i + 1].weight.rows())
            throw std::runtime_error("checkpoint: model '" + prefix + "' layer dims do not chain");
    return m;
}

bool checkpoint_has_model(const std::string& path, const std::string& prefix) {
    auto tensors = load_tensors(path);
    const std::string wname = prefix + ".layer0.weight";
    for (const auto& [name, t] : tensors)
        if (name == wname) return true;
    return false;
}

}  // namespace vfl::nn
