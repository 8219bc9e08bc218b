#include "vfl/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <system_error>

namespace vfl::data {

namespace {

void assign_splits(Dataset& d, const SplitFractions& f, Rng& rng) {
    const std::size_t n = d.n();
    if (f.train <= 0.0 || f.attack <= 0.0 || f.train + f.attack >= 1.0)
        throw std::invalid_argument("dataset: split fractions must be positive and sum below 1");
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    rng.shuffle(order);
    const std::size_t n_train = static_cast<std::size_t>(std::floor(f.train * n));
    const std::size_t n_attack = static_cast<std::size_t>(std::floor(f.attack * n));
    if (n_train == 0 || n_attack == 0 || n_train + n_attack >= n)
        throw std::invalid_argument("dataset: split sizes degenerate for n=" + std::to_string(n));
    d.train_idx.assign(order.begin(), order.begin() + n_train);
    d.attack_idx.assign(order.begin() + n_train, order.begin() + n_train + n_attack);
    d.eval_idx.assign(order.begin() + n_train + n_attack, order.end());
}

void check_both_classes(const Dataset& d, const std::vector<std::size_t>& idx, const char* name) {
    bool pos = false, neg = false;
    for (std::size_t i : idx) {
        if (d.labels[i] == 1.0) pos = true;
        else neg = true;
    }
    if (!pos || !neg)
        throw std::invalid_argument(std::string("dataset: split '") + name +
                                    "' contains a single class");
}

void validate(Dataset& d) {
    check_both_classes(d, d.train_idx, "train");
    check_both_classes(d, d.attack_idx, "attack");
    check_both_classes(d, d.eval_idx, "eval");
}

std::string format_double(double v) {
    char buf[32];
    auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    if (ec != std::errc()) throw std::runtime_error("csv: formatting failure");
    return std::string(buf, p);
}

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

}  // namespace

const std::vector<std::size_t>& Dataset::split(Split s) const {
    switch (s) {
        case Split::Train: return train_idx;
        case Split::Attack: return attack_idx;
        case Split::Eval: return eval_idx;
    }
    throw std::logic_error("dataset: bad split");
}

Dataset generate_synthetic(const SyntheticSpec& spec) {
    if (spec.n < 100) throw std::invalid_argument("synthetic: n must be >= 100");
    if (spec.d_passive == 0) throw std::invalid_argument("synthetic: d_passive must be >= 1");
    if (spec.informative_dims == 0 || spec.informative_dims > spec.d_passive)
        throw std::invalid_argument("synthetic: informative_dims must be in [1, d_passive]");

    Rng feature_rng = Rng(spec.seed).fork(1);
    Rng label_rng = Rng(spec.seed).fork(2);
    Rng split_rng = Rng(spec.seed).fork(3);

    const std::size_t n = spec.n, dp = spec.d_passive;
    const std::size_t k = std::max<std::size_t>(2, dp / 4);

    // Low-rank factor mixing plus independent noise; roughly unit variance
    // per column before standardization.
    Tensor loadings({k, dp});
    const double load_scale = 1.0 / std::sqrt(static_cast<double>(k));
    for (std::size_t i = 0; i < loadings.size(); ++i)
        loadings[i] = feature_rng.normal() * load_scale;

    Dataset d;
    d.x_passive = Tensor({n, dp});
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> latent(k);
        for (std::size_t f = 0; f < k; ++f) latent[f] = feature_rng.normal();
        for (std::size_t j = 0; j < dp; ++j) {
            double v = 0.0;
            for (std::size_t f = 0; f < k; ++f) v += latent[f] * loadings.at(f, j);
            d.x_passive.at(i, j) = 0.70710678118654752 * (v + feature_rng.normal());
        }
    }
    if (spec.d_active > 0) {
        Tensor xa({n, spec.d_active});
        for (std::size_t i = 0; i < xa.size(); ++i) xa[i] = feature_rng.normal();
        d.x_active = std::move(xa);
    }

    std::vector<double> w(spec.informative_dims);
    double w_norm = 0.0;
    for (auto& v : w) {
        v = label_rng.normal();
        w_norm += v * v;
    }
    w_norm = std::sqrt(w_norm);
    if (w_norm == 0.0) w_norm = 1.0;

    d.labels = Tensor({n});
    for (std::size_t i = 0; i < n; ++i) {
        double z = spec.bias;
        for (std::size_t j = 0; j < spec.informative_dims; ++j)
            z += (w[j] / w_norm) * d.x_passive.at(i, j);
        z = spec.label_scale * z;
        if (spec.label_noise_std > 0.0) z += spec.label_noise_std * label_rng.normal();
        const double p = 1.0 / (1.0 + std::exp(-z));
        d.labels[i] = label_rng.uniform() < p ? 1.0 : 0.0;
    }

    assign_splits(d, spec.splits, split_rng);
    validate(d);
    return d;
}

Dataset load_csv(const std::string& path, const CsvSchema& schema) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("csv: cannot open " + path);

    std::string line;
    if (!std::getline(in, line)) throw std::invalid_argument("csv: empty file " + path);
    const std::vector<std::string> header = split_line(line);

    auto column_of = [&](const std::string& name) {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return i;
        throw std::invalid_argument("csv: missing column '" + name + "' in " + path);
    };

    const std::size_t label_col = column_of(schema.label_column);
    std::vector<std::size_t> passive_cols, active_cols;
    for (const auto& name : schema.passive_features) passive_cols.push_back(column_of(name));
    for (const auto& name : schema.active_features) active_cols.push_back(column_of(name));
    if (passive_cols.empty()) throw std::invalid_argument("csv: no passive feature columns");

    std::vector<double> passive_data, active_data, labels;
    std::size_t row = 1;  // header is row 1
    while (std::getline(in, line)) {
        ++row;
        if (line.empty()) continue;
        const std::vector<std::string> cells = split_line(line);
        if (cells.size() != header.size())
            throw std::invalid_argument("csv: row " + std::to_string(row) + " has " +
                                        std::to_string(cells.size()) + " cells, expected " +
                                        std::to_string(header.size()));
        auto parse_cell = [&](std::size_t col) {
            const std::string& cell = cells[col];
            double v = 0.0;
            auto [p, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
            if (ec != std::errc() || p != cell.data() + cell.size())
                throw std::invalid_argument("csv: non-numeric value '" + cell + "' at row " +
                                            std::to_string(row) + ", column \"" + header[col] +
                                            "\"");
            return v;
        };
        for (std::size_t c : passive_cols) passive_data.push_back(parse_cell(c));
        for (std::size_t c : active_cols) active_data.push_back(parse_cell(c));
        const double y = parse_cell(label_col);
        if (y != 0.0 && y != 1.0)
            throw std::invalid_argument("csv: label '" + cells[label_col] + "' at row " +
                                        std::to_string(row) + " is not 0 or 1");
        labels.push_back(y);
    }
    const std::size_t n = labels.size();
    if (n < 3) throw std::invalid_argument("csv: need at least 3 data rows, got " +
                                           std::to_string(n));

    Dataset d;
    d.x_passive = Tensor({n, passive_cols.size()}, std::move(passive_data));
    if (!active_cols.empty()) d.x_active = Tensor({n, active_cols.size()}, std::move(active_data));
    d.labels = Tensor({n}, std::move(labels));

    Rng split_rng = Rng(schema.shuffle_seed).fork(3);
    assign_splits(d, schema.splits, split_rng);
    validate(d);
    return d;
}

void save_csv(const std::string& path, const Dataset& d, const CsvSchema& schema) {
    if (schema.passive_features.size() != d.d_passive() ||
        schema.active_features.size() != d.d_active())
        throw std::invalid_argument("csv: schema column counts do not match dataset");
    std::ofstream out(path);
    if (!out) throw std::runtime_error("csv: cannot write " + path);
    for (const auto& name : schema.passive_features) out << name << ',';
    for (const auto& name : schema.active_features) out << name << ',';
    out << schema.label_column << '\n';
    for (std::size_t i = 0; i < d.n(); ++i) {
        for (std::size_t j = 0; j < d.d_passive(); ++j)
            out << format_double(d.x_passive.at(i, j)) << ',';
        for (std::size_t j = 0; j < d.d_active(); ++j)
            out << format_double(d.x_active->at(i, j)) << ',';
        out << format_double(d.labels[i]) << '\n';
    }
}

Standardization standardize(Dataset& d) {
    Standardization stats;
    auto process = [&](Tensor& m) {
        const std::size_t cols = m.cols();
        for (std::size_t j = 0; j < cols; ++j) {
            double mean = 0.0;
            for (std::size_t i : d.train_idx) mean += m.at(i, j);
            mean /= static_cast<double>(d.train_idx.size());
            double var = 0.0;
            for (std::size_t i : d.train_idx) {
                const double c = m.at(i, j) - mean;
                var += c * c;
            }
            var /= static_cast<double>(d.train_idx.size());
            double sd = std::sqrt(var);
            stats.mean.push_back(mean);
            stats.stddev.push_back(sd);
            const bool divide = sd >= 1e-9;
            for (std::size_t i = 0; i < m.rows(); ++i) {
                double v = m.at(i, j) - mean;
                if (divide) v /= sd;
                m.at(i, j) = v;
            }
        }
    };
    process(d.x_passive);
    if (d.x_active) process(*d.x_active);
    return stats;
}

Tensor gather_rows(const Tensor& m, const std::vector<std::size_t>& rows) {
    Tensor out({rows.size(), m.cols()});
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < m.cols(); ++j) out.at(i, j) = m.at(rows[i], j);
    return out;
}

BatchIterator::BatchIterator(const Dataset& d, Split split, std::size_t batch_size,
                             std::uint64_t seed)
    : data_(&d), batch_size_(batch_size), rng_(Rng(seed).fork(static_cast<std::uint64_t>(split))) {
    order_ = d.split(split);
    if (batch_size_ == 0) throw std::invalid_argument("batch_iterator: batch size must be >= 1");
    if (batch_size_ > order_.size())
        throw std::invalid_argument("batch_iterator: batch size " + std::to_string(batch_size_) +
                                    " exceeds split size " + std::to_string(order_.size()));
    reshuffle();
}

void BatchIterator::reshuffle() {
    rng_.shuffle(order_);
    cursor_ = 0;
}

Batch BatchIterator::next() {
    // Drop the short tail: dCor metrics are only comparable at a fixed n.
    if (cursor_ + batch_size_ > order_.size()) reshuffle();
    Batch b;
    b.rows.assign(order_.begin() + cursor_, order_.begin() + cursor_ + batch_size_);
    cursor_ += batch_size_;
    b.x_passive = gather_rows(data_->x_passive, b.rows);
    if (data_->x_active) b.x_active = gather_rows(*data_->x_active, b.rows);
    b.labels = Tensor({batch_size_});
    for (std::size_t i = 0; i < batch_size_; ++i) b.labels[i] = data_->labels[b.rows[i]];
    return b;
}

}  // namespace vfl::data
