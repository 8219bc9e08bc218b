#include "vfl/attack_eval.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>

#include "vfl/autodiff.hpp"
#include "vfl/dcor.hpp"

#include "json.hpp"

namespace vfl::eval {

namespace {

std::string fmt(double v) {
    char buf[32];
    auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    if (ec != std::errc()) throw std::runtime_error("metrics: formatting failure");
    return std::string(buf, p);
}

Tensor maybe_perturb(const Tensor& emb, double stddev, Rng& rng) {
    if (stddev == 0.0) return emb;
    Tensor out = emb;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += rng.normal(0.0, stddev);
    return out;
}

}  // namespace

double eval_auc(std::span<const double> scores, std::span<const double> labels) {
    if (scores.size() != labels.size())
        throw std::invalid_argument("auc: score/label length mismatch");
    const std::size_t n = scores.size();
    std::size_t n_pos = 0;
    for (double y : labels) {
        if (y != 0.0 && y != 1.0)
            throw std::invalid_argument("auc: label " + std::to_string(y) + " not in {0,1}");
        if (y == 1.0) ++n_pos;
    }
    const std::size_t n_neg = n - n_pos;
    if (n_pos == 0 || n_neg == 0)
        throw UndefinedAucError("auc: undefined, labels contain a single class");

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    // Midranks over tie groups; rank sum of positives gives the Mann-Whitney
    // statistic. Midranks are multiples of 0.5, so the sum is exact.
    double rank_sum_pos = 0.0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j < n && scores[order[j]] == scores[order[i]]) ++j;
        const double midrank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j));
        for (std::size_t k = i; k < j; ++k)
            if (labels[order[k]] == 1.0) rank_sum_pos += midrank;
        i = j;
    }
    const double u = rank_sum_pos - 0.5 * static_cast<double>(n_pos) *
                                         static_cast<double>(n_pos + 1);
    return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

nn::Mlp train_independent_reconstructor(const nn::Mlp& extractor, const data::Dataset& d,
                                        const AttackOptions& opt, Rng rng) {
    const std::size_t d_emb = extractor.out_dim();
    const std::size_t d_p = extractor.in_dim();
    if (d_p != d.d_passive())
        throw std::invalid_argument("attack: extractor expects " + std::to_string(d_p) +
                                    " features, dataset has " + std::to_string(d.d_passive()));

    std::vector<std::size_t> dims;
    dims.push_back(d_emb);
    const std::vector<std::size_t> hidden = opt.hidden.empty()
                                                ? std::vector<std::size_t>{128}
                                                : opt.hidden;
    dims.insert(dims.end(), hidden.begin(), hidden.end());
    dims.push_back(d_p);

    Rng init_rng = rng.fork(1);
    Rng batch_rng = rng.fork(2);
    Rng noise_rng = rng.fork(3);
    nn::Mlp attacker = nn::make_mlp(dims, init_rng);
    nn::SgdOptimizer sgd{opt.learning_rate, opt.momentum};
    nn::SgdState state;

    data::BatchIterator it(d, data::Split::Attack, opt.batch_size, batch_rng.next_u64());
    const std::size_t steps = opt.epochs * it.batches_per_epoch();
    for (std::size_t s = 0; s < steps; ++s) {
        const data::Batch batch = it.next();
        // The extractor is used read-only; only its output matters here.
        const Tensor emb = maybe_perturb(nn::mlp_apply(extractor, batch.x_passive),
                                         opt.embedding_noise_std, noise_rng);
        ad::Tape tape;
        nn::MlpVars vars = nn::bind(tape, attacker);
        ad::Var rec = nn::mlp_forward(tape, vars, tape.input(emb));
        ad::Var loss = nn::mse_loss(tape, rec, tape.input(batch.x_passive));
        ad::GradientMap grads = tape.backward(loss, Tensor::scalar(1.0));
        std::vector<Tensor> g = nn::collect_gradients(grads, vars);
        nn::sgd_step(attacker, g, sgd, state);
    }
    return attacker;
}

double eval_reconstruction_mse(const nn::Mlp& reconstructor, const nn::Mlp& extractor,
                               const Tensor& x_eval) {
    const Tensor rec = nn::mlp_apply(reconstructor, nn::mlp_apply(extractor, x_eval));
    return nn::mse_loss_value(rec, x_eval);
}

MetricsRecord run_evaluation(const nn::Mlp& extractor, const nn::Mlp& predictor,
                             const nn::Mlp& reconstructor, const data::Dataset& d,
                             const EvalOptions& opt) {
    const std::vector<std::size_t>& rows = d.split(data::Split::Eval);
    const std::size_t batches = rows.size() / opt.batch_size;
    if (batches == 0)
        throw std::invalid_argument("run_evaluation: eval split yields zero full batches");

    Rng noise_rng = Rng(opt.noise_seed).fork(17);
    double mse_sum = 0.0, dcor_sum = 0.0, auc_sum = 0.0;
    for (std::size_t b = 0; b < batches; ++b) {
        std::vector<std::size_t> batch_rows(rows.begin() + b * opt.batch_size,
                                            rows.begin() + (b + 1) * opt.batch_size);
        const Tensor x = data::gather_rows(d.x_passive, batch_rows);
        const Tensor emb = maybe_perturb(nn::mlp_apply(extractor, x),
                                         opt.embedding_noise_std, noise_rng);

        const Tensor rec = nn::mlp_apply(reconstructor, emb);
        mse_sum += nn::mse_loss_value(rec, x);
        dcor_sum += dcor::dcor(x, emb).dcor;

        Tensor h_in = emb;
        if (d.x_active) {
            const Tensor xa = data::gather_rows(*d.x_active, batch_rows);
            Tensor cat({emb.rows(), emb.cols() + xa.cols()});
            for (std::size_t i = 0; i < emb.rows(); ++i) {
                for (std::size_t j = 0; j < emb.cols(); ++j) cat.at(i, j) = emb.at(i, j);
                for (std::size_t j = 0; j < xa.cols(); ++j)
                    cat.at(i, emb.cols() + j) = xa.at(i, j);
            }
            h_in = std::move(cat);
        }
        const Tensor logits = nn::mlp_apply(predictor, h_in);
        std::vector<double> scores(opt.batch_size), labels(opt.batch_size);
        for (std::size_t i = 0; i < opt.batch_size; ++i) {
            scores[i] = logits.at(i, 0);
            labels[i] = d.labels[batch_rows[i]];
        }
        auc_sum += eval_auc(scores, labels);
    }

    MetricsRecord rec;
    rec.attacker_mse = mse_sum / static_cast<double>(batches);
    rec.dcor_x_fx = dcor_sum / static_cast<double>(batches);
    rec.auc = auc_sum / static_cast<double>(batches);
    return rec;
}

void write_metrics_jsonl(const std::string& path, std::span<const MetricsRecord> records) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("metrics: cannot write " + path);
    for (const MetricsRecord& r : records) {
        nlohmann::ordered_json j;
        j["step"] = r.step;
        j["l_c"] = r.l_c;
        j["l_r"] = r.l_r;
        j["l_n"] = r.l_n;
        j["l_d"] = r.l_d;
        j["attacker_mse"] = r.attacker_mse;
        j["dcor_x_fx"] = r.dcor_x_fx;
        j["auc"] = r.auc;
        out << j.dump() << '\n';
    }
}

void write_metrics_csv(const std::string& path, std::span<const MetricsRecord> records) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("metrics: cannot write " + path);
    out << "step,l_c,l_r,l_n,l_d,attacker_mse,dcor_x_fx,auc\n";
    for (const MetricsRecord& r : records) {
        out << r.step << ',' << fmt(r.l_c) << ',' << fmt(r.l_r) << ',' << fmt(r.l_n) << ','
            << fmt(r.l_d) << ',' << fmt(r.attacker_mse) << ',' << fmt(r.dcor_x_fx) << ','
            << fmt(r.auc) << '\n';
    }
}

}  // namespace vfl::eval
