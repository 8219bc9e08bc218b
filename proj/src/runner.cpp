#include "vfl/runner.hpp"

#include <exception>
#include <thread>
#include <variant>

namespace vfl::run {

namespace {

// Seed-stream indices under the master seed; fixed so runs are reproducible
// and each consumer is independent.
enum : std::uint64_t {
    kStreamFInit = 10,
    kStreamHInit = 11,
    kStreamRInit = 12,
    kStreamBatches = 13,
    kStreamPassiveNoise = 14,
    kStreamAttackBase = 1000,
    kStreamEvalNoiseBase = 2000,
};

std::vector<std::size_t> model_dims(std::size_t in, const std::vector<std::size_t>& hidden,
                                    std::size_t out) {
    std::vector<std::size_t> dims{in};
    dims.insert(dims.end(), hidden.begin(), hidden.end());
    dims.push_back(out);
    return dims;
}

void active_party_loop(proto::Channel& ch, proto::ActiveParty& active,
                       const std::vector<Tensor>& label_batches,
                       const std::vector<Tensor>* active_batches, std::size_t d_active) {
    const proto::Message hello_msg = ch.recv();
    const auto* hello = std::get_if<proto::SessionHello>(&hello_msg);
    if (!hello) throw proto::ProtocolError("active party: expected session hello");
    const std::uint32_t expected = static_cast<std::uint32_t>(active.expected_emb_dim(d_active));
    proto::SessionHello reply;
    reply.d_emb = expected;
    ch.send(reply);
    if (hello->d_emb != expected)
        throw proto::ProtocolError("active party: cut-layer width disagreement, peer " +
                                   std::to_string(hello->d_emb) + " vs local " +
                                   std::to_string(expected));
    if (hello->version != proto::kProtocolVersion)
        throw proto::ProtocolError("active party: protocol version mismatch");

    std::size_t i = 0;
    for (;;) {
        const proto::Message m = ch.recv();
        if (std::holds_alternative<proto::SessionClose>(m)) return;
        const auto* fwd = std::get_if<proto::ForwardMsg>(&m);
        if (!fwd) throw proto::ProtocolError("active party: unexpected message type");
        if (i >= label_batches.size())
            throw proto::ProtocolError("active party: more batches than labels");
        const Tensor* xa = active_batches ? &(*active_batches)[i] : nullptr;
        ch.send(active.step(*fwd, label_batches[i], xa));
        ++i;
    }
}

struct TrainingLosses {
    double l_c = 0, l_r = 0, l_n = 0, l_d = 0;
    std::size_t count = 0;

    void add(const proto::StepSummary& s) {
        l_c += s.l_c;
        l_r += s.l_r;
        l_n += s.l_n;
        l_d += s.l_d;
        ++count;
    }
    void reset() { *this = TrainingLosses{}; }
};

}  // namespace

TrainOutput run_training(const cfg::RunConfig& config, data::Dataset& dataset) {
    const Rng master(config.seed);
    const std::size_t d_p = dataset.d_passive();
    const std::size_t d_a = dataset.d_active();
    const std::size_t d_emb = config.model.d_emb;

    Rng f_rng = master.fork(kStreamFInit);
    Rng h_rng = master.fork(kStreamHInit);
    Rng r_rng = master.fork(kStreamRInit);

    nn::Mlp f = nn::make_mlp(model_dims(d_p, config.model.f_hidden, d_emb), f_rng);
    nn::Mlp h = nn::make_mlp(model_dims(d_emb + d_a, config.model.h_hidden, 1), h_rng);
    std::optional<nn::Mlp> r;
    if (config.defense.needs_reconstructor())
        r = nn::make_mlp(model_dims(d_emb, config.model.r_hidden, d_p), r_rng);

    nn::SgdOptimizer opt{config.optimizer.learning_rate, config.optimizer.momentum};
    proto::PassiveParty passive(std::move(f), config.defense, opt, std::move(r),
                                master.fork(kStreamPassiveNoise).next_u64());
    proto::ActiveParty active(std::move(h), opt);

    TrainOutput out;
    const std::size_t batches = config.training.batches;
    if (batches == 0) {
        out.f = passive.extractor();
        out.h = active.predictor();
        if (passive.reconstructor()) out.r = *passive.reconstructor();
        return out;
    }

    // Pre-draw the batch schedule; rows go to both sides, labels (and any
    // active-side features) only to the active thread.
    data::BatchIterator iter(dataset, data::Split::Train, config.training.batch_size,
                             master.fork(kStreamBatches).next_u64());
    std::vector<std::vector<std::size_t>> row_schedule;
    std::vector<Tensor> label_batches;
    std::vector<Tensor> active_batches;
    row_schedule.reserve(batches);
    label_batches.reserve(batches);
    for (std::size_t i = 0; i < batches; ++i) {
        data::Batch b = iter.next();
        row_schedule.push_back(std::move(b.rows));
        label_batches.push_back(std::move(b.labels));
        if (b.x_active) active_batches.push_back(std::move(*b.x_active));
    }

    auto [passive_ch, active_ch] =
        config.training.transport == "socket" ? proto::make_socket_channel()
                                              : proto::make_in_process_channel();

    std::exception_ptr active_error;
    std::thread active_thread([&] {
        try {
            active_party_loop(*active_ch, active, label_batches,
                              d_a > 0 ? &active_batches : nullptr, d_a);
        } catch (...) {
            active_error = std::current_exception();
            // Unblock a driver waiting on recv(); it will surface our error
            // after the join.
            try {
                active_ch->send(proto::SessionClose{});
            } catch (...) {
            }
        }
    });

    auto finish_active = [&](bool send_close) {
        if (send_close) {
            try {
                passive_ch->send(proto::SessionClose{});
            } catch (...) {
            }
        }
        if (active_thread.joinable()) active_thread.join();
        if (active_error) std::rethrow_exception(active_error);
    };

    try {
        proto::SessionHello hello;
        hello.d_emb = static_cast<std::uint32_t>(d_emb);
        passive_ch->send(hello);
        const proto::Message reply = passive_ch->recv();
        const auto* peer = std::get_if<proto::SessionHello>(&reply);
        if (!peer || peer->d_emb != d_emb)
            throw proto::ProtocolError("session abort: parties disagree on the cut-layer width");

        eval::EvalOptions eval_opt;
        eval_opt.batch_size = config.training.batch_size;
        eval_opt.embedding_noise_std = config.defense.baseline_noise_std;

        eval::AttackOptions attack_opt;
        attack_opt.epochs = config.attack.epochs;
        attack_opt.batch_size = config.attack.batch_size;
        attack_opt.learning_rate = config.attack.learning_rate;
        attack_opt.momentum = config.attack.momentum;
        attack_opt.hidden = config.attack.hidden.empty() ? config.model.r_hidden
                                                         : config.attack.hidden;
        attack_opt.embedding_noise_std = config.defense.baseline_noise_std;

        TrainingLosses window;
        std::size_t eval_index = 0;
        auto evaluate_at = [&](std::uint64_t step) {
            nn::Mlp attacker = eval::train_independent_reconstructor(
                passive.extractor(), dataset, attack_opt, master.fork(kStreamAttackBase + eval_index));
            eval_opt.noise_seed = master.fork(kStreamEvalNoiseBase + eval_index).next_u64();
            eval::MetricsRecord rec = eval::run_evaluation(passive.extractor(), active.predictor(),
                                                           attacker, dataset, eval_opt);
            rec.step = step;
            if (window.count > 0) {
                const double inv = 1.0 / static_cast<double>(window.count);
                rec.l_c = window.l_c * inv;
                rec.l_r = window.l_r * inv;
                rec.l_n = window.l_n * inv;
                rec.l_d = window.l_d * inv;
            }
            window.reset();
            out.metrics.push_back(rec);
            ++eval_index;
        };

        evaluate_at(0);
        for (std::size_t i = 0; i < batches; ++i) {
            const Tensor x = data::gather_rows(dataset.x_passive, row_schedule[i]);
            passive_ch->send(passive.forward(x));
            const proto::Message m = passive_ch->recv();
            const auto* bwd = std::get_if<proto::BackwardMsg>(&m);
            if (!bwd) throw proto::ProtocolError("passive party: expected backward message");
            window.add(passive.backward(*bwd));
            if ((i + 1) % config.training.eval_cadence == 0) evaluate_at(i + 1);
        }
        finish_active(true);
    } catch (...) {
        finish_active(true);
        throw;
    }

    out.f = passive.extractor();
    out.h = active.predictor();
    if (passive.reconstructor()) out.r = *passive.reconstructor();
    return out;
}

TrainOutput run_training(const cfg::RunConfig& config) {
    data::Dataset dataset = cfg::build_dataset(config);
    data::standardize(dataset);
    return run_training(config, dataset);
}

eval::MetricsRecord run_attack(const cfg::RunConfig& config, const nn::Mlp& extractor,
                               const nn::Mlp& predictor, data::Dataset& dataset) {
    const Rng master(config.seed);
    eval::AttackOptions attack_opt;
    attack_opt.epochs = config.attack.epochs;
    attack_opt.batch_size = config.attack.batch_size;
    attack_opt.learning_rate = config.attack.learning_rate;
    attack_opt.momentum = config.attack.momentum;
    attack_opt.hidden = config.attack.hidden.empty() ? config.model.r_hidden
                                                     : config.attack.hidden;
    attack_opt.embedding_noise_std = config.defense.baseline_noise_std;

    nn::Mlp attacker = eval::train_independent_reconstructor(extractor, dataset, attack_opt,
                                                             master.fork(kStreamAttackBase));
    eval::EvalOptions eval_opt;
    eval_opt.batch_size = config.training.batch_size;
    eval_opt.embedding_noise_std = config.defense.baseline_noise_std;
    eval_opt.noise_seed = master.fork(kStreamEvalNoiseBase).next_u64();
    return eval::run_evaluation(extractor, predictor, attacker, dataset, eval_opt);
}

}  // namespace vfl::run
