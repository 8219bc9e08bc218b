#include "vfl/defense.hpp"

#include <stdexcept>

#include "vfl/dcor.hpp"
#include "vfl/grl.hpp"

namespace vfl::defense {

void DefenseConfig::validate() const {
    if (alpha_r < 0.0 || alpha_n < 0.0 || alpha_d < 0.0)
        throw std::invalid_argument("defense: weights must be >= 0");
    if (!(lambda > 0.0)) throw std::invalid_argument("defense: lambda must be > 0");
    if (noise_std < 0.0) throw std::invalid_argument("defense: noise std must be >= 0");
    if (noise_low >= noise_high)
        throw std::invalid_argument("defense: uniform noise bounds must satisfy low < high");
    if (baseline_noise_std < 0.0)
        throw std::invalid_argument("defense: baseline noise std must be >= 0");
}

Tensor NoiseSource::target(const std::vector<std::size_t>& shape) {
    Tensor t(shape);
    if (kind_ == NoiseKind::Gaussian) {
        for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng_.normal(0.0, std_);
    } else {
        for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng_.uniform(low_, high_);
    }
    return t;
}

Tensor NoiseSource::gaussian(const std::vector<std::size_t>& shape, double stddev) {
    Tensor t(shape);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng_.normal(0.0, stddev);
    return t;
}

ad::Var ar_loss(ad::Tape& tape, const nn::MlpVars& reconstructor, ad::Var fx, ad::Var x,
                double lambda) {
    ad::Var reversed = grl::reverse_gradient(tape, fx, lambda);
    ad::Var rec = nn::mlp_forward(tape, reconstructor, reversed);
    return nn::mse_loss(tape, rec, x);
}

NrLoss nr_loss(ad::Tape& tape, const nn::MlpVars& reconstructor, ad::Var fx, const Tensor& noise) {
    ad::Var rec = nn::mlp_forward(tape, reconstructor, fx);
    ad::Var target = tape.input(noise);
    NrLoss out{nn::mse_loss(tape, rec, target), {}};
    const auto params = reconstructor.all();
    out.frozen = tape.block_parameter_gradients(params);
    return out;
}

Tensor noise_perturb_embedding(const Tensor& fx, double stddev, NoiseSource& source) {
    if (stddev < 0.0) throw std::invalid_argument("noise_perturb_embedding: std must be >= 0");
    if (stddev == 0.0) return fx;
    Tensor out = fx;
    Tensor eps = source.gaussian(fx.shape(), stddev);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += eps[i];
    return out;
}

PassiveGradient combined_passive_gradient(ad::Tape& tape, const DefenseConfig& cfg,
                                          ad::Var x, ad::Var fx, const Tensor& task_grad,
                                          const nn::MlpVars* reconstructor,
                                          const nn::MlpVars* nr_reconstructor,
                                          NoiseSource& noise) {
    cfg.validate();
    PassiveGradient out;
    out.total = tape.backward(fx, task_grad);

    if (cfg.alpha_r > 0.0) {
        if (!reconstructor)
            throw std::invalid_argument("defense: alpha_r > 0 requires a reconstructor");
        ad::Var l_r = ar_loss(tape, *reconstructor, fx, x, cfg.lambda);
        out.l_r = tape.value(l_r)[0];
        out.total.axpy(cfg.alpha_r, tape.backward(l_r, Tensor::scalar(1.0)));
    }
    if (cfg.alpha_n > 0.0) {
        const nn::MlpVars* r_for_nr =
            (nr_reconstructor && !cfg.share_reconstructor) ? nr_reconstructor : reconstructor;
        if (!r_for_nr)
            throw std::invalid_argument("defense: alpha_n > 0 requires a reconstructor");
        const Tensor target = noise.target(tape.value(x).shape());
        NrLoss nr = nr_loss(tape, *r_for_nr, fx, target);
        out.l_n = tape.value(nr.loss)[0];
        out.total.axpy(cfg.alpha_n, tape.backward(nr.loss, Tensor::scalar(1.0), nr.frozen));
    }
    if (cfg.alpha_d > 0.0) {
        dcor::DcorLossOptions opt;
        opt.log_form = cfg.use_log_dcor;
        ad::Var l_d = dcor::log_dcor_loss(tape, x, fx, opt);
        out.l_d = tape.value(l_d)[0];
        out.total.axpy(cfg.alpha_d, tape.backward(l_d, Tensor::scalar(1.0)));
    }
    return out;
}

}  // namespace vfl::defense
