#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "vfl/autodiff.hpp"
#include "vfl/nn.hpp"
#include "vfl/rng.hpp"

namespace vfl::defense {

enum class NoiseKind { Gaussian, Uniform };

// Weights and knobs of the passive party's privacy modules. A module is
// active exactly when its weight is positive; all three compose additively
// with the task loss.
struct DefenseConfig {
    double alpha_r = 0.0;   // adversarial reconstruction weight
    double alpha_n = 0.0;   // noise regularization weight
    double alpha_d = 0.0;   // distance correlation weight
    double lambda = 1.0;    // gradient reversal strength, > 0

    NoiseKind noise_kind = NoiseKind::Gaussian;
    double noise_std = 1.0;      // gaussian target noise
    double noise_low = -1.0;     // uniform target noise bounds
    double noise_high = 1.0;

    bool use_log_dcor = true;
    double baseline_noise_std = 0.0;  // additive embedding noise baseline, 0 = off
    bool share_reconstructor = true;  // one reconstructor serves AR and NR

    bool needs_reconstructor() const { return alpha_r > 0.0 || alpha_n > 0.0; }
    void validate() const;
};

// Seeded per-batch noise draws for the NR target and the embedding
// perturbation baseline. Single-owner; never shared across threads.
class NoiseSource {
public:
    NoiseSource(const DefenseConfig& cfg, std::uint64_t seed)
        : kind_(cfg.noise_kind), std_(cfg.noise_std), low_(cfg.noise_low), high_(cfg.noise_high),
          rng_(seed) {}

    // Fresh NR target of the given shape, per the configured distribution.
    Tensor target(const std::vector<std::size_t>& shape);
    // Zero-mean gaussian with the given std.
    Tensor gaussian(const std::vector<std::size_t>& shape, double stddev);

private:
    NoiseKind kind_;
    double std_, low_, high_;
    Rng rng_;
};

// L_r = mse(R(grl(fx)), x). Backward descends on R and, through the
// reversal, ascends on the extractor feeding fx.
ad::Var ar_loss(ad::Tape& tape, const nn::MlpVars& reconstructor, ad::Var fx, ad::Var x,
                double lambda);

// L_n = mse(R(fx), noise), no GRL. Returns the loss var plus the parameter
// block that backward must apply so R receives exactly zero update.
struct NrLoss {
    ad::Var loss;
    ad::ParamBlock frozen;
};
NrLoss nr_loss(ad::Tape& tape, const nn::MlpVars& reconstructor, ad::Var fx, const Tensor& noise);

// fx + eps with eps ~ N(0, std^2) elementwise; std = 0 returns fx untouched.
Tensor noise_perturb_embedding(const Tensor& fx, double stddev, NoiseSource& source);

struct PassiveGradient {
    ad::GradientMap total;  // task pullback plus alpha-weighted defense terms
    double l_r = 0.0;
    double l_n = 0.0;
    double l_d = 0.0;
};

// The passive party's whole per-batch gradient: the task gradient received
// from the active party pulled back through fx, plus alpha_r L_r +
// alpha_n L_n + alpha_d L_d. Losses share one reconstructor when both AR
// and NR are active (nr_reconstructor overrides that for ablations).
// Gradients compose additively per loss term, so the total equals the
// alpha-weighted sum of the standalone gradient maps exactly.
PassiveGradient combined_passive_gradient(ad::Tape& tape, const DefenseConfig& cfg,
                                          ad::Var x, ad::Var fx, const Tensor& task_grad,
                                          const nn::MlpVars* reconstructor,
                                          const nn::MlpVars* nr_reconstructor,
                                          NoiseSource& noise);

}  // namespace vfl::defense
