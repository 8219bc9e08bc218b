#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <variant>
#include <vector>

#include "vfl/autodiff.hpp"
#include "vfl/defense.hpp"
#include "vfl/nn.hpp"
#include "vfl/tensor.hpp"

namespace vfl::proto {

inline constexpr std::uint16_t kProtocolVersion = 1;

// The two per-batch wire messages plus session bracketing. The message
// types themselves are the information boundary: there is no field that
// could carry raw features or labels across.
struct ForwardMsg {
    std::uint64_t batch_id = 0;
    Tensor embedding;  // [n x d_emb]
};

struct BackwardMsg {
    std::uint64_t batch_id = 0;
    Tensor grad;  // [n x d_emb], one row per example
    double loss_value = 0.0;  // informational L_c echo
};

struct SessionHello {
    std::uint32_t d_emb = 0;
    std::uint16_t version = kProtocolVersion;
};

struct SessionClose {};

using Message = std::variant<ForwardMsg, BackwardMsg, SessionHello, SessionClose>;

class ProtocolError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Wire format, little-endian:
//   "VFL1" | type u8 | batch_id u64 | rows u32 | cols u32 | payload
// type 0 forward:  payload = rows*cols f32 row-major
// type 1 backward: payload = rows*cols f32 row-major, then loss f32
// type 2 hello:    rows = cols = 0, payload = d_emb u32, version u16
// type 3 close:    rows = cols = 0, no payload
// Values narrow to f32 on encode; decode widens back.
std::vector<std::uint8_t> encode(const Message& m);
Message decode(std::span<const std::uint8_t> bytes);

// Blocking duplex message transport.
class Channel {
public:
    virtual ~Channel() = default;
    virtual void send(const Message& m) = 0;
    virtual Message recv() = 0;
};

// In-memory queue pair. Messages still pass through the byte codec, so both
// transports narrow the exchanged matrices identically.
std::pair<std::unique_ptr<Channel>, std::unique_ptr<Channel>> make_in_process_channel();

// Stream-socket pair (AF_UNIX); each endpoint owns its fd.
std::pair<std::unique_ptr<Channel>, std::unique_ptr<Channel>> make_socket_channel();

struct StepSummary {
    double l_c = 0.0;  // echoed from the active party
    double l_r = 0.0;
    double l_n = 0.0;
    double l_d = 0.0;
};

// Feature-extractor side: owns X, F, the defense modules, and (when AR or
// NR is on) the reconstructor. Strict lockstep: one batch in flight.
class PassiveParty {
public:
    PassiveParty(nn::Mlp extractor, defense::DefenseConfig cfg, nn::SgdOptimizer opt,
                 std::optional<nn::Mlp> reconstructor, std::uint64_t noise_seed);

    ForwardMsg forward(const Tensor& x_batch);
    StepSummary backward(const BackwardMsg& msg);

    const nn::Mlp& extractor() const { return f_; }
    const nn::Mlp* reconstructor() const { return r_ ? &*r_ : nullptr; }
    const defense::DefenseConfig& config() const { return cfg_; }
    std::size_t d_emb() const { return f_.out_dim(); }

private:
    struct Pending {
        std::uint64_t batch_id = 0;
        std::unique_ptr<ad::Tape> tape;  // pointer-stable: vars reference it
        nn::MlpVars f_vars;
        std::optional<nn::MlpVars> r_vars;
        ad::Var x;
        ad::Var emb;
    };

    nn::Mlp f_;
    std::optional<nn::Mlp> r_;
    defense::DefenseConfig cfg_;
    nn::SgdOptimizer opt_;
    nn::SgdState f_state_, r_state_;
    defense::NoiseSource noise_;
    std::uint64_t next_batch_id_ = 0;
    std::optional<Pending> pending_;
};

// Label side: owns Y and the predictor H; computes the task loss, returns
// the cut-layer gradient, and updates H from the same backward pass.
class ActiveParty {
public:
    ActiveParty(nn::Mlp predictor, nn::SgdOptimizer opt);

    // labels in {0,1}, one per embedding row. x_active, when present, is
    // concatenated onto the embedding before H.
    BackwardMsg step(const ForwardMsg& msg, const Tensor& labels,
                     const Tensor* x_active = nullptr);

    const nn::Mlp& predictor() const { return h_; }
    std::size_t expected_emb_dim(std::size_t d_active = 0) const {
        return h_.in_dim() - d_active;
    }

private:
    nn::Mlp h_;
    nn::SgdOptimizer opt_;
    nn::SgdState h_state_;
    std::optional<std::uint64_t> last_batch_id_;
};

}  // namespace vfl::proto
