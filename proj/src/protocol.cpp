#include "vfl/protocol.hpp"

#include <sys/socket.h>
#include <unistd.h>

#include <condition_variable>
#include <cstring>
#include <deque>
#include <mutex>
#include <string>

namespace vfl::proto {

namespace {

constexpr char kMagic[4] = {'V', 'F', 'L', '1'};
constexpr std::size_t kHeaderSize = 4 + 1 + 8 + 4 + 4;

enum : std::uint8_t { kTypeForward = 0, kTypeBackward = 1, kTypeHello = 2, kTypeClose = 3 };

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f32(std::vector<std::uint8_t>& out, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(out, bits);
}

struct Reader {
    std::span<const std::uint8_t> bytes;
    std::size_t pos = 0;

    void need(std::size_t n) const {
        if (pos + n > bytes.size()) throw ProtocolError("decode: message truncated");
    }
    std::uint8_t u8() {
        need(1);
        return bytes[pos++];
    }
    std::uint16_t u16() {
        need(2);
        std::uint16_t v = 0;
        for (int i = 0; i < 2; ++i) v |= static_cast<std::uint16_t>(bytes[pos++]) << (8 * i);
        return v;
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[pos++]) << (8 * i);
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes[pos++]) << (8 * i);
        return v;
    }
    float f32() {
        const std::uint32_t bits = u32();
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }
};

void check_matrix(const Tensor& t, const char* what) {
    if (t.rank() != 2)
        throw ProtocolError(std::string("encode: ") + what + " must be a matrix, got " +
                            t.shape_str());
    if (!t.all_finite())
        throw ProtocolError(std::string("encode: non-finite value in ") + what);
}

void put_matrix(std::vector<std::uint8_t>& out, const Tensor& t) {
    for (std::size_t i = 0; i < t.size(); ++i) put_f32(out, static_cast<float>(t[i]));
}

Tensor read_matrix(Reader& r, std::uint32_t rows, std::uint32_t cols) {
    if (rows == 0 || cols == 0) throw ProtocolError("decode: zero-sized matrix");
    if (static_cast<std::uint64_t>(rows) * cols > (1u << 28))
        throw ProtocolError("decode: matrix size implausible");
    Tensor t({rows, cols});
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<double>(r.f32());
    return t;
}

// One direction of the in-process transport.
struct ByteQueue {
    std::mutex mu;
    std::condition_variable cv;
    std::deque<std::vector<std::uint8_t>> frames;

    void push(std::vector<std::uint8_t> frame) {
        {
            std::lock_guard lock(mu);
            frames.push_back(std::move(frame));
        }
        cv.notify_one();
    }
    std::vector<std::uint8_t> pop() {
        std::unique_lock lock(mu);
        cv.wait(lock, [&] { return !frames.empty(); });
        auto frame = std::move(frames.front());
        frames.pop_front();
        return frame;
    }
};

class InProcessChannel final : public Channel {
public:
    InProcessChannel(std::shared_ptr<ByteQueue> out, std::shared_ptr<ByteQueue> in)
        : out_(std::move(out)), in_(std::move(in)) {}

    void send(const Message& m) override { out_->push(encode(m)); }
    Message recv() override { return decode(in_->pop()); }

private:
    std::shared_ptr<ByteQueue> out_, in_;
};

class SocketChannel final : public Channel {
public:
    explicit SocketChannel(int fd) : fd_(fd) {}
    ~SocketChannel() override {
        if (fd_ >= 0) ::close(fd_);
    }
    SocketChannel(const SocketChannel&) = delete;
    SocketChannel& operator=(const SocketChannel&) = delete;

    void send(const Message& m) override {
        const std::vector<std::uint8_t> frame = encode(m);
        std::size_t sent = 0;
        while (sent < frame.size()) {
            const ssize_t n = ::write(fd_, frame.data() + sent, frame.size() - sent);
            if (n < 0) {
                if (errno == EINTR) continue;
                throw ProtocolError("socket: write failed");
            }
            sent += static_cast<std::size_t>(n);
        }
    }

    Message recv() override {
        std::vector<std::uint8_t> frame(kHeaderSize);
        read_exact(frame.data(), kHeaderSize);
        Reader r{frame};
        r.pos = 4;
        const std::uint8_t type = r.u8();
        (void)r.u64();
        const std::uint32_t rows = r.u32();
        const std::uint32_t cols = r.u32();
        std::size_t payload = 0;
        switch (type) {
            case kTypeForward: payload = 4ull * rows * cols; break;
            case kTypeBackward: payload = 4ull * rows * cols + 4; break;
            case kTypeHello: payload = 6; break;
            case kTypeClose: payload = 0; break;
            default: throw ProtocolError("socket: unknown message type");
        }
        if (payload > (1ull << 30)) throw ProtocolError("socket: payload implausible");
        frame.resize(kHeaderSize + payload);
        read_exact(frame.data() + kHeaderSize, payload);
        return decode(frame);
    }

private:
    void read_exact(std::uint8_t* dst, std::size_t n) {
        std::size_t got = 0;
        while (got < n) {
            const ssize_t r = ::read(fd_, dst + got, n - got);
            if (r < 0) {
                if (errno == EINTR) continue;
                throw ProtocolError("socket: read failed");
            }
            if (r == 0) throw ProtocolError("socket: peer closed mid-message");
            got += static_cast<std::size_t>(r);
        }
    }

    int fd_ = -1;
};

}  // namespace

std::vector<std::uint8_t> encode(const Message& m) {
    std::vector<std::uint8_t> out;
    out.insert(out.end(), kMagic, kMagic + 4);

    if (const auto* fwd = std::get_if<ForwardMsg>(&m)) {
        check_matrix(fwd->embedding, "embedding");
        out.push_back(kTypeForward);
        put_u64(out, fwd->batch_id);
        put_u32(out, static_cast<std::uint32_t>(fwd->embedding.rows()));
        put_u32(out, static_cast<std::uint32_t>(fwd->embedding.cols()));
        put_matrix(out, fwd->embedding);
    } else if (const auto* bwd = std::get_if<BackwardMsg>(&m)) {
        check_matrix(bwd->grad, "gradient");
        out.push_back(kTypeBackward);
        put_u64(out, bwd->batch_id);
        put_u32(out, static_cast<std::uint32_t>(bwd->grad.rows()));
        put_u32(out, static_cast<std::uint32_t>(bwd->grad.cols()));
        put_matrix(out, bwd->grad);
        put_f32(out, static_cast<float>(bwd->loss_value));
    } else if (const auto* hello = std::get_if<SessionHello>(&m)) {
        out.push_back(kTypeHello);
        put_u64(out, 0);
        put_u32(out, 0);
        put_u32(out, 0);
        put_u32(out, hello->d_emb);
        put_u16(out, hello->version);
    } else {
        out.push_back(kTypeClose);
        put_u64(out, 0);
        put_u32(out, 0);
        put_u32(out, 0);
    }
    return out;
}

Message decode(std::span<const std::uint8_t> bytes) {
    Reader r{bytes};
    r.need(kHeaderSize);
    if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw ProtocolError("decode: bad magic");
    r.pos = 4;
    const std::uint8_t type = r.u8();
    const std::uint64_t batch_id = r.u64();
    const std::uint32_t rows = r.u32();
    const std::uint32_t cols = r.u32();

    Message out;
    switch (type) {
        case kTypeForward: {
            ForwardMsg m;
            m.batch_id = batch_id;
            m.embedding = read_matrix(r, rows, cols);
            out = std::move(m);
            break;
        }
        case kTypeBackward: {
            BackwardMsg m;
            m.batch_id = batch_id;
            m.grad = read_matrix(r, rows, cols);
            m.loss_value = static_cast<double>(r.f32());
            out = std::move(m);
            break;
        }
        case kTypeHello: {
            SessionHello m;
            m.d_emb = r.u32();
            m.version = r.u16();
            out = m;
            break;
        }
        case kTypeClose: out = SessionClose{}; break;
        default: throw ProtocolError("decode: unknown message type");
    }
    if (r.pos != bytes.size()) throw ProtocolError("decode: trailing bytes");
    return out;
}

std::pair<std::unique_ptr<Channel>, std::unique_ptr<Channel>> make_in_process_channel() {
    auto a2b = std::make_shared<ByteQueue>();
    auto b2a = std::make_shared<ByteQueue>();
    return {std::make_unique<InProcessChannel>(a2b, b2a),
            std::make_unique<InProcessChannel>(b2a, a2b)};
}

std::pair<std::unique_ptr<Channel>, std::unique_ptr<Channel>> make_socket_channel() {
    int fds[2];
    if (::socketpair(AF_UNIX, SOCK_STREAM, 0, fds) != 0)
        throw ProtocolError("socketpair failed");
    return {std::make_unique<SocketChannel>(fds[0]), std::make_unique<SocketChannel>(fds[1])};
}

PassiveParty::PassiveParty(nn::Mlp extractor, defense::DefenseConfig cfg, nn::SgdOptimizer opt,
                           std::optional<nn::Mlp> reconstructor, std::uint64_t noise_seed)
    : f_(std::move(extractor)),
      r_(std::move(reconstructor)),
      cfg_(cfg),
      opt_(opt),
      noise_(cfg, noise_seed) {
    cfg_.validate();
    if (cfg_.needs_reconstructor()) {
        if (!r_) throw std::invalid_argument("passive party: defense config needs a reconstructor");
        if (r_->in_dim() != f_.out_dim() || r_->out_dim() != f_.in_dim())
            throw std::invalid_argument("passive party: reconstructor dims must invert F");
    }
}

ForwardMsg PassiveParty::forward(const Tensor& x_batch) {
    if (pending_)
        throw ProtocolError("passive party: forward while batch " +
                            std::to_string(pending_->batch_id) + " is still in flight");
    if (!x_batch.all_finite())
        throw std::invalid_argument("passive party: non-finite feature batch");

    Pending p;
    p.batch_id = next_batch_id_++;
    p.tape = std::make_unique<ad::Tape>();
    p.f_vars = nn::bind(*p.tape, f_);
    if (r_) p.r_vars = nn::bind(*p.tape, *r_);
    p.x = p.tape->input(x_batch);
    p.emb = nn::mlp_forward(*p.tape, p.f_vars, p.x);

    ForwardMsg msg;
    msg.batch_id = p.batch_id;
    // The baseline perturbation ships on the wire only; the retained tape
    // keeps the clean embedding and treats the noise as a constant shift.
    msg.embedding =
        defense::noise_perturb_embedding(p.tape->value(p.emb), cfg_.baseline_noise_std, noise_);
    pending_ = std::move(p);
    return msg;
}

StepSummary PassiveParty::backward(const BackwardMsg& msg) {
    if (!pending_) throw ProtocolError("passive party: backward with no batch in flight");
    if (msg.batch_id != pending_->batch_id)
        throw ProtocolError("passive party: backward for batch " + std::to_string(msg.batch_id) +
                            ", expected " + std::to_string(pending_->batch_id));
    Pending p = std::move(*pending_);
    pending_.reset();
    if (!msg.grad.same_shape(p.tape->value(p.emb)))
        throw ProtocolError("passive party: gradient shape " + msg.grad.shape_str() +
                            " does not match embedding " + p.tape->value(p.emb).shape_str());

    const nn::MlpVars* r_vars = p.r_vars ? &*p.r_vars : nullptr;
    defense::PassiveGradient g = defense::combined_passive_gradient(
        *p.tape, cfg_, p.x, p.emb, msg.grad, r_vars, nullptr, noise_);

    std::vector<Tensor> f_grads = nn::collect_gradients(g.total, p.f_vars);
    nn::sgd_step(f_, f_grads, opt_, f_state_);
    // R trains through alpha_r * L_r only; leave it untouched otherwise so a
    // pure-NR run keeps R bit-identical to its initialization.
    if (r_ && cfg_.alpha_r > 0.0) {
        std::vector<Tensor> r_grads = nn::collect_gradients(g.total, *p.r_vars);
        nn::sgd_step(*r_, r_grads, opt_, r_state_);
    }

    return StepSummary{msg.loss_value, g.l_r, g.l_n, g.l_d};
}

ActiveParty::ActiveParty(nn::Mlp predictor, nn::SgdOptimizer opt)
    : h_(std::move(predictor)), opt_(opt) {
    if (h_.out_dim() != 1)
        throw std::invalid_argument("active party: predictor must emit one logit per row");
}

BackwardMsg ActiveParty::step(const ForwardMsg& msg, const Tensor& labels,
                              const Tensor* x_active) {
    if (last_batch_id_ && msg.batch_id <= *last_batch_id_)
        throw ProtocolError("active party: batch id regression, got " +
                            std::to_string(msg.batch_id) + " after " +
                            std::to_string(*last_batch_id_));
    if (msg.embedding.rows() != labels.size())
        throw std::invalid_argument("active party: " + std::to_string(msg.embedding.rows()) +
                                    " rows vs " + std::to_string(labels.size()) + " labels");

    ad::Tape tape;
    nn::MlpVars h_vars = nn::bind(tape, h_);
    ad::Var emb = tape.input(msg.embedding, /*requires_grad=*/true);
    ad::Var h_in = emb;
    if (x_active) h_in = tape.concat(emb, tape.input(*x_active), 1);
    ad::Var logits = nn::mlp_forward(tape, h_vars, h_in);
    ad::Var loss = nn::bce_with_logits(tape, logits, labels);

    ad::GradientMap grads = tape.backward(loss, Tensor::scalar(1.0));

    BackwardMsg reply;
    reply.batch_id = msg.batch_id;
    reply.grad = grads.at(emb);
    reply.loss_value = tape.value(loss)[0];

    // Gradient and update come from the same forward pass; H steps after
    // the reply gradient is extracted.
    std::vector<Tensor> h_grads = nn::collect_gradients(grads, h_vars);
    nn::sgd_step(h_, h_grads, opt_, h_state_);

    last_batch_id_ = msg.batch_id;
    return reply;
}

}  // namespace vfl::proto
