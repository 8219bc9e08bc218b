#include "vfl/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace vfl::ad {

namespace {

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b))
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " +
                                    b.shape_str());
}

void check_rank2(const Tensor& t, const char* op) {
    if (t.rank() != 2)
        throw std::invalid_argument(std::string(op) + ": expected rank-2 tensor, got " +
                                    t.shape_str());
}

// out += a * b^T contraction pieces for matmul backward, written as plain
// loops so batch results match row-by-row results bitwise.
void matmul_into(const Tensor& a, const Tensor& b, Tensor& out) {
    const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t kk = 0; kk < k; ++kk) {
            const double av = a.at(i, kk);
            if (av == 0.0) continue;
            for (std::size_t j = 0; j < m; ++j) out.at(i, j) += av * b.at(kk, j);
        }
    }
}

}  // namespace

const Tensor& GradientMap::at(Var v) const {
    const NodeId id = v.id();
    auto it = std::lower_bound(entries_.begin(), entries_.end(), id,
                               [](const auto& e, NodeId key) { return e.first < key; });
    if (it == entries_.end() || it->first != id)
        throw std::invalid_argument("gradient map: no entry for node " + std::to_string(id));
    return it->second;
}

bool GradientMap::contains(Var v) const {
    const NodeId id = v.id();
    auto it = std::lower_bound(entries_.begin(), entries_.end(), id,
                               [](const auto& e, NodeId key) { return e.first < key; });
    return it != entries_.end() && it->first == id;
}

void GradientMap::axpy(double alpha, const GradientMap& other) {
    if (entries_.size() != other.entries_.size())
        throw std::invalid_argument("gradient map: axpy entry sets differ");
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        if (entries_[i].first != other.entries_[i].first)
            throw std::invalid_argument("gradient map: axpy entry sets differ");
        Tensor& dst = entries_[i].second;
        const Tensor& src = other.entries_[i].second;
        check_same_shape(dst, src, "gradient map axpy");
        for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += alpha * src[j];
    }
}

void GradientMap::scale(double alpha) {
    for (auto& [id, t] : entries_)
        for (std::size_t j = 0; j < t.size(); ++j) t[j] *= alpha;
}

bool ParamBlock::blocked(NodeId id) const {
    return std::binary_search(ids_.begin(), ids_.end(), id);
}

Var Tape::push(Node n) {
    nodes_.push_back(std::move(n));
    return Var(this, static_cast<NodeId>(nodes_.size() - 1));
}

const Tape::Node& Tape::node(Var v) const {
    check_owned(v, "tape");
    return nodes_[v.id()];
}

void Tape::check_owned(Var v, const char* op) const {
    if (v.tape() != this || v.id() >= nodes_.size())
        throw std::invalid_argument(std::string(op) + ": var does not belong to this tape");
}

bool Tape::any_requires_grad(std::span<const Var> vs) const {
    for (Var v : vs)
        if (nodes_[v.id()].requires_grad) return true;
    return false;
}

Var Tape::input(Tensor value, bool requires_grad) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    n.tracked = requires_grad;
    n.op = "input";
    return push(std::move(n));
}

Var Tape::param(Tensor value) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = true;
    n.is_param = true;
    n.tracked = true;
    n.op = "param";
    return push(std::move(n));
}

Var Tape::custom(const char* op, Tensor value, std::vector<Var> inputs, GradRule rule) {
    Node n;
    n.op = op;
    n.value = std::move(value);
    for (Var v : inputs) {
        check_owned(v, op);
        n.inputs.push_back(v.id());
    }
    n.requires_grad = any_requires_grad(inputs);
    if (n.requires_grad) n.grad = std::move(rule);
    return push(std::move(n));
}

Var Tape::add(Var a, Var b) {
    const Tensor& av = node(a).value;
    const Tensor& bv = node(b).value;
    check_same_shape(av, bv, "add");
    Tensor out = av;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
    return custom("add", std::move(out), {a, b},
                  [](const Tensor& up) { return std::vector<Tensor>{up, up}; });
}

Var Tape::sub(Var a, Var b) {
    const Tensor& av = node(a).value;
    const Tensor& bv = node(b).value;
    check_same_shape(av, bv, "sub");
    Tensor out = av;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
    return custom("sub", std::move(out), {a, b}, [](const Tensor& up) {
        Tensor neg = up;
        for (std::size_t i = 0; i < neg.size(); ++i) neg[i] = -neg[i];
        return std::vector<Tensor>{up, std::move(neg)};
    });
}

Var Tape::mul(Var a, Var b) {
    const Tensor& av = node(a).value;
    const Tensor& bv = node(b).value;
    check_same_shape(av, bv, "mul");
    Tensor out = av;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
    Tensor ac = av, bc = bv;
    return custom("mul", std::move(out), {a, b},
                  [ac = std::move(ac), bc = std::move(bc)](const Tensor& up) {
                      Tensor da = bc, db = ac;
                      for (std::size_t i = 0; i < up.size(); ++i) {
                          da[i] *= up[i];
                          db[i] *= up[i];
                      }
                      return std::vector<Tensor>{std::move(da), std::move(db)};
                  });
}

Var Tape::matmul(Var a, Var b) {
    const Tensor& av = node(a).value;
    const Tensor& bv = node(b).value;
    check_rank2(av, "matmul");
    check_rank2(bv, "matmul");
    if (av.cols() != bv.rows())
        throw std::invalid_argument("matmul: inner dimensions " + std::to_string(av.cols()) +
                                    " vs " + std::to_string(bv.rows()));
    Tensor out({av.rows(), bv.cols()});
    matmul_into(av, bv, out);
    Tensor ac = av, bc = bv;
    return custom("matmul", std::move(out), {a, b},
                  [ac = std::move(ac), bc = std::move(bc)](const Tensor& up) {
                      // dA = up * B^T ; dB = A^T * up
                      Tensor da({ac.rows(), ac.cols()});
                      for (std::size_t i = 0; i < ac.rows(); ++i)
                          for (std::size_t j = 0; j < bc.cols(); ++j) {
                              const double u = up.at(i, j);
                              if (u == 0.0) continue;
                              for (std::size_t kk = 0; kk < ac.cols(); ++kk)
                                  da.at(i, kk) += u * bc.at(kk, j);
                          }
                      Tensor db({bc.rows(), bc.cols()});
                      for (std::size_t i = 0; i < ac.rows(); ++i)
                          for (std::size_t kk = 0; kk < ac.cols(); ++kk) {
                              const double av2 = ac.at(i, kk);
                              if (av2 == 0.0) continue;
                              for (std::size_t j = 0; j < bc.cols(); ++j)
                                  db.at(kk, j) += av2 * up.at(i, j);
                          }
                      return std::vector<Tensor>{std::move(da), std::move(db)};
                  });
}

Var Tape::relu(Var a) {
    const Tensor& av = node(a).value;
    Tensor out = av;
    for (std::size_t i = 0; i < out.size(); ++i)
        if (out[i] < 0.0) out[i] = 0.0;
    Tensor ac = av;
    return custom("relu", std::move(out), {a}, [ac = std::move(ac)](const Tensor& up) {
        Tensor da = up;
        for (std::size_t i = 0; i < da.size(); ++i)
            if (ac[i] <= 0.0) da[i] = 0.0;
        return std::vector<Tensor>{std::move(da)};
    });
}

Var Tape::sigmoid(Var a) {
    const Tensor& av = node(a).value;
    Tensor out = av;
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double x = out[i];
        if (x >= 0.0) {
            out[i] = 1.0 / (1.0 + std::exp(-x));
        } else {
            const double e = std::exp(x);
            out[i] = e / (1.0 + e);
        }
    }
    Tensor oc = out;
    return custom("sigmoid", std::move(out), {a}, [oc = std::move(oc)](const Tensor& up) {
        Tensor da = up;
        for (std::size_t i = 0; i < da.size(); ++i) da[i] *= oc[i] * (1.0 - oc[i]);
        return std::vector<Tensor>{std::move(da)};
    });
}

Var Tape::sqrt(Var a) {
    const Tensor& av = node(a).value;
    Tensor out = av;
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (out[i] < 0.0)
            throw std::invalid_argument("sqrt: negative input " + std::to_string(out[i]));
        out[i] = std::sqrt(out[i]);
    }
    Tensor oc = out;
    return custom("sqrt", std::move(out), {a}, [oc = std::move(oc)](const Tensor& up) {
        Tensor da = up;
        for (std::size_t i = 0; i < da.size(); ++i) da[i] *= 0.5 / oc[i];
        return std::vector<Tensor>{std::move(da)};
    });
}

Var Tape::log(Var a) {
    const Tensor& av = node(a).value;
    Tensor out = av;
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (out[i] <= 0.0)
            throw std::invalid_argument("log: non-positive input " + std::to_string(out[i]));
        out[i] = std::log(out[i]);
    }
    Tensor ac = av;
    return custom("log", std::move(out), {a}, [ac = std::move(ac)](const Tensor& up) {
        Tensor da = up;
        for (std::size_t i = 0; i < da.size(); ++i) da[i] /= ac[i];
        return std::vector<Tensor>{std::move(da)};
    });
}

Var Tape::exp(Var a) {
    const Tensor& av = node(a).value;
    Tensor out = av;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(out[i]);
    Tensor oc = out;
    return custom("exp", std::move(out), {a}, [oc = std::move(oc)](const Tensor& up) {
        Tensor da = up;
        for (std::size_t i = 0; i < da.size(); ++i) da[i] *= oc[i];
        return std::vector<Tensor>{std::move(da)};
    });
}

Var Tape::sum(Var a) {
    const Tensor& av = node(a).value;
    double acc = 0.0;
    for (std::size_t i = 0; i < av.size(); ++i) acc += av[i];
    const std::vector<std::size_t> in_shape = av.shape();
    return custom("sum", Tensor::scalar(acc), {a}, [in_shape](const Tensor& up) {
        return std::vector<Tensor>{Tensor(in_shape, up[0])};
    });
}

Var Tape::mean(Var a) {
    const Tensor& av = node(a).value;
    double acc = 0.0;
    for (std::size_t i = 0; i < av.size(); ++i) acc += av[i];
    const double inv_n = 1.0 / static_cast<double>(av.size());
    const std::vector<std::size_t> in_shape = av.shape();
    return custom("mean", Tensor::scalar(acc * inv_n), {a}, [in_shape, inv_n](const Tensor& up) {
        return std::vector<Tensor>{Tensor(in_shape, up[0] * inv_n)};
    });
}

Var Tape::broadcast(Var a, std::vector<std::size_t> target) {
    const Tensor& av = node(a).value;
    if (target.size() != 2 && target.size() != 1)
        throw std::invalid_argument("broadcast: target must be rank 1 or 2");
    const std::size_t tr = target[0];
    const std::size_t tc = target.size() == 2 ? target[1] : 1;

    // Supported: scalar -> any; row vector [m] or [1,m] -> [r,m];
    // column [r,1] -> [r,c].
    enum class Mode { Scalar, Row, Col } mode;
    if (av.size() == 1) {
        mode = Mode::Scalar;
    } else if ((av.rank() == 1 && av.dim(0) == tc) ||
               (av.rank() == 2 && av.rows() == 1 && av.cols() == tc)) {
        mode = Mode::Row;
    } else if (av.rank() == 2 && av.cols() == 1 && av.rows() == tr) {
        mode = Mode::Col;
    } else {
        throw std::invalid_argument("broadcast: cannot expand " + av.shape_str() + " to target");
    }

    Tensor out(target);
    for (std::size_t i = 0; i < tr; ++i)
        for (std::size_t j = 0; j < tc; ++j) {
            double v = 0.0;
            switch (mode) {
                case Mode::Scalar: v = av[0]; break;
                case Mode::Row: v = av[j]; break;
                case Mode::Col: v = av[i]; break;
            }
            out[i * tc + j] = v;
        }

    const std::vector<std::size_t> in_shape = av.shape();
    return custom("broadcast", std::move(out), {a}, [in_shape, mode, tr, tc](const Tensor& up) {
        Tensor da(in_shape);
        for (std::size_t i = 0; i < tr; ++i)
            for (std::size_t j = 0; j < tc; ++j) {
                const double u = up[i * tc + j];
                switch (mode) {
                    case Mode::Scalar: da[0] += u; break;
                    case Mode::Row: da[j] += u; break;
                    case Mode::Col: da[i] += u; break;
                }
            }
        return std::vector<Tensor>{std::move(da)};
    });
}

Var Tape::transpose(Var a) {
    const Tensor& av = node(a).value;
    check_rank2(av, "transpose");
    const std::size_t r = av.rows(), c = av.cols();
    Tensor out({c, r});
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out.at(j, i) = av.at(i, j);
    return custom("transpose", std::move(out), {a}, [r, c](const Tensor& up) {
        Tensor da({r, c});
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) da.at(i, j) = up.at(j, i);
        return std::vector<Tensor>{std::move(da)};
    });
}

Var Tape::concat(Var a, Var b, std::size_t axis) {
    const Tensor& av = node(a).value;
    const Tensor& bv = node(b).value;
    check_rank2(av, "concat");
    check_rank2(bv, "concat");
    if (axis > 1) throw std::invalid_argument("concat: axis must be 0 or 1");
    const std::size_t other = 1 - axis;
    if (av.shape()[other] != bv.shape()[other])
        throw std::invalid_argument("concat: shapes " + av.shape_str() + " and " + bv.shape_str() +
                                    " differ off-axis");
    std::size_t r = av.rows(), c = av.cols();
    if (axis == 0)
        r += bv.rows();
    else
        c += bv.cols();
    Tensor out({r, c});
    for (std::size_t i = 0; i < av.rows(); ++i)
        for (std::size_t j = 0; j < av.cols(); ++j) out.at(i, j) = av.at(i, j);
    for (std::size_t i = 0; i < bv.rows(); ++i)
        for (std::size_t j = 0; j < bv.cols(); ++j) {
            if (axis == 0)
                out.at(av.rows() + i, j) = bv.at(i, j);
            else
                out.at(i, av.cols() + j) = bv.at(i, j);
        }
    const std::size_t ar = av.rows(), acols = av.cols(), br = bv.rows(), bc = bv.cols();
    return custom("concat", std::move(out), {a, b}, [axis, ar, acols, br, bc](const Tensor& up) {
        Tensor da({ar, acols}), db({br, bc});
        for (std::size_t i = 0; i < ar; ++i)
            for (std::size_t j = 0; j < acols; ++j) da.at(i, j) = up.at(i, j);
        for (std::size_t i = 0; i < br; ++i)
            for (std::size_t j = 0; j < bc; ++j)
                db.at(i, j) = (axis == 0) ? up.at(ar + i, j) : up.at(i, acols + j);
        return std::vector<Tensor>{std::move(da), std::move(db)};
    });
}

Var Tape::slice(Var a, std::size_t r0, std::size_t r1, std::size_t c0, std::size_t c1) {
    const Tensor& av = node(a).value;
    check_rank2(av, "slice");
    if (r0 >= r1 || r1 > av.rows() || c0 >= c1 || c1 > av.cols())
        throw std::invalid_argument("slice: bounds out of range for " + av.shape_str());
    Tensor out({r1 - r0, c1 - c0});
    for (std::size_t i = r0; i < r1; ++i)
        for (std::size_t j = c0; j < c1; ++j) out.at(i - r0, j - c0) = av.at(i, j);
    const std::size_t r = av.rows(), c = av.cols();
    return custom("slice", std::move(out), {a}, [r, c, r0, r1, c0, c1](const Tensor& up) {
        Tensor da({r, c});
        for (std::size_t i = r0; i < r1; ++i)
            for (std::size_t j = c0; j < c1; ++j) da.at(i, j) = up.at(i - r0, j - c0);
        return std::vector<Tensor>{std::move(da)};
    });
}

const Tensor& Tape::value(Var v) const { return node(v).value; }

ParamBlock Tape::block_parameter_gradients(std::span<const Var> params) const {
    ParamBlock block;
    for (Var v : params) {
        check_owned(v, "block_parameter_gradients");
        if (!nodes_[v.id()].is_param)
            throw std::invalid_argument("block_parameter_gradients: node " +
                                        std::to_string(v.id()) + " is not a parameter");
        block.ids_.push_back(v.id());
    }
    std::sort(block.ids_.begin(), block.ids_.end());
    return block;
}

GradientMap Tape::backward(Var root, const Tensor& seed) const {
    return backward(root, seed, ParamBlock{});
}

GradientMap Tape::backward(Var root, const Tensor& seed, const ParamBlock& blocked) const {
    check_owned(root, "backward");
    if (nodes_.empty()) throw std::invalid_argument("backward: empty tape");
    const Node& root_node = nodes_[root.id()];
    if (!seed.same_shape(root_node.value))
        throw std::invalid_argument("backward: seed shape " + seed.shape_str() +
                                    " does not match root value " + root_node.value.shape_str());

    std::vector<Tensor> adjoints(nodes_.size());
    adjoints[root.id()] = seed;

    for (std::size_t i = root.id() + 1; i-- > 0;) {
        const Node& n = nodes_[i];
        if (!n.requires_grad || n.grad == nullptr) continue;
        const Tensor& up = adjoints[i];
        if (up.size() == 0) continue;  // unreached from root
        std::vector<Tensor> contribs = n.grad(up);
        if (contribs.size() != n.inputs.size())
            throw std::logic_error(std::string(n.op) + ": gradient rule arity mismatch");
        for (std::size_t k = 0; k < n.inputs.size(); ++k) {
            const NodeId src = n.inputs[k];
            if (!nodes_[src].requires_grad) continue;
            Tensor& acc = adjoints[src];
            const Tensor& c = contribs[k];
            check_same_shape(c, nodes_[src].value, n.op);
            if (acc.size() == 0) {
                acc = c;
            } else {
                for (std::size_t j = 0; j < acc.size(); ++j) acc[j] += c[j];
            }
        }
    }

    GradientMap map;
    for (NodeId id = 0; id < nodes_.size(); ++id) {
        const Node& n = nodes_[id];
        if (!n.tracked) continue;
        if (blocked.blocked(id) || adjoints[id].size() == 0) {
            map.entries_.emplace_back(id, Tensor::zeros(n.value.shape()));
        } else {
            map.entries_.emplace_back(id, std::move(adjoints[id]));
        }
    }
    return map;
}

Tensor finite_difference_gradient(const std::function<double(const Tensor&)>& f, const Tensor& x,
                                  double h) {
    if (!(h > 0.0)) throw std::invalid_argument("finite_difference_gradient: h must be > 0");
    Tensor grad(x.shape());
    Tensor probe = x;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double orig = probe[i];
        probe[i] = orig + h;
        const double fp = f(probe);
        probe[i] = orig - h;
        const double fm = f(probe);
        probe[i] = orig;
        if (!std::isfinite(fp) || !std::isfinite(fm))
            throw std::runtime_error("finite_difference_gradient: non-finite function value");
        grad[i] = (fp - fm) / (2.0 * h);
    }
    return grad;
}

}  // namespace vfl::ad
