#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "cdamd/errors.hpp"
#include "cdamd/types.hpp"

namespace cdamd::ad {

template <class Scalar>
struct Parameter {
  std::string name;
  Mat<Scalar> value;
  Mat<Scalar> grad;

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

// Named parameter container. Creation order is irrelevant to initialization
// (init draws are keyed by name), which keeps checkpoints stable across
// refactors.
template <class Scalar>
class ParamStore {
 public:
  Parameter<Scalar>& create(const std::string& name, Eigen::Index rows, Eigen::Index cols) {
    if (find(name) != nullptr) throw ConfigError("duplicate parameter: " + name);
    auto p = std::make_unique<Parameter<Scalar>>();
    p->name = name;
    p->value.setZero(rows, cols);
    p->grad.setZero(rows, cols);
    items_.push_back(std::move(p));
    return *items_.back();
  }

  Parameter<Scalar>* find(const std::string& name) {
    for (auto& p : items_)
      if (p->name == name) return p.get();
    return nullptr;
  }

  Parameter<Scalar>& at(const std::string& name) {
    auto* p = find(name);
    if (p == nullptr) throw ConfigError("unknown parameter: " + name);
    return *p;
  }

  void zero_grads() {
    for (auto& p : items_) p->zero_grad();
  }

  std::size_t size() const { return items_.size(); }
  Parameter<Scalar>& operator[](std::size_t i) { return *items_[i]; }
  const Parameter<Scalar>& operator[](std::size_t i) const { return *items_[i]; }

 private:
  std::vector<std::unique_ptr<Parameter<Scalar>>> items_;
};

// Define-by-run reverse-mode tape over dense Eigen matrices. Values are
// computed eagerly; backward() replays closures in reverse order and
// accumulates into Parameter::grad for leaves.
template <class Scalar>
class Graph {
 public:
  using Id = std::int32_t;
  using M = Mat<Scalar>;

  Id constant(M v) { return push(std::move(v), nullptr, {}); }

  Id param(Parameter<Scalar>& p) {
    Id id = push(p.value, nullptr, {});
    nodes_[static_cast<std::size_t>(id)].leaf = &p;
    return id;
  }

  const M& value(Id id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  const M& grad(Id id) const { return nodes_[static_cast<std::size_t>(id)].grad; }

  Id add(Id a, Id b) {
    check_same_shape(a, b, "add");
    return push(value(a) + value(b), [](Graph& g, Node& n) {
      g.acc(n.in[0], n.grad);
      g.acc(n.in[1], n.grad);
    }, {a, b});
  }

  Id sub(Id a, Id b) {
    check_same_shape(a, b, "sub");
    return push(value(a) - value(b), [](Graph& g, Node& n) {
      g.acc(n.in[0], n.grad);
      g.acc(n.in[1], -n.grad);
    }, {a, b});
  }

  // Broadcast a 1xC row vector over every row of a.
  Id add_rowvec(Id a, Id row) {
    if (value(row).rows() != 1 || value(row).cols() != value(a).cols())
      throw DimensionError("add_rowvec: bias must be 1 x cols(a)");
    M out = value(a).rowwise() + value(row).row(0);
    return push(std::move(out), [](Graph& g, Node& n) {
      g.acc(n.in[0], n.grad);
      g.acc(n.in[1], n.grad.colwise().sum());
    }, {a, row});
  }

  Id hadamard(Id a, Id b) {
    check_same_shape(a, b, "hadamard");
    return push(value(a).cwiseProduct(value(b)), [](Graph& g, Node& n) {
      g.acc(n.in[0], n.grad.cwiseProduct(g.value(n.in[1])));
      g.acc(n.in[1], n.grad.cwiseProduct(g.value(n.in[0])));
    }, {a, b});
  }

  Id scale(Id a, Scalar s) {
    return push(value(a) * s, [s](Graph& g, Node& n) { g.acc(n.in[0], n.grad * s); }, {a});
  }

  // Multiply every entry of a by a 1x1 node (learnable scalar).
  Id scale_by(Id a, Id s) {
    if (value(s).size() != 1) throw DimensionError("scale_by: scalar node must be 1x1");
    return push(value(a) * value(s)(0, 0), [](Graph& g, Node& n) {
      g.acc(n.in[0], n.grad * g.value(n.in[1])(0, 0));
      M gs(1, 1);
      gs(0, 0) = n.grad.cwiseProduct(g.value(n.in[0])).sum();
      g.acc(n.in[1], gs);
    }, {a, s});
  }

  Id add_scalar(Id a, Scalar s) {
    return push(M((value(a).array() + s).matrix()), [](Graph& g, Node& n) { g.acc(n.in[0], n.grad); }, {a});
  }

  Id matmul(Id a, Id b) {
    if (value(a).cols() != value(b).rows()) throw DimensionError("matmul: inner dims differ");
    return push(value(a) * value(b), [](Graph& g, Node& n) {
      g.acc(n.in[0], n.grad * g.value(n.in[1]).transpose());
      g.acc(n.in[1], g.value(n.in[0]).transpose() * n.grad);
    }, {a, b});
  }

  // a * b^T
  Id matmul_nt(Id a, Id b) {
    if (value(a).cols() != value(b).cols()) throw DimensionError("matmul_nt: inner dims differ");
    return push(value(a) * value(b).transpose(), [](Graph& g, Node& n) {
      g.acc(n.in[0], n.grad * g.value(n.in[1]));
      g.acc(n.in[1], n.grad.transpose() * g.value(n.in[0]));
    }, {a, b});
  }

  Id relu(Id a) {
    return push(value(a).cwiseMax(Scalar(0)), [](Graph& g, Node& n) {
      M m = (g.value(n.in[0]).array() > Scalar(0)).template cast<Scalar>().matrix();
      g.acc(n.in[0], n.grad.cwiseProduct(m));
    }, {a});
  }

  Id silu(Id a) {
    M sig = sigmoid(value(a));
    return push(value(a).cwiseProduct(sig), [](Graph& g, Node& n) {
      M sig2 = sigmoid(g.value(n.in[0]));
      M d = (sig2.array() * (Scalar(1) + g.value(n.in[0]).array() * (Scalar(1) - sig2.array()))).matrix();
      g.acc(n.in[0], n.grad.cwiseProduct(d));
    }, {a});
  }

  Id tanh_op(Id a) {
    return push(M(value(a).array().tanh().matrix()), [](Graph& g, Node& n) {
      M t = g.value(n.in[0]).array().tanh().matrix();
      M d = (Scalar(1) - t.array().square()).matrix();
      g.acc(n.in[0], n.grad.cwiseProduct(d));
    }, {a});
  }

  Id abs_op(Id a) {
    return push(value(a).cwiseAbs(), [](Graph& g, Node& n) {
      M s = g.value(n.in[0]).array().sign().matrix();
      g.acc(n.in[0], n.grad.cwiseProduct(s));
    }, {a});
  }

  Id square(Id a) {
    return push(M(value(a).array().square().matrix()), [](Graph& g, Node& n) {
      g.acc(n.in[0], Scalar(2) * n.grad.cwiseProduct(g.value(n.in[0])));
    }, {a});
  }

  // Row-wise softmax of (logits + additive), where additive is a constant
  // matrix (typically 0 / -1e9 from a visibility mask).
  Id softmax_rows(Id logits, const M& additive) {
    if (additive.rows() != value(logits).rows() || additive.cols() != value(logits).cols())
      throw DimensionError("softmax_rows: additive mask shape mismatch");
    M z = value(logits) + additive;
    M out(z.rows(), z.cols());
    for (Eigen::Index r = 0; r < z.rows(); ++r) {
      Scalar mx = z.row(r).maxCoeff();
      Eigen::Array<Scalar, 1, Eigen::Dynamic> e = (z.row(r).array() - mx).exp();
      out.row(r) = (e / e.sum()).matrix();
    }
    return push(std::move(out), [](Graph& g, Node& n) {
      const M& y = n.value;
      M gx(y.rows(), y.cols());
      for (Eigen::Index r = 0; r < y.rows(); ++r) {
        Scalar dot = n.grad.row(r).dot(y.row(r));
        gx.row(r) = (y.row(r).array() * (n.grad.row(r).array() - dot)).matrix();
      }
      g.acc(n.in[0], gx);
    }, {logits});
  }

  Id softmax_rows(Id logits) { return softmax_rows(logits, M::Zero(value(logits).rows(), value(logits).cols())); }

  Id log_softmax_rows(Id logits) {
    M z = value(logits);
    M out(z.rows(), z.cols());
    for (Eigen::Index r = 0; r < z.rows(); ++r) {
      Scalar mx = z.row(r).maxCoeff();
      Scalar lse = mx + std::log((z.row(r).array() - mx).exp().sum());
      out.row(r) = (z.row(r).array() - lse).matrix();
    }
    return push(std::move(out), [](Graph& g, Node& n) {
      M soft = n.value.array().exp().matrix();
      M gx(n.value.rows(), n.value.cols());
      for (Eigen::Index r = 0; r < n.value.rows(); ++r) {
        Scalar s = n.grad.row(r).sum();
        gx.row(r) = n.grad.row(r) - s * soft.row(r);
      }
      g.acc(n.in[0], gx);
    }, {logits});
  }

  // Per-row layer norm with 1xC gain and bias.
  Id layer_norm(Id x, Id gain, Id bias, Scalar eps = Scalar(1e-5)) {
    const M& xv = value(x);
    if (value(gain).cols() != xv.cols() || value(bias).cols() != xv.cols())
      throw DimensionError("layer_norm: gain/bias must be 1 x cols(x)");
    const auto C = static_cast<Scalar>(xv.cols());
    M xhat(xv.rows(), xv.cols());
    Vec<Scalar> inv_std(xv.rows());
    for (Eigen::Index r = 0; r < xv.rows(); ++r) {
      Scalar mu = xv.row(r).mean();
      Scalar var = (xv.row(r).array() - mu).square().sum() / C;
      inv_std(r) = Scalar(1) / std::sqrt(var + eps);
      xhat.row(r) = ((xv.row(r).array() - mu) * inv_std(r)).matrix();
    }
    M out = ((xhat.array().rowwise() * value(gain).row(0).array()).rowwise() +
             value(bias).row(0).array()).matrix();
    Id id = push(std::move(out), [C](Graph& g, Node& n) {
      const M& xhat2 = n.aux[0];
      const M& istd = n.aux[1];
      const M& gn = g.value(n.in[1]);
      // d/dgain, d/dbias
      g.acc(n.in[1], (n.grad.cwiseProduct(xhat2)).colwise().sum());
      g.acc(n.in[2], n.grad.colwise().sum());
      // d/dx
      M gx(xhat2.rows(), xhat2.cols());
      for (Eigen::Index r = 0; r < xhat2.rows(); ++r) {
        Eigen::Array<Scalar, 1, Eigen::Dynamic> gy = n.grad.row(r).array() * gn.row(0).array();
        Scalar mean_gy = gy.sum() / C;
        Scalar mean_gy_xhat = (gy * xhat2.row(r).array()).sum() / C;
        gx.row(r) = (istd(r, 0) * (gy - mean_gy - xhat2.row(r).array() * mean_gy_xhat)).matrix();
      }
      g.acc(n.in[0], gx);
    }, {x, gain, bias});
    nodes_[static_cast<std::size_t>(id)].aux.push_back(std::move(xhat));
    nodes_[static_cast<std::size_t>(id)].aux.push_back(inv_std);
    return id;
  }

  // Gather rows by index; backward scatter-adds.
  Id rows(Id x, std::vector<int> idx) {
    const M& xv = value(x);
    M out(static_cast<Eigen::Index>(idx.size()), xv.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) {
      if (idx[i] < 0 || idx[i] >= xv.rows()) throw ValidationError("rows: index out of range");
      out.row(static_cast<Eigen::Index>(i)) = xv.row(idx[i]);
    }
    Id id = push(std::move(out), [](Graph& g, Node& n) {
      M gx = M::Zero(g.value(n.in[0]).rows(), g.value(n.in[0]).cols());
      for (std::size_t i = 0; i < n.idx.size(); ++i)
        gx.row(n.idx[i]) += n.grad.row(static_cast<Eigen::Index>(i));
      g.acc(n.in[0], gx);
    }, {x});
    nodes_[static_cast<std::size_t>(id)].idx = std::move(idx);
    return id;
  }

  // Gather a contiguous column block [start, start+n).
  Id cols(Id x, Eigen::Index start, Eigen::Index n) {
    const M& xv = value(x);
    if (start < 0 || start + n > xv.cols()) throw DimensionError("cols: range out of bounds");
    return push(xv.middleCols(start, n), [start, n](Graph& g, Node& nd) {
      M gx = M::Zero(g.value(nd.in[0]).rows(), g.value(nd.in[0]).cols());
      gx.middleCols(start, n) = nd.grad;
      g.acc(nd.in[0], gx);
    }, {x});
  }

  Id concat_rows(Id a, Id b) {
    const M& av = value(a);
    const M& bv = value(b);
    if (av.cols() != bv.cols()) throw DimensionError("concat_rows: column mismatch");
    M out(av.rows() + bv.rows(), av.cols());
    out.topRows(av.rows()) = av;
    out.bottomRows(bv.rows()) = bv;
    return push(std::move(out), [](Graph& g, Node& n) {
      Eigen::Index ra = g.value(n.in[0]).rows();
      g.acc(n.in[0], n.grad.topRows(ra));
      g.acc(n.in[1], n.grad.bottomRows(n.grad.rows() - ra));
    }, {a, b});
  }

  Id concat_cols(const std::vector<Id>& parts) {
    if (parts.empty()) throw DimensionError("concat_cols: empty");
    Eigen::Index rows_n = value(parts[0]).rows();
    Eigen::Index total = 0;
    for (Id p : parts) {
      if (value(p).rows() != rows_n) throw DimensionError("concat_cols: row mismatch");
      total += value(p).cols();
    }
    M out(rows_n, total);
    Eigen::Index at = 0;
    for (Id p : parts) {
      out.middleCols(at, value(p).cols()) = value(p);
      at += value(p).cols();
    }
    return push(std::move(out), [](Graph& g, Node& n) {
      Eigen::Index at2 = 0;
      for (Id p : n.in) {
        Eigen::Index w = g.value(p).cols();
        g.acc(p, n.grad.middleCols(at2, w));
        at2 += w;
      }
    }, parts);
  }

  // Nearest-neighbour upsample along rows: each row repeated `factor` times.
  Id repeat_rows(Id x, int factor) {
    const M& xv = value(x);
    M out(xv.rows() * factor, xv.cols());
    for (Eigen::Index r = 0; r < xv.rows(); ++r)
      for (int k = 0; k < factor; ++k) out.row(r * factor + k) = xv.row(r);
    return push(std::move(out), [factor](Graph& g, Node& n) {
      const M& xv2 = g.value(n.in[0]);
      M gx(xv2.rows(), xv2.cols());
      for (Eigen::Index r = 0; r < xv2.rows(); ++r) {
        gx.row(r) = n.grad.row(r * factor);
        for (int k = 1; k < factor; ++k) gx.row(r) += n.grad.row(r * factor + k);
      }
      g.acc(n.in[0], gx);
    }, {x});
  }

  // Unfold a T x C sequence into (out_len) x (kernel*C) patch rows for a
  // temporal convolution realized as im2col + matmul. Out-of-range taps are
  // zero. pad_left/pad_right are explicit.
  Id im2col(Id x, int kernel, int stride, int dilation, int pad_left, int pad_right) {
    const M& xv = value(x);
    const Eigen::Index T = xv.rows();
    const Eigen::Index C = xv.cols();
    const Eigen::Index eff = static_cast<Eigen::Index>(kernel - 1) * dilation + 1;
    const Eigen::Index padded = T + pad_left + pad_right;
    if (padded < eff) throw DimensionError("im2col: input too short for kernel");
    const Eigen::Index out_len = (padded - eff) / stride + 1;
    M out = M::Zero(out_len, static_cast<Eigen::Index>(kernel) * C);
    for (Eigen::Index o = 0; o < out_len; ++o) {
      for (int k = 0; k < kernel; ++k) {
        Eigen::Index t = o * stride + static_cast<Eigen::Index>(k) * dilation - pad_left;
        if (t >= 0 && t < T) out.block(o, static_cast<Eigen::Index>(k) * C, 1, C) = xv.row(t);
      }
    }
    return push(std::move(out),
                [kernel, stride, dilation, pad_left](Graph& g, Node& n) {
      const M& xv2 = g.value(n.in[0]);
      const Eigen::Index T2 = xv2.rows();
      const Eigen::Index C2 = xv2.cols();
      M gx = M::Zero(T2, C2);
      for (Eigen::Index o = 0; o < n.grad.rows(); ++o) {
        for (int k = 0; k < kernel; ++k) {
          Eigen::Index t = o * stride + static_cast<Eigen::Index>(k) * dilation - pad_left;
          if (t >= 0 && t < T2)
            gx.row(t) += n.grad.block(o, static_cast<Eigen::Index>(k) * C2, 1, C2);
        }
      }
      g.acc(n.in[0], gx);
    }, {x});
  }

  Id sum(Id a) {
    M out(1, 1);
    out(0, 0) = value(a).sum();
    return push(std::move(out), [](Graph& g, Node& n) {
      g.acc(n.in[0], M::Constant(g.value(n.in[0]).rows(), g.value(n.in[0]).cols(), n.grad(0, 0)));
    }, {a});
  }

  Id mean_all(Id a) {
    const auto count = static_cast<Scalar>(value(a).size());
    return scale(sum(a), Scalar(1) / count);
  }

  // Column-wise mean: R x C -> 1 x C.
  Id mean_rows(Id a) {
    const auto rows_n = static_cast<Scalar>(value(a).rows());
    M out = value(a).colwise().mean();
    return push(std::move(out), [rows_n](Graph& g, Node& n) {
      M gx = (M::Ones(g.value(n.in[0]).rows(), 1) * n.grad.row(0)) / rows_n;
      g.acc(n.in[0], gx);
    }, {a});
  }

  // Mean of the main diagonal of a square matrix; 1x1 output.
  Id diag_mean(Id a) {
    const M& av = value(a);
    if (av.rows() != av.cols()) throw DimensionError("diag_mean: matrix not square");
    M out(1, 1);
    out(0, 0) = av.diagonal().mean();
    return push(std::move(out), [](Graph& g, Node& n) {
      const Eigen::Index B = g.value(n.in[0]).rows();
      M gx = M::Zero(B, B);
      gx.diagonal().setConstant(n.grad(0, 0) / static_cast<Scalar>(B));
      g.acc(n.in[0], gx);
    }, {a});
  }

  // Row L2 normalization, y_r = x_r / max(|x_r|, eps).
  Id l2_normalize_rows(Id x, Scalar eps = Scalar(1e-8)) {
    const M& xv = value(x);
    M out(xv.rows(), xv.cols());
    Vec<Scalar> norms(xv.rows());
    for (Eigen::Index r = 0; r < xv.rows(); ++r) {
      norms(r) = std::max(xv.row(r).norm(), eps);
      out.row(r) = xv.row(r) / norms(r);
    }
    Id id = push(std::move(out), [](Graph& g, Node& n) {
      const M& xv2 = g.value(n.in[0]);
      const M& nr = n.aux[0];
      M gx(xv2.rows(), xv2.cols());
      for (Eigen::Index r = 0; r < xv2.rows(); ++r) {
        Scalar inv = Scalar(1) / nr(r, 0);
        Scalar dot = n.grad.row(r).dot(xv2.row(r));
        gx.row(r) = n.grad.row(r) * inv - xv2.row(r) * (dot * inv * inv * inv);
      }
      g.acc(n.in[0], gx);
    }, {x});
    nodes_[static_cast<std::size_t>(id)].aux.push_back(norms);
    return id;
  }

  // Mean over rows of per-row squared L2 norms: (1/R) sum_r |a_r|^2.
  Id mean_row_sq_norm(Id a) {
    const auto rows_n = static_cast<Scalar>(value(a).rows());
    return scale(sum(square(a)), Scalar(1) / rows_n);
  }

  void backward(Id loss) {
    Node& last = nodes_[static_cast<std::size_t>(loss)];
    if (last.value.size() != 1) throw DimensionError("backward: loss must be scalar (1x1)");
    for (auto& n : nodes_)
      if (n.grad.size() == 0) n.grad.setZero(n.value.rows(), n.value.cols());
    last.grad(0, 0) = Scalar(1);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
      Node& n = *it;
      if (n.back) n.back(*this, n);
      if (n.leaf != nullptr) n.leaf->grad += n.grad;
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    M value;
    M grad;
    std::vector<Id> in;
    std::vector<int> idx;     // for rows()
    std::vector<M> aux;       // cached intermediates for backward
    std::function<void(Graph&, Node&)> back;
    Parameter<Scalar>* leaf = nullptr;
  };

  static M sigmoid(const M& x) {
    return ((-x.array()).exp() + Scalar(1)).inverse().matrix();
  }

  void check_same_shape(Id a, Id b, const char* op) {
    if (value(a).rows() != value(b).rows() || value(a).cols() != value(b).cols())
      throw DimensionError(std::string(op) + ": shape mismatch");
  }

  template <class Derived>
  void acc(Id id, const Eigen::MatrixBase<Derived>& g) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.grad.size() == 0) n.grad.setZero(n.value.rows(), n.value.cols());
    n.grad += g;
  }

  Id push(M value, std::function<void(Graph&, Node&)> back, std::vector<Id> in) {
    Node n;
    n.value = std::move(value);
    n.back = std::move(back);
    n.in = std::move(in);
    nodes_.push_back(std::move(n));
    return static_cast<Id>(nodes_.size() - 1);
  }

  std::vector<Node> nodes_;
};

}  // namespace cdamd::ad
