#pragma once

// Minimal dense-matrix reverse-mode differentiation.
//
// Every value is a row-major matrix of doubles (a scalar is 1x1). A Tape
// records each primitive as a node holding its forward value and a closure
// that propagates the node's adjoint to its operands. backward() seeds the
// scalar loss with 1 and visits nodes in exact reverse recording order.
//
// Binary elementwise primitives accept a 1 x cols right operand and broadcast
// it across rows (used for biases and normalization gains).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "demma/error.hpp"

namespace demma {

class Tensor {
 public:
  Tensor() = default;
  Tensor(std::size_t rows, std::size_t cols, double fill = 0.0) : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Tensor(std::size_t rows, std::size_t cols, std::vector<double> values)
      : rows_(rows), cols_(cols), data_(std::move(values)) {
    if (data_.size() != rows_ * cols_) {
      throw ShapeError("tensor value count " + std::to_string(data_.size()) + " != " + shape_string());
    }
  }
  Tensor(std::initializer_list<std::initializer_list<double>> rows) {
    rows_ = rows.size();
    cols_ = rows_ ? rows.begin()->size() : 0;
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
      if (r.size() != cols_) throw ShapeError("ragged tensor literal");
      data_.insert(data_.end(), r.begin(), r.end());
    }
  }

  static Tensor scalar(double v) { return Tensor(1, 1, v); }
  static Tensor identity(std::size_t n) {
    Tensor t(n, n);
    for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
    return t;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  std::vector<std::size_t> shape() const { return {rows_, cols_}; }
  std::string shape_string() const { return "[" + std::to_string(rows_) + "x" + std::to_string(cols_) + "]"; }
  bool same_shape(const Tensor& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double item() const {
    if (data_.size() != 1) throw ShapeError("item() on " + shape_string());
    return data_[0];
  }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  const std::vector<double>& data() const { return data_; }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }
  bool operator==(const Tensor&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// Deliberate adjoint corruption, used as a negative control for gradient checks.
enum class AdjointFault {
  kNone,
  kSigmoid,  // sigmoid adjoint scaled by 1.1
};

class Tape;

/// Handle to a node on a tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;
};

class Tape {
 public:
  explicit Tape(AdjointFault fault = AdjointFault::kNone) : fault_(fault) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value) { return push(std::move(value), false, {}); }
  Var parameter(Tensor value) { return push(std::move(value), true, {}); }

  const Tensor& value(Var v) const { return nodes_[v.id].value; }
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }
  // Adjoint of a node after backward(); zeros if none reached it.
  Tensor grad(Var v) const {
    const Node& n = nodes_[v.id];
    return n.grad.size() ? n.grad : Tensor(n.value.rows(), n.value.cols());
  }
  std::size_t size() const { return nodes_.size(); }
  AdjointFault fault() const { return fault_; }

  void backward(Var loss) {
    Node& root = nodes_[loss.id];
    if (root.value.size() != 1) throw ShapeError("backward requires a scalar loss, got " + root.value.shape_string());
    for (Node& n : nodes_) n.grad = Tensor();
    root.grad = Tensor::scalar(1.0);
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (n.backward && n.grad.size()) n.backward(*this, i);
    }
  }

  // Used by primitives.
  using BackwardFn = std::function<void(Tape&, std::size_t)>;
  Var record(Tensor value, std::initializer_list<Var> inputs, BackwardFn fn) {
    bool needs = false;
    for (Var in : inputs) {
      if (in.tape != this) throw ShapeError("operands recorded on different tapes");
      needs = needs || nodes_[in.id].requires_grad;
    }
    return push(std::move(value), needs, needs ? std::move(fn) : BackwardFn{});
  }
  Var record(Tensor value, const std::vector<Var>& inputs, BackwardFn fn) {
    bool needs = false;
    for (Var in : inputs) {
      if (in.tape != this) throw ShapeError("operands recorded on different tapes");
      needs = needs || nodes_[in.id].requires_grad;
    }
    return push(std::move(value), needs, needs ? std::move(fn) : BackwardFn{});
  }
  const Tensor& out_grad(std::size_t id) const { return nodes_[id].grad; }
  const Tensor& node_value(std::size_t id) const { return nodes_[id].value; }
  // Adjoint accumulator for an operand; nullptr if the operand needs no gradient.
  Tensor* accumulator(Var v) {
    Node& n = nodes_[v.id];
    if (!n.requires_grad) return nullptr;
    if (!n.grad.size()) n.grad = Tensor(n.value.rows(), n.value.cols());
    return &n.grad;
  }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    BackwardFn backward;
  };

  Var push(Tensor value, bool requires_grad, BackwardFn fn) {
    nodes_.push_back({std::move(value), Tensor(), requires_grad, std::move(fn)});
    return {this, nodes_.size() - 1};
  }

  std::vector<Node> nodes_;
  AdjointFault fault_;
};

// ---------------------------------------------------------------------------
// Primitives

namespace detail {

inline void require(bool ok, const std::string& op, const Tensor& a, const Tensor& b) {
  if (!ok) throw ShapeError(op + ": " + a.shape_string() + " vs " + b.shape_string());
}

// b either matches a, or is a single row broadcast over a's rows.
inline bool row_broadcast(const Tensor& a, const Tensor& b, const std::string& op) {
  if (a.same_shape(b)) return false;
  require(b.rows() == 1 && b.cols() == a.cols(), op, a, b);
  return true;
}

}  // namespace detail

inline Var add(Var a, Var b) {
  Tape& t = *a.tape;
  const Tensor& x = t.value(a);
  const Tensor& y = t.value(b);
  const bool bc = detail::row_broadcast(x, y, "add");
  Tensor out = x;
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t c = 0; c < x.cols(); ++c) out(r, c) += bc ? y(0, c) : y(r, c);
  return t.record(std::move(out), {a, b}, [a, b, bc](Tape& tp, std::size_t self) {
    const Tensor& g = tp.out_grad(self);
    if (Tensor* ga = tp.accumulator(a))
      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i];
    if (Tensor* gb = tp.accumulator(b)) {
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < g.cols(); ++c) (bc ? (*gb)(0, c) : (*gb)(r, c)) += g(r, c);
    }
  });
}

inline Var sub(Var a, Var b) {
  Tape& t = *a.tape;
  const Tensor& x = t.value(a);
  const Tensor& y = t.value(b);
  const bool bc = detail::row_broadcast(x, y, "sub");
  Tensor out = x;
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t c = 0; c < x.cols(); ++c) out(r, c) -= bc ? y(0, c) : y(r, c);
  return t.record(std::move(out), {a, b}, [a, b, bc](Tape& tp, std::size_t self) {
    const Tensor& g = tp.out_grad(self);
    if (Tensor* ga = tp.accumulator(a))
      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i];
    if (Tensor* gb = tp.accumulator(b)) {
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < g.cols(); ++c) (bc ? (*gb)(0, c) : (*gb)(r, c)) -= g(r, c);
    }
  });
}

/// Elementwise (Hadamard) product.
inline Var mul(Var a, Var b) {
  Tape& t = *a.tape;
  const Tensor& x = t.value(a);
  const Tensor& y = t.value(b);
  const bool bc = detail::row_broadcast(x, y, "mul");
  Tensor out = x;
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t c = 0; c < x.cols(); ++c) out(r, c) *= bc ? y(0, c) : y(r, c);
  return t.record(std::move(out), {a, b}, [a, b, bc](Tape& tp, std::size_t self) {
    const Tensor& g = tp.out_grad(self);
    const Tensor& x = tp.node_value(a.id);
    const Tensor& y = tp.node_value(b.id);
    if (Tensor* ga = tp.accumulator(a)) {
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < g.cols(); ++c) (*ga)(r, c) += g(r, c) * (bc ? y(0, c) : y(r, c));
    }
    if (Tensor* gb = tp.accumulator(b)) {
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < g.cols(); ++c) (bc ? (*gb)(0, c) : (*gb)(r, c)) += g(r, c) * x(r, c);
    }
  });
}

namespace detail {

// out += A * B (accumulating), with optional transposes.
inline void gemm_acc(const Tensor& a, bool ta, const Tensor& b, bool tb, Tensor& out) {
  const std::size_t m = ta ? a.cols() : a.rows();
  const std::size_t k = ta ? a.rows() : a.cols();
  const std::size_t n = tb ? b.rows() : b.cols();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ta ? a(p, i) : a(i, p);
      if (av == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j) out(i, j) += av * (tb ? b(j, p) : b(p, j));
    }
  }
}

}  // namespace detail

inline Var matmul(Var a, Var b) {
  Tape& t = *a.tape;
  const Tensor& x = t.value(a);
  const Tensor& y = t.value(b);
  detail::require(x.cols() == y.rows(), "matmul", x, y);
  Tensor out(x.rows(), y.cols());
  detail::gemm_acc(x, false, y, false, out);
  return t.record(std::move(out), {a, b}, [a, b](Tape& tp, std::size_t self) {
    const Tensor& g = tp.out_grad(self);
    if (Tensor* ga = tp.accumulator(a)) detail::gemm_acc(g, false, tp.node_value(b.id), true, *ga);
    if (Tensor* gb = tp.accumulator(b)) detail::gemm_acc(tp.node_value(a.id), true, g, false, *gb);
  });
}

/// Concatenation along the last (column) axis.
inline Var concat(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat of zero tensors");
  Tape& t = *parts.front().tape;
  const std::size_t rows = t.value(parts.front()).rows();
  std::size_t cols = 0;
  for (Var p : parts) {
    detail::require(t.value(p).rows() == rows, "concat", t.value(parts.front()), t.value(p));
    cols += t.value(p).cols();
  }
  Tensor out(rows, cols);
  std::size_t off = 0;
  for (Var p : parts) {
    const Tensor& v = t.value(p);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < v.cols(); ++c) out(r, off + c) = v(r, c);
    off += v.cols();
  }
  return t.record(std::move(out), parts, [parts](Tape& tp, std::size_t self) {
    const Tensor& g = tp.out_grad(self);
    std::size_t off = 0;
    for (Var p : parts) {
      const std::size_t w = tp.node_value(p.id).cols();
      if (Tensor* gp = tp.accumulator(p)) {
        for (std::size_t r = 0; r < g.rows(); ++r)
          for (std::size_t c = 0; c < w; ++c) (*gp)(r, c) += g(r, off + c);
      }
      off += w;
    }
  });
}

/// Sub-block [r0, r1) x [c0, c1).
inline Var slice(Var a, std::size_t r0, std::size_t r1, std::size_t c0, std::size_t c1) {
  Tape& t = *a.tape;
  const Tensor& x = t.value(a);
  if (!(r0 < r1 && r1 <= x.rows() && c0 < c1 && c1 <= x.cols())) {
    std::ostringstream os;
    os << "slice [" << r0 << "," << r1 << ")x[" << c0 << "," << c1 << ") of " << x.shape_string();
    throw ShapeError(os.str());
  }
  Tensor out(r1 - r0, c1 - c0);
  for (std::size_t r = r0; r < r1; ++r)
    for (std::size_t c = c0; c < c1; ++c) out(r - r0, c - c0) = x(r, c);
  return t.record(std::move(out), {a}, [a, r0, c0](Tape& tp, std::size_t self) {
    const Tensor& g = tp.out_grad(self);
    if (Tensor* ga = tp.accumulator(a))
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < g.cols(); ++c) (*ga)(r0 + r, c0 + c) += g(r, c);
  });
}

/// Columns [c0, c1), all rows.
inline Var slice_cols(Var a, std::size_t c0, std::size_t c1) {
  return slice(a, 0, a.tape->value(a).rows(), c0, c1);
}

inline Var transpose(Var a) {
  Tape& t = *a.tape;
  const Tensor& x = t.value(a);
  Tensor out(x.cols(), x.rows());
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t c = 0; c < x.cols(); ++c) out(c, r) = x(r, c);
  return t.record(std::move(out), {a}, [a](Tape& tp, std::size_t self) {
    const Tensor& g = tp.out_grad(self);
    if (Tensor* ga = tp.accumulator(a))
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < g.cols(); ++c) (*ga)(c, r) += g(r, c);
  });
}

namespace detail {

template <class Forward, class Derivative>
Var unary(Var a, Forward f, Derivative df) {
  Tape& t = *a.tape;
  Tensor out = t.value(a);
  for (double& v : out.values()) v = f(v);
  return t.record(std::move(out), {a}, [a, df](Tape& tp, std::size_t self) {
    const Tensor& g = tp.out_grad(self);
    const Tensor& y = tp.node_value(self);
    const Tensor& x = tp.node_value(a.id);
    if (Tensor* ga = tp.accumulator(a))
      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * df(x[i], y[i]);
  });
}

inline double sigmoid_scalar(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace detail

inline Var sigmoid(Var a) {
  const double k = a.tape->fault() == AdjointFault::kSigmoid ? 1.1 : 1.0;
  return detail::unary(a, detail::sigmoid_scalar, [k](double, double y) { return k * y * (1.0 - y); });
}

inline Var tanh(Var a) {
  return detail::unary(a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

inline Var relu(Var a) {
  return detail::unary(a, [](double x) { return x > 0.0 ? x : 0.0; },
                       [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

inline Var scale(Var a, double s) {
  return detail::unary(a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

/// Elementwise clamp to [lo, hi]; the adjoint passes through inside the
/// interval and is zero where the value was clamped.
inline Var clamp(Var a, double lo, double hi) {
  return detail::unary(a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
                       [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

/// Sum of all entries, as a 1x1 tensor.
inline Var sum(Var a) {
  Tape& t = *a.tape;
  double s = 0.0;
  for (double v : t.value(a).values()) s += v;
  return t.record(Tensor::scalar(s), {a}, [a](Tape& tp, std::size_t self) {
    const double g = tp.out_grad(self)[0];
    if (Tensor* ga = tp.accumulator(a))
      for (double& v : ga->values()) v += g;
  });
}

/// Softmax along each row (max-subtracted).
inline Var softmax_rows(Var a) {
  Tape& t = *a.tape;
  Tensor out = t.value(a);
  for (std::size_t r = 0; r < out.rows(); ++r) {
    double mx = out(r, 0);
    for (std::size_t c = 1; c < out.cols(); ++c) mx = std::max(mx, out(r, c));
    double z = 0.0;
    for (std::size_t c = 0; c < out.cols(); ++c) {
      out(r, c) = std::exp(out(r, c) - mx);
      z += out(r, c);
    }
    for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) /= z;
  }
  return t.record(std::move(out), {a}, [a](Tape& tp, std::size_t self) {
    const Tensor& g = tp.out_grad(self);
    const Tensor& s = tp.node_value(self);
    if (Tensor* ga = tp.accumulator(a)) {
      for (std::size_t r = 0; r < g.rows(); ++r) {
        double dot = 0.0;
        for (std::size_t c = 0; c < g.cols(); ++c) dot += g(r, c) * s(r, c);
        for (std::size_t c = 0; c < g.cols(); ++c) (*ga)(r, c) += s(r, c) * (g(r, c) - dot);
      }
    }
  });
}

/// Per-row normalization to zero mean and unit variance, eps inside the
/// square root. No affine parameters (apply those with mul/add).
inline Var layer_normalize(Var a, double eps = 1e-5) {
  Tape& t = *a.tape;
  const Tensor& x = t.value(a);
  const std::size_t rows = x.rows();
  const std::size_t cols = x.cols();
  Tensor out(rows, cols);
  std::vector<double> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    double mean = 0.0;
    for (std::size_t c = 0; c < cols; ++c) mean += x(r, c);
    mean /= static_cast<double>(cols);
    double var = 0.0;
    for (std::size_t c = 0; c < cols; ++c) var += (x(r, c) - mean) * (x(r, c) - mean);
    var /= static_cast<double>(cols);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t c = 0; c < cols; ++c) out(r, c) = (x(r, c) - mean) * inv_std[r];
  }
  return t.record(std::move(out), {a}, [a, inv_std = std::move(inv_std)](Tape& tp, std::size_t self) {
    const Tensor& g = tp.out_grad(self);
    const Tensor& xhat = tp.node_value(self);
    Tensor* ga = tp.accumulator(a);
    if (!ga) return;
    const double n = static_cast<double>(g.cols());
    for (std::size_t r = 0; r < g.rows(); ++r) {
      double mean_g = 0.0;
      double mean_gx = 0.0;
      for (std::size_t c = 0; c < g.cols(); ++c) {
        mean_g += g(r, c);
        mean_gx += g(r, c) * xhat(r, c);
      }
      mean_g /= n;
      mean_gx /= n;
      for (std::size_t c = 0; c < g.cols(); ++c) {
        (*ga)(r, c) += inv_std[r] * (g(r, c) - mean_g - xhat(r, c) * mean_gx);
      }
    }
  });
}

/// Mean of squared differences over all entries, as a 1x1 tensor.
inline Var mean_square_error(Var a, Var b) {
  Tape& t = *a.tape;
  const Tensor& x = t.value(a);
  const Tensor& y = t.value(b);
  detail::require(x.same_shape(y), "mean_square_error", x, y);
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += (x[i] - y[i]) * (x[i] - y[i]);
  const double n = static_cast<double>(x.size());
  return t.record(Tensor::scalar(s / n), {a, b}, [a, b, n](Tape& tp, std::size_t self) {
    const double g = tp.out_grad(self)[0];
    const Tensor& x = tp.node_value(a.id);
    const Tensor& y = tp.node_value(b.id);
    Tensor* ga = tp.accumulator(a);
    Tensor* gb = tp.accumulator(b);
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double d = 2.0 * g * (x[i] - y[i]) / n;
      if (ga) (*ga)[i] += d;
      if (gb) (*gb)[i] -= d;
    }
  });
}

/// Mean pinball loss max(tau * e, (tau - 1) * e) with e = target - prediction.
/// The subgradient at e == 0 is taken as d/de = tau (left limit).
inline Var pinball(Var target, Var prediction, double tau) {
  Tape& t = *target.tape;
  const Tensor& q = t.value(target);
  const Tensor& p = t.value(prediction);
  detail::require(q.same_shape(p), "pinball", q, p);
  double s = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) {
    const double e = q[i] - p[i];
    s += std::max(tau * e, (tau - 1.0) * e);
  }
  const double n = static_cast<double>(q.size());
  return t.record(Tensor::scalar(s / n), {target, prediction},
                  [target, prediction, tau, n](Tape& tp, std::size_t self) {
                    const double g = tp.out_grad(self)[0];
                    const Tensor& q = tp.node_value(target.id);
                    const Tensor& p = tp.node_value(prediction.id);
                    Tensor* gq = tp.accumulator(target);
                    Tensor* gp = tp.accumulator(prediction);
                    for (std::size_t i = 0; i < q.size(); ++i) {
                      const double e = q[i] - p[i];
                      const double de = (e >= 0.0 ? tau : tau - 1.0) * g / n;
                      if (gq) (*gq)[i] += de;
                      if (gp) (*gp)[i] -= de;
                    }
                  });
}

/// Registers model tensors on a tape in a fixed order, as trainable leaves or
/// as constants (inference), and remembers the handles. The replay form hands
/// out already-registered handles in order instead.
class Binder {
 public:
  Binder(Tape& tape, bool trainable) : tape_(&tape), trainable_(trainable) {}
  Binder(Tape& tape, const std::vector<Var>& existing) : tape_(&tape), replay_(&existing) {}

  Var operator()(const Tensor& t) {
    if (replay_) {
      if (cursor_ >= replay_->size()) throw ShapeError("binder replay ran out of handles");
      const Var v = (*replay_)[cursor_++];
      if (!tape_->value(v).same_shape(t)) {
        throw ShapeError("binder replay: " + tape_->value(v).shape_string() + " vs " + t.shape_string());
      }
      vars_.push_back(v);
      return v;
    }
    const Var v = trainable_ ? tape_->parameter(t) : tape_->constant(t);
    vars_.push_back(v);
    return v;
  }
  Tape& tape() const { return *tape_; }
  const std::vector<Var>& vars() const { return vars_; }

 private:
  Tape* tape_;
  bool trainable_ = false;
  const std::vector<Var>* replay_ = nullptr;
  std::size_t cursor_ = 0;
  std::vector<Var> vars_;
};

// ---------------------------------------------------------------------------
// Finite-difference gradient check

struct NamedTensor {
  std::string name;
  Tensor* tensor = nullptr;
};

struct GradCheckEntry {
  std::string name;
  std::size_t size = 0;
  double max_abs_diff = 0.0;
  // max|g_a - g_n| / max(max|g_a|, max|g_n|, 1e-8) over the tensor's entries
  double rel_error = 0.0;
  bool passed = false;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double worst = 0.0;
  bool passed = true;
};

/// Builds the scalar loss on a fresh tape from the tape-bound parameters
/// (in the same order as the NamedTensor list).
using LossBuilder = std::function<Var(Tape&, const std::vector<Var>&)>;

/// Compares reverse-mode adjoints with central differences of step `step`.
/// Parameter tensors are perturbed in place and restored.
inline GradCheckReport gradient_check(std::span<NamedTensor> params, const LossBuilder& build, double step,
                                      double tolerance, AdjointFault fault = AdjointFault::kNone) {
  std::vector<Tensor> analytic;
  {
    Tape tape(fault);
    std::vector<Var> vars;
    for (const NamedTensor& p : params) vars.push_back(tape.parameter(*p.tensor));
    const Var loss = build(tape, vars);
    tape.backward(loss);
    for (Var v : vars) analytic.push_back(tape.grad(v));
  }
  auto evaluate = [&]() {
    Tape tape;
    std::vector<Var> vars;
    for (const NamedTensor& p : params) vars.push_back(tape.constant(*p.tensor));
    return tape.value(build(tape, vars)).item();
  };

  GradCheckReport report;
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& w = *params[k].tensor;
    GradCheckEntry e{params[k].name, w.size()};
    double scale_a = 0.0;
    double scale_n = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double orig = w[i];
      w[i] = orig + step;
      const double up = evaluate();
      w[i] = orig - step;
      const double down = evaluate();
      w[i] = orig;
      const double numeric = (up - down) / (2.0 * step);
      const double a = analytic[k][i];
      e.max_abs_diff = std::max(e.max_abs_diff, std::fabs(a - numeric));
      scale_a = std::max(scale_a, std::fabs(a));
      scale_n = std::max(scale_n, std::fabs(numeric));
    }
    e.rel_error = e.max_abs_diff / std::max({scale_a, scale_n, 1e-8});
    e.passed = e.rel_error < tolerance;
    report.worst = std::max(report.worst, e.rel_error);
    report.passed = report.passed && e.passed;
    report.entries.push_back(std::move(e));
  }
  return report;
}

}  // namespace demma
