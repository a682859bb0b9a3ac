#pragma once

// LSTM encoder and reversed-order reconstruction decoder.
//
// A window batch is passed as T per-step tensors of shape B x n (row b is
// window b's predictor vector at that step). Gate layout in the fused weight
// matrices is [input | forget | cell | output], each block m wide.

#include <cmath>
#include <cstddef>
#include <random>
#include <string>
#include <vector>

#include "demma/autodiff.hpp"
#include "demma/error.hpp"
#include "demma/random.hpp"

namespace demma {

struct LstmParams {
  std::size_t input_size = 0;   // n
  std::size_t hidden_size = 0;  // m
  Tensor w_input;               // n x 4m
  Tensor w_hidden;              // m x 4m
  Tensor bias;                  // 1 x 4m

  static LstmParams zeros(std::size_t n, std::size_t m) {
    return {n, m, Tensor(n, 4 * m), Tensor(m, 4 * m), Tensor(1, 4 * m)};
  }

  /// Weights uniform in [-1/sqrt(m), 1/sqrt(m)], forget-gate bias 1, other biases 0.
  static LstmParams init(std::size_t n, std::size_t m, std::mt19937_64& rng) {
    LstmParams p = zeros(n, m);
    const double lim = 1.0 / std::sqrt(static_cast<double>(m));
    for (double& v : p.w_input.values()) v = uniform_symmetric(rng, lim);
    for (double& v : p.w_hidden.values()) v = uniform_symmetric(rng, lim);
    for (std::size_t j = m; j < 2 * m; ++j) p.bias[j] = 1.0;
    return p;
  }

  void validate() const {
    const std::size_t g = 4 * hidden_size;
    if (input_size == 0 || hidden_size == 0 || w_input.rows() != input_size || w_input.cols() != g ||
        w_hidden.rows() != hidden_size || w_hidden.cols() != g || bias.rows() != 1 || bias.cols() != g) {
      throw ShapeError("LSTM parameters inconsistent with n=" + std::to_string(input_size) +
                       ", m=" + std::to_string(hidden_size));
    }
  }

  template <class F>
  void for_each_parameter(const std::string& prefix, F&& f) {
    f(prefix + ".w_input", w_input);
    f(prefix + ".w_hidden", w_hidden);
    f(prefix + ".bias", bias);
  }
};

/// Affine map x W + b.
struct AffineParams {
  Tensor weight;  // in x out
  Tensor bias;    // 1 x out

  static AffineParams init(std::size_t in, std::size_t out, std::mt19937_64& rng) {
    AffineParams p{Tensor(in, out), Tensor(1, out)};
    const double lim = 1.0 / std::sqrt(static_cast<double>(in));
    for (double& v : p.weight.values()) v = uniform_symmetric(rng, lim);
    return p;
  }

  template <class F>
  void for_each_parameter(const std::string& prefix, F&& f) {
    f(prefix + ".weight", weight);
    f(prefix + ".bias", bias);
  }
};

struct LstmVars {
  Var w_input, w_hidden, bias;
  std::size_t input_size = 0;
  std::size_t hidden_size = 0;
};

inline LstmVars bind(Binder& b, const LstmParams& p) {
  p.validate();
  const Var wi = b(p.w_input);
  const Var wh = b(p.w_hidden);
  const Var bias = b(p.bias);
  return {wi, wh, bias, p.input_size, p.hidden_size};
}

struct AffineVars {
  Var weight, bias;
};

inline AffineVars bind(Binder& b, const AffineParams& p) {
  const Var w = b(p.weight);
  return {w, b(p.bias)};
}

inline Var affine(Var x, const AffineVars& p) { return add(matmul(x, p.weight), p.bias); }

struct LstmState {
  Var h;  // B x m
  Var c;  // B x m
};

inline LstmState zero_state(Tape& tape, std::size_t batch, std::size_t m) {
  return {tape.constant(Tensor(batch, m)), tape.constant(Tensor(batch, m))};
}

inline LstmState lstm_cell(Var x, const LstmState& prev, const LstmVars& p) {
  const Tensor& xv = x.tape->value(x);
  if (xv.cols() != p.input_size) {
    throw ShapeError("lstm_cell input " + xv.shape_string() + " vs n=" + std::to_string(p.input_size));
  }
  const std::size_t m = p.hidden_size;
  const Var z = add(add(matmul(x, p.w_input), matmul(prev.h, p.w_hidden)), p.bias);
  const Var i = sigmoid(slice_cols(z, 0, m));
  const Var f = sigmoid(slice_cols(z, m, 2 * m));
  const Var g = tanh(slice_cols(z, 2 * m, 3 * m));
  const Var o = sigmoid(slice_cols(z, 3 * m, 4 * m));
  const Var c = add(mul(f, prev.c), mul(i, g));
  return {mul(o, tanh(c)), c};
}

struct EncodedWindow {
  std::vector<Var> hidden;  // T entries, entry t is h_{t+1} (B x m)
  LstmState final_state;
};

inline EncodedWindow encode(const std::vector<Var>& steps, const LstmVars& p) {
  if (steps.empty()) throw ShapeError("encode requires T >= 1");
  Tape& tape = *steps.front().tape;
  LstmState s = zero_state(tape, tape.value(steps.front()).rows(), p.hidden_size);
  EncodedWindow enc;
  enc.hidden.reserve(steps.size());
  for (Var x : steps) {
    s = lstm_cell(x, s, p);
    enc.hidden.push_back(s.h);
  }
  enc.final_state = s;
  return enc;
}

/// Reconstructs the window in reverse order: element k of the result targets
/// steps[T-1-k]. The decoder starts from the encoder's final state; its input
/// at the first step is a zero vector and afterwards the previous target
/// (teacher forcing) or the previous reconstruction.
inline std::vector<Var> decode_reconstruct(const EncodedWindow& enc, const std::vector<Var>& steps,
                                           const LstmVars& dec, const AffineVars& proj, bool teacher_forcing) {
  if (steps.size() != enc.hidden.size()) throw ShapeError("decoder window length differs from encoder's");
  Tape& tape = *steps.front().tape;
  const std::size_t T = steps.size();
  LstmState s = enc.final_state;
  Var input = tape.constant(Tensor(tape.value(steps.front()).rows(), dec.input_size));
  std::vector<Var> out;
  out.reserve(T);
  for (std::size_t k = 0; k < T; ++k) {
    s = lstm_cell(input, s, dec);
    const Var xhat = affine(s.h, proj);
    out.push_back(xhat);
    input = teacher_forcing ? steps[T - 1 - k] : xhat;
  }
  return out;
}

/// (1/B) sum over windows of the squared Frobenius norm of X - Xhat, with
/// `recon` in decoder (reversed) order.
inline Var reconstruction_loss(const std::vector<Var>& steps, const std::vector<Var>& recon) {
  if (steps.size() != recon.size() || steps.empty()) throw ShapeError("reconstruction length mismatch");
  std::vector<Var> reversed(recon.rbegin(), recon.rend());
  const Var x = concat(steps);
  const Var xhat = concat(reversed);
  const Tensor& xv = x.tape->value(x);
  return scale(mean_square_error(xhat, x), static_cast<double>(xv.cols()));
}

}  // namespace demma
