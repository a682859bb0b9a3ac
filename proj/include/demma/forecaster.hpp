#pragma once

// Residual attention forecaster on top of the encoder's hidden states.
//
//   z0 = LN(h_T + MHA(h_T, h_{1:T}))
//   z  = LN(z + FF(z))            (two stages, FF: m -> 4m -> relu -> m)
//   q  = sigmoid(z w + b), kept kQuantileMargin away from 0 and 1
//
// LN is per-row normalization followed by a learned gain and offset.

#include <cmath>
#include <cstddef>
#include <random>
#include <string>
#include <vector>

#include "demma/auto_lstm.hpp"
#include "demma/autodiff.hpp"
#include "demma/error.hpp"
#include "demma/random.hpp"

namespace demma {

struct AttentionParams {
  std::size_t heads = 0;           // d
  std::vector<Tensor> w_query;     // d matrices, m x (m/d)
  std::vector<Tensor> w_key;
  std::vector<Tensor> w_value;
  Tensor w_out;                    // m x m

  static AttentionParams zeros(std::size_t m, std::size_t d) {
    if (d == 0 || m % d != 0) {
      throw ConfigError("attention head count " + std::to_string(d) + " must divide hidden size " + std::to_string(m));
    }
    AttentionParams p;
    p.heads = d;
    for (std::size_t i = 0; i < d; ++i) {
      p.w_query.emplace_back(m, m / d);
      p.w_key.emplace_back(m, m / d);
      p.w_value.emplace_back(m, m / d);
    }
    p.w_out = Tensor(m, m);
    return p;
  }

  static AttentionParams init(std::size_t m, std::size_t d, std::mt19937_64& rng) {
    AttentionParams p = zeros(m, d);
    const double lim = 1.0 / std::sqrt(static_cast<double>(m));
    for (std::size_t i = 0; i < d; ++i) {
      for (Tensor* t : {&p.w_query[i], &p.w_key[i], &p.w_value[i]}) {
        for (double& v : t->values()) v = uniform_symmetric(rng, lim);
      }
    }
    for (double& v : p.w_out.values()) v = uniform_symmetric(rng, lim);
    return p;
  }

  std::size_t hidden_size() const { return w_out.rows(); }

  template <class F>
  void for_each_parameter(const std::string& prefix, F&& f) {
    for (std::size_t i = 0; i < heads; ++i) {
      const std::string h = prefix + ".head" + std::to_string(i);
      f(h + ".w_query", w_query[i]);
      f(h + ".w_key", w_key[i]);
      f(h + ".w_value", w_value[i]);
    }
    f(prefix + ".w_out", w_out);
  }
};

struct NormParams {
  Tensor gain;    // 1 x m
  Tensor offset;  // 1 x m

  static NormParams identity(std::size_t m) { return {Tensor(1, m, 1.0), Tensor(1, m)}; }

  template <class F>
  void for_each_parameter(const std::string& prefix, F&& f) {
    f(prefix + ".gain", gain);
    f(prefix + ".offset", offset);
  }
};

struct StageParams {
  AffineParams expand;    // m -> 4m
  AffineParams contract;  // 4m -> m
  NormParams norm;

  static StageParams zeros(std::size_t m) {
    return {{Tensor(m, 4 * m), Tensor(1, 4 * m)}, {Tensor(4 * m, m), Tensor(1, m)}, NormParams::identity(m)};
  }

  static StageParams init(std::size_t m, std::mt19937_64& rng) {
    return {AffineParams::init(m, 4 * m, rng), AffineParams::init(4 * m, m, rng), NormParams::identity(m)};
  }

  template <class F>
  void for_each_parameter(const std::string& prefix, F&& f) {
    expand.for_each_parameter(prefix + ".expand", f);
    contract.for_each_parameter(prefix + ".contract", f);
    norm.for_each_parameter(prefix + ".norm", f);
  }
};

inline constexpr std::size_t kForecasterStages = 2;

// The head output is kept this far from 0 and 1: a saturated double sigmoid
// rounds to exactly 1 and the quantile function is undefined there.
inline constexpr double kQuantileMargin = 1e-12;

struct ForecasterParams {
  AttentionParams attention;
  NormParams attention_norm;
  std::vector<StageParams> stages;  // kForecasterStages entries
  AffineParams head;                // m -> 1

  static ForecasterParams zeros(std::size_t m, std::size_t d) {
    ForecasterParams p{AttentionParams::zeros(m, d), NormParams::identity(m), {}, {Tensor(m, 1), Tensor(1, 1)}};
    for (std::size_t s = 0; s < kForecasterStages; ++s) p.stages.push_back(StageParams::zeros(m));
    return p;
  }

  static ForecasterParams init(std::size_t m, std::size_t d, std::mt19937_64& rng) {
    ForecasterParams p{AttentionParams::init(m, d, rng), NormParams::identity(m), {}, {}};
    for (std::size_t s = 0; s < kForecasterStages; ++s) p.stages.push_back(StageParams::init(m, rng));
    p.head = AffineParams::init(m, 1, rng);
    return p;
  }

  template <class F>
  void for_each_parameter(const std::string& prefix, F&& f) {
    attention.for_each_parameter(prefix + ".attention", f);
    attention_norm.for_each_parameter(prefix + ".attention_norm", f);
    for (std::size_t s = 0; s < stages.size(); ++s) stages[s].for_each_parameter(prefix + ".stage" + std::to_string(s), f);
    head.for_each_parameter(prefix + ".head", f);
  }
};

// ---------------------------------------------------------------------------
// Tape-bound forms

struct AttentionVars {
  std::vector<Var> w_query, w_key, w_value;
  Var w_out;
  std::size_t hidden_size = 0;
  std::size_t heads = 0;
};

inline AttentionVars bind(Binder& b, const AttentionParams& p) {
  const std::size_t m = p.hidden_size();
  if (p.heads == 0 || m % p.heads != 0) throw ConfigError("attention head count must divide hidden size");
  if (p.w_query.size() != p.heads || p.w_key.size() != p.heads || p.w_value.size() != p.heads ||
      p.w_out.cols() != m) {
    throw ShapeError("attention parameters inconsistent with d=" + std::to_string(p.heads));
  }
  AttentionVars v;
  v.hidden_size = m;
  v.heads = p.heads;
  for (std::size_t i = 0; i < p.heads; ++i) {
    for (const Tensor* t : {&p.w_query[i], &p.w_key[i], &p.w_value[i]}) {
      if (t->rows() != m || t->cols() != m / p.heads) {
        throw ShapeError("attention projection " + t->shape_string() + " expected [" + std::to_string(m) + "x" +
                         std::to_string(m / p.heads) + "]");
      }
    }
    v.w_query.push_back(b(p.w_query[i]));
    v.w_key.push_back(b(p.w_key[i]));
    v.w_value.push_back(b(p.w_value[i]));
  }
  v.w_out = b(p.w_out);
  return v;
}

struct NormVars {
  Var gain, offset;
};

inline NormVars bind(Binder& b, const NormParams& p) {
  const Var g = b(p.gain);
  return {g, b(p.offset)};
}

inline Var add_and_norm(Var x, Var residual, const NormVars& p) {
  return add(mul(layer_normalize(add(x, residual)), p.gain), p.offset);
}

struct StageVars {
  AffineVars expand, contract;
  NormVars norm;
};

inline StageVars bind(Binder& b, const StageParams& p) {
  const AffineVars e = bind(b, p.expand);
  const AffineVars c = bind(b, p.contract);
  return {e, c, bind(b, p.norm)};
}

struct ForecasterVars {
  AttentionVars attention;
  NormVars attention_norm;
  std::vector<StageVars> stages;
  AffineVars head;
};

inline ForecasterVars bind(Binder& b, const ForecasterParams& p) {
  ForecasterVars v;
  v.attention = bind(b, p.attention);
  v.attention_norm = bind(b, p.attention_norm);
  for (const StageParams& s : p.stages) v.stages.push_back(bind(b, s));
  v.head = bind(b, p.head);
  return v;
}

/// Multi-head scaled dot-product attention with a single query per row.
/// h_last: B x m (the query source); hidden: T entries of B x m.
/// If `weights` is given it receives each head's B x T attention matrix.
inline Var multi_head_attention(Var h_last, const std::vector<Var>& hidden, const AttentionVars& p,
                                std::vector<Var>* weights = nullptr) {
  if (hidden.empty()) throw ShapeError("attention over zero keys");
  Tape& tape = *h_last.tape;
  const std::size_t m = p.hidden_size;
  const std::size_t k = m / p.heads;
  const std::size_t batch = tape.value(h_last).rows();
  if (tape.value(h_last).cols() != m) throw ShapeError("attention query " + tape.value(h_last).shape_string());
  const Var ones_col = tape.constant(Tensor(k, 1, 1.0));
  const Var ones_row = tape.constant(Tensor(1, k, 1.0));
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(k));
  if (weights) weights->clear();

  std::vector<Var> heads;
  heads.reserve(p.heads);
  for (std::size_t i = 0; i < p.heads; ++i) {
    const Var q = matmul(h_last, p.w_query[i]);
    std::vector<Var> scores;
    std::vector<Var> values;
    scores.reserve(hidden.size());
    values.reserve(hidden.size());
    for (Var h : hidden) {
      const Var key = matmul(h, p.w_key[i]);
      scores.push_back(scale(matmul(mul(q, key), ones_col), inv_sqrt));
      values.push_back(matmul(h, p.w_value[i]));
    }
    const Var a = softmax_rows(concat(scores));  // B x T
    if (weights) weights->push_back(a);
    Var head;
    for (std::size_t t = 0; t < hidden.size(); ++t) {
      const Var term = mul(matmul(slice(a, 0, batch, t, t + 1), ones_row), values[t]);
      head = t == 0 ? term : add(head, term);
    }
    heads.push_back(head);
  }
  return matmul(concat(heads), p.w_out);
}

/// Predicted quantile for each window in the batch (B x 1, inside
/// [kQuantileMargin, 1 - kQuantileMargin]).
inline Var forecaster_forward(const EncodedWindow& enc, const ForecasterVars& p,
                              std::vector<Var>* attention_weights = nullptr) {
  const Var h_last = enc.hidden.back();
  Var z = add_and_norm(h_last, multi_head_attention(h_last, enc.hidden, p.attention, attention_weights),
                       p.attention_norm);
  for (const StageVars& s : p.stages) {
    z = add_and_norm(z, affine(relu(affine(z, s.expand)), s.contract), s.norm);
  }
  return clamp(sigmoid(affine(z, p.head)), kQuantileMargin, 1.0 - kQuantileMargin);
}

}  // namespace demma
