#pragma once

// Adaptive-moment optimizer over a fixed list of parameter tensors.

#include <cmath>
#include <cstddef>
#include <vector>

#include "demma/autodiff.hpp"
#include "demma/error.hpp"

namespace demma {

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

class Adam {
 public:
  Adam(std::vector<Tensor*> params, AdamOptions opt = {}) : params_(std::move(params)), opt_(opt) {
    for (const Tensor* p : params_) {
      m_.emplace_back(p->rows(), p->cols());
      v_.emplace_back(p->rows(), p->cols());
    }
  }

  /// One update; grads[k] pairs with the k-th parameter.
  void step(const std::vector<Tensor>& grads) {
    if (grads.size() != params_.size()) throw ShapeError("Adam: gradient count differs from parameter count");
    ++t_;
    const double c1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(t_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
      Tensor& p = *params_[k];
      const Tensor& g = grads[k];
      if (!g.same_shape(p)) throw ShapeError("Adam: " + g.shape_string() + " vs " + p.shape_string());
      for (std::size_t i = 0; i < p.size(); ++i) {
        m_[k][i] = opt_.beta1 * m_[k][i] + (1.0 - opt_.beta1) * g[i];
        v_[k][i] = opt_.beta2 * v_[k][i] + (1.0 - opt_.beta2) * g[i] * g[i];
        p[i] -= opt_.learning_rate * (m_[k][i] / c1) / (std::sqrt(v_[k][i] / c2) + opt_.epsilon);
      }
    }
  }

  std::size_t steps() const { return t_; }

 private:
  std::vector<Tensor*> params_;
  AdamOptions opt_;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
  std::size_t t_ = 0;
};

}  // namespace demma
