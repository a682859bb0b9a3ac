#pragma once

// Derivative-free simplex minimizer (Nelder & Mead, 1965) with the standard
// reflection/expansion/contraction/shrink coefficients. Objective values of
// +inf are treated as infeasible points and are never accepted as the best.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <numeric>
#include <vector>

namespace demma {

struct NelderMeadOptions {
  std::size_t max_iterations = 5000;
  // Converged when the spread of objective values across the simplex and the
  // simplex diameter both fall below these tolerances.
  double f_tolerance = 1e-10;
  double x_tolerance = 1e-9;
  // Initial simplex offset per coordinate (absolute).
  std::vector<double> initial_step;
  // Number of restarts from the best vertex after convergence. Restarting
  // guards against premature collapse of the simplex.
  int restarts = 2;
};

struct NelderMeadResult {
  std::vector<double> x;
  double value = std::numeric_limits<double>::infinity();
  std::size_t iterations = 0;
  std::size_t evaluations = 0;
  bool converged = false;
};

namespace detail {

inline NelderMeadResult nelder_mead_once(
    const std::function<double(const std::vector<double>&)>& f,
    const std::vector<double>& start, const NelderMeadOptions& opt,
    std::size_t budget) {
  constexpr double kReflect = 1.0;
  constexpr double kExpand = 2.0;
  constexpr double kContract = 0.5;
  constexpr double kShrink = 0.5;

  const std::size_t dim = start.size();
  NelderMeadResult res;

  auto eval = [&](const std::vector<double>& x) {
    ++res.evaluations;
    const double v = f(x);
    return std::isnan(v) ? std::numeric_limits<double>::infinity() : v;
  };

  std::vector<std::vector<double>> simplex(dim + 1, start);
  std::vector<double> values(dim + 1);
  for (std::size_t i = 0; i < dim; ++i) {
    double step = i < opt.initial_step.size() ? opt.initial_step[i] : 0.0;
    if (step == 0.0) step = start[i] != 0.0 ? 0.05 * std::fabs(start[i]) : 0.00025;
    simplex[i + 1][i] += step;
  }
  for (std::size_t i = 0; i <= dim; ++i) values[i] = eval(simplex[i]);

  std::vector<std::size_t> order(dim + 1);
  std::vector<double> centroid(dim), trial(dim), trial2(dim);

  for (; res.iterations < budget; ++res.iterations) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    const std::size_t best = order.front();
    const std::size_t worst = order.back();
    const std::size_t second_worst = order[dim - 1];

    double diameter = 0.0;
    for (std::size_t i = 0; i <= dim; ++i) {
      for (std::size_t k = 0; k < dim; ++k) {
        diameter = std::max(diameter, std::fabs(simplex[i][k] - simplex[best][k]));
      }
    }
    const double spread = values[worst] - values[best];
    if (std::isfinite(values[best]) && spread <= opt.f_tolerance * (1.0 + std::fabs(values[best])) &&
        diameter <= opt.x_tolerance) {
      res.converged = true;
      break;
    }

    std::fill(centroid.begin(), centroid.end(), 0.0);
    for (std::size_t i = 0; i <= dim; ++i) {
      if (i == worst) continue;
      for (std::size_t k = 0; k < dim; ++k) centroid[k] += simplex[i][k] / static_cast<double>(dim);
    }

    for (std::size_t k = 0; k < dim; ++k) {
      trial[k] = centroid[k] + kReflect * (centroid[k] - simplex[worst][k]);
    }
    const double f_reflect = eval(trial);

    if (f_reflect < values[best]) {
      for (std::size_t k = 0; k < dim; ++k) {
        trial2[k] = centroid[k] + kExpand * (trial[k] - centroid[k]);
      }
      const double f_expand = eval(trial2);
      if (f_expand < f_reflect) {
        simplex[worst] = trial2;
        values[worst] = f_expand;
      } else {
        simplex[worst] = trial;
        values[worst] = f_reflect;
      }
      continue;
    }
    if (f_reflect < values[second_worst]) {
      simplex[worst] = trial;
      values[worst] = f_reflect;
      continue;
    }

    const bool outside = f_reflect < values[worst];
    for (std::size_t k = 0; k < dim; ++k) {
      const double from = outside ? trial[k] : simplex[worst][k];
      trial2[k] = centroid[k] + kContract * (from - centroid[k]);
    }
    const double f_contract = eval(trial2);
    if (f_contract < (outside ? f_reflect : values[worst])) {
      simplex[worst] = trial2;
      values[worst] = f_contract;
      continue;
    }

    for (std::size_t i = 0; i <= dim; ++i) {
      if (i == best) continue;
      for (std::size_t k = 0; k < dim; ++k) {
        simplex[i][k] = simplex[best][k] + kShrink * (simplex[i][k] - simplex[best][k]);
      }
      values[i] = eval(simplex[i]);
    }
  }

  const auto best_it = std::min_element(values.begin(), values.end());
  res.value = *best_it;
  res.x = simplex[static_cast<std::size_t>(best_it - values.begin())];
  return res;
}

}  // namespace detail

/// Minimizes `f` starting from `start`. The returned result reports whether
/// the final restart met the convergence tolerances within the budget.
inline NelderMeadResult nelder_mead(const std::function<double(const std::vector<double>&)>& f,
                                    std::vector<double> start, const NelderMeadOptions& opt = {}) {
  NelderMeadResult total;
  std::size_t remaining = opt.max_iterations;
  for (int round = 0; round <= opt.restarts; ++round) {
    NelderMeadResult r = detail::nelder_mead_once(f, start, opt, remaining);
    total.iterations += r.iterations;
    total.evaluations += r.evaluations;
    remaining -= std::min(remaining, r.iterations);
    const bool improved = r.value < total.value;
    if (improved || total.x.empty()) {
      const bool stalled = std::fabs(total.value - r.value) <= opt.f_tolerance * (1.0 + std::fabs(r.value));
      total.x = r.x;
      total.value = r.value;
      total.converged = r.converged;
      if (stalled && r.converged) break;
    } else {
      total.converged = r.converged;
      break;
    }
    if (!r.converged || remaining == 0) break;
    start = total.x;
  }
  return total;
}

}  // namespace demma
