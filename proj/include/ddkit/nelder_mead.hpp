#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <vector>

#include "ddkit/errors.hpp"

namespace ddkit {

using Point = std::vector<double>;

struct NelderMeadOptions {
  double reflection = 1.0;
  double expansion = 2.0;
  double contraction = 0.5;
  double shrink = 0.5;
  /// Per-coordinate offsets of the initial simplex vertices.
  Point initial_step;
  std::size_t max_iter = 10000;
  /// Stop when max_i distance(x_i, x_best) falls below this ...
  double x_tol = 1e-8;
  /// ... or when the spread of objective values does.
  double f_tol = 1e-10;
  /// Distance used for the simplex diameter; max-norm when empty.
  std::function<double(const Point&, const Point&)> distance;
};

struct NelderMeadResult {
  Point x;
  double fx = 0.0;
  std::size_t iterations = 0;
  std::size_t evaluations = 0;
  bool converged = false;
};

/// Downhill simplex minimisation of f starting from x0.
template <class F>
NelderMeadResult nelder_mead(F&& f, const Point& x0, const NelderMeadOptions& opt) {
  const std::size_t n = x0.size();
  if (n == 0) throw InvalidArgument("nelder_mead needs at least one coordinate");
  if (opt.initial_step.size() != n)
    throw InvalidArgument("initial_step must have one entry per coordinate");

  auto dist = [&](const Point& a, const Point& b) {
    if (opt.distance) return opt.distance(a, b);
    double d = 0.0;
    for (std::size_t i = 0; i < n; ++i) d = std::max(d, std::abs(a[i] - b[i]));
    return d;
  };

  NelderMeadResult res;
  std::vector<Point> xs(n + 1, x0);
  std::vector<double> fs(n + 1);
  for (std::size_t i = 0; i < n; ++i) xs[i + 1][i] += opt.initial_step[i];
  for (std::size_t i = 0; i <= n; ++i) fs[i] = f(xs[i]);
  res.evaluations = n + 1;

  std::vector<std::size_t> order(n + 1);
  Point centroid(n), trial(n), trial2(n);
  auto along = [&](Point& out, double coeff) {
    // out = centroid + coeff * (centroid - worst)
    const Point& worst = xs[order[n]];
    for (std::size_t i = 0; i < n; ++i) out[i] = centroid[i] + coeff * (centroid[i] - worst[i]);
  };

  for (;;) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return fs[a] < fs[b]; });
    const std::size_t best = order[0], worst = order[n], second = order[n - 1];

    double diameter = 0.0;
    for (std::size_t k = 1; k <= n; ++k) diameter = std::max(diameter, dist(xs[order[k]], xs[best]));
    if (diameter < opt.x_tol || fs[worst] - fs[best] < opt.f_tol) {
      res.converged = true;
      break;
    }
    if (res.iterations >= opt.max_iter) break;
    ++res.iterations;

    std::fill(centroid.begin(), centroid.end(), 0.0);
    for (std::size_t k = 0; k < n; ++k)
      for (std::size_t i = 0; i < n; ++i) centroid[i] += xs[order[k]][i];
    for (double& c : centroid) c /= static_cast<double>(n);

    along(trial, opt.reflection);
    const double fr = f(trial);
    ++res.evaluations;
    if (fr < fs[best]) {
      along(trial2, opt.reflection * opt.expansion);
      const double fe = f(trial2);
      ++res.evaluations;
      if (fe < fr) {
        xs[worst] = trial2;
        fs[worst] = fe;
      } else {
        xs[worst] = trial;
        fs[worst] = fr;
      }
      continue;
    }
    if (fr < fs[second]) {
      xs[worst] = trial;
      fs[worst] = fr;
      continue;
    }
    if (fr < fs[worst]) {
      // Outside contraction.
      along(trial2, opt.reflection * opt.contraction);
      const double fc = f(trial2);
      ++res.evaluations;
      if (fc <= fr) {
        xs[worst] = trial2;
        fs[worst] = fc;
        continue;
      }
    } else {
      along(trial2, -opt.contraction);
      const double fc = f(trial2);
      ++res.evaluations;
      if (fc < fs[worst]) {
        xs[worst] = trial2;
        fs[worst] = fc;
        continue;
      }
    }
    for (std::size_t k = 1; k <= n; ++k) {
      Point& x = xs[order[k]];
      for (std::size_t i = 0; i < n; ++i) x[i] = xs[best][i] + opt.shrink * (x[i] - xs[best][i]);
      fs[order[k]] = f(x);
    }
    res.evaluations += n;
  }

  const auto it = std::min_element(fs.begin(), fs.end());
  res.x = xs[static_cast<std::size_t>(it - fs.begin())];
  res.fx = *it;
  return res;
}

}  // namespace ddkit
