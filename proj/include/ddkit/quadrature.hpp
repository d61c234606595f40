#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <queue>
#include <span>
#include <vector>

namespace ddkit::quad {

/// 21-point Kronrod extension of the 10-point Gauss-Legendre rule
/// (QUADPACK qk21 tables).
struct GaussKronrod21 {
  static constexpr std::array<double, 11> nodes = {
      0.995657163025808080735527280689003, 0.973906528517171720077964012084452,
      0.930157491355708226001207180059508, 0.865063366688984510732096688423493,
      0.780817726586416897063717578345042, 0.679409568299024406234327365114874,
      0.562757134668604683339000099272694, 0.433395394129247190799265943165784,
      0.294392862701460198131126603103866, 0.148874338981631210884826001129720,
      0.000000000000000000000000000000000};
  static constexpr std::array<double, 11> kronrod_weights = {
      0.011694638867371874278064396062192, 0.032558162307964727478818972459390,
      0.054755896574351996031381300244580, 0.075039674810919952767043140916190,
      0.093125454583697605535065465083366, 0.109387158802297641899210590325805,
      0.123491976262065851077208175298310, 0.134709217311473325928054001771707,
      0.142775938577060080797094273138717, 0.147739104901338491374841515972068,
      0.149445554002916905664936468389821};
  // Gauss weights for nodes[1], nodes[3], ..., nodes[9].
  static constexpr std::array<double, 5> gauss_weights = {
      0.066671344308688137593568809893332, 0.149451349150580593145776339657697,
      0.219086362515982043995534934228163, 0.269266719309996355091226921569469,
      0.295524224714752870173892994651338};
};

struct Panel {
  double lo = 0.0;
  double hi = 0.0;
  double value = 0.0;
  double error = 0.0;
};

/// Combines node values into a panel estimate. `minus[i]` and `plus[i]`
/// hold f(center -/+ half * nodes[i]).
inline Panel kronrod_combine(double lo, double hi, double fc, const double* minus,
                             const double* plus) {
  using R = GaussKronrod21;
  const double half = 0.5 * (hi - lo);
  double kronrod = fc * R::kronrod_weights[10];
  double gauss = 0.0;
  for (std::size_t i = 0; i < 10; ++i) {
    const double pair = minus[i] + plus[i];
    kronrod += R::kronrod_weights[i] * pair;
    if (i % 2 == 1) gauss += R::gauss_weights[i / 2] * pair;
  }
  return {lo, hi, kronrod * half, std::abs((kronrod - gauss) * half)};
}

/// Kronrod estimate on [lo, hi]; error is |K21 - G10|.
template <class F>
Panel gauss_kronrod_panel(F& f, double lo, double hi) {
  using R = GaussKronrod21;
  const double center = 0.5 * (lo + hi);
  const double half = 0.5 * (hi - lo);
  std::array<double, 10> minus{}, plus{};
  for (std::size_t i = 0; i < 10; ++i) {
    const double dx = half * R::nodes[i];
    minus[i] = f(center - dx);
    plus[i] = f(center + dx);
  }
  return kronrod_combine(lo, hi, f(center), minus.data(), plus.data());
}

struct Result {
  double value = 0.0;
  double abs_error = 0.0;
  std::size_t panels = 0;
  std::size_t evaluations = 0;
  bool converged = false;
};

struct Options {
  double abs_tol = 1e-10;
  /// Panels narrower than this are never bisected.
  double min_width = 0.0;
  std::size_t max_panels = 200000;
};

/**
 * Globally adaptive integration over the partition given by `breakpoints`
 * (ascending, at least two entries). The panel with the largest error
 * estimate is bisected until the summed error drops below abs_tol, the
 * panel budget runs out, or every remaining error sits on a panel at the
 * width floor.
 *
 * Evaluation order is fixed by the inputs, so results are reproducible
 * bit for bit.
 */
/// Same as integrate() but with a caller-supplied panel rule
/// `rule(lo, hi) -> Panel`, for integrands that are cheaper to evaluate a
/// whole panel at a time.
template <class Rule>
Result integrate_panels(Rule&& rule, std::span<const double> breakpoints, const Options& opt) {
  auto by_error = [](const Panel& a, const Panel& b) { return a.error < b.error; };
  std::priority_queue<Panel, std::vector<Panel>, decltype(by_error)> heap(by_error);
  std::vector<Panel> frozen;

  Result res;
  for (std::size_t k = 1; k < breakpoints.size(); ++k) {
    if (!(breakpoints[k] > breakpoints[k - 1])) continue;
    heap.push(rule(breakpoints[k - 1], breakpoints[k]));
    res.evaluations += 21;
  }

  // Running sums drift as panels are replaced; they are recomputed exactly
  // at the end.
  double total_err = 0.0;
  {
    auto copy = heap;
    while (!copy.empty()) {
      total_err += copy.top().error;
      copy.pop();
    }
  }

  double frozen_err = 0.0;
  while (total_err > opt.abs_tol && frozen_err < opt.abs_tol && !heap.empty() &&
         heap.size() + frozen.size() < opt.max_panels) {
    Panel worst = heap.top();
    heap.pop();
    const double mid = 0.5 * (worst.lo + worst.hi);
    if (worst.hi - worst.lo < 2.0 * opt.min_width || mid <= worst.lo || mid >= worst.hi) {
      frozen_err += worst.error;
      frozen.push_back(worst);
      continue;
    }
    Panel left = rule(worst.lo, mid);
    Panel right = rule(mid, worst.hi);
    res.evaluations += 42;
    total_err += left.error + right.error - worst.error;
    heap.push(left);
    heap.push(right);
  }

  std::vector<Panel> all = std::move(frozen);
  while (!heap.empty()) {
    all.push_back(heap.top());
    heap.pop();
  }
  std::sort(all.begin(), all.end(), [](const Panel& a, const Panel& b) { return a.lo < b.lo; });
  for (const Panel& p : all) {
    res.value += p.value;
    res.abs_error += p.error;
  }
  res.panels = all.size();
  res.converged = res.abs_error <= opt.abs_tol;
  return res;
}

template <class F>
Result integrate(F&& f, std::span<const double> breakpoints, const Options& opt) {
  return integrate_panels([&f](double lo, double hi) { return gauss_kronrod_panel(f, lo, hi); },
                          breakpoints, opt);
}

template <class F>
Result integrate(F&& f, double lo, double hi, const Options& opt) {
  const std::array<double, 2> bp{lo, hi};
  return integrate(std::forward<F>(f), std::span<const double>(bp), opt);
}

}  // namespace ddkit::quad
