#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <map>
#include <numbers>
#include <string>
#include <vector>

#include "ddkit/errors.hpp"
#include "ddkit/noise.hpp"
#include "ddkit/quadrature.hpp"
#include "ddkit/sequences.hpp"

namespace ddkit {

/**
 * Filter function of a pulse train,
 *
 *   F(w) = 1/2 |sum_{k=0}^{n} (-1)^k (e^{i w t_{k+1}} - e^{i w t_k})|^2,
 *
 * with t_0 = 0 and t_{n+1} = t. The telescoped form keeps one phasor per
 * switching time: coefficients (-1, 2, -2, ..., (-1)^n) at (0, t_1, ..., t).
 */
class FilterKernel {
 public:
  explicit FilterKernel(const PulseSequence& seq) : total_time_(seq.total_time()) {
    const auto pulses = seq.pulse_times();
    const std::size_t n = pulses.size();
    times_.reserve(n + 1);
    coeffs_.reserve(n + 1);
    double sign = 2.0;
    for (double tk : pulses) {
      times_.push_back(tk);
      coeffs_.push_back(sign);
      sign = -sign;
    }
    times_.push_back(total_time_);
    coeffs_.push_back(n % 2 == 0 ? 1.0 : -1.0);
    // The phasor at t = 0 has coefficient -1 and is handled separately.

    for (std::size_t k = 0; k < times_.size(); ++k) {
      const double u = times_[k], c = coeffs_[k];
      m1_ += c * u;
      m2_ += c * u * u;
      m3_ += c * u * u * u;
    }
  }

  double total_time() const noexcept { return total_time_; }
  std::size_t pulse_count() const noexcept { return times_.size() - 1; }
  /// Phasor positions (t_1, ..., t_n, t) and their coefficients.
  const std::vector<double>& phasor_times() const noexcept { return times_; }
  const std::vector<double>& phasor_coeffs() const noexcept { return coeffs_; }

  double operator()(double omega) const noexcept {
    double re = -1.0, im = 0.0;
    for (std::size_t k = 0; k < times_.size(); ++k) {
      const double phase = omega * times_[k];
      re += coeffs_[k] * std::cos(phase);
      im += coeffs_[k] * std::sin(phase);
    }
    return 0.5 * (re * re + im * im);
  }

  /// F(w) / w^2, switching to its Taylor expansion when w t < 1e-4.
  double over_omega_squared(double omega) const noexcept {
    const double w = std::abs(omega);
    if (w * total_time_ < 1e-4)
      return 0.5 * (m1_ * m1_ + w * w * (0.25 * m2_ * m2_ - m1_ * m3_ / 3.0));
    return (*this)(w) / (w * w);
  }

  /// lim_{w -> 0} F(w) / w^2 = (sum_k (-1)^k (t_{k+1} - t_k))^2 / 2.
  double zero_frequency_limit() const noexcept { return 0.5 * m1_ * m1_; }

  /// Average of F over w: half the sum of squared phasor coefficients.
  double mean() const noexcept { return 0.5 * (1.0 + 4.0 * pulse_count() + 1.0); }

  /// sum_{j<k} |c_j c_k| / (u_k - u_j); bounds the running integral of the
  /// oscillating part of F by twice this value.
  double oscillation_bound() const noexcept {
    double b = 0.0;
    for (std::size_t k = 0; k < times_.size(); ++k) {
      b += std::abs(coeffs_[k]) / times_[k];  // pair with the t = 0 phasor
      for (std::size_t j = 0; j < k; ++j)
        b += std::abs(coeffs_[j] * coeffs_[k]) / (times_[k] - times_[j]);
    }
    return b;
  }

 private:
  double total_time_;
  std::vector<double> times_;
  std::vector<double> coeffs_;
  double m1_ = 0.0, m2_ = 0.0, m3_ = 0.0;
};

inline double filter_function(const PulseSequence& seq, double omega) {
  return FilterKernel(seq)(std::abs(omega));
}

/// S(w) F(w) / (pi w^2), the integrand of the decay exponent.
inline double coherence_integrand(const FilterKernel& kernel, const BathModel& bath,
                                  double omega) {
  return bath.spectrum(omega) * kernel.over_omega_squared(omega) / std::numbers::pi;
}

struct QuadratureConfig {
  /// Absolute tolerance on the exponent -ln C.
  double tol = 1e-7;
  /// Upper integration limit; chosen automatically when <= 0.
  double omega_max = 0.0;
  std::size_t max_panels = 400000;
};

struct ExponentResult {
  double exponent = 0.0;
  double abs_error = 0.0;
  double omega_max = 0.0;
  double tail = 0.0;
  std::size_t panels = 0;
};

namespace detail {

// Bound on |(1/pi) int_W^inf S (F - mean F) / w^2 dw| for S non-increasing
// beyond W (second mean value theorem).
inline double tail_remainder_bound(const FilterKernel& kernel, const BathModel& bath,
                                   double big_omega, double osc) {
  return 2.0 * osc * bath.spectrum(big_omega) / (std::numbers::pi * big_omega * big_omega);
}

// Gauss-Kronrod panels of the exponent integrand. All 21 nodes share one
// phasor per switching time: e^{i (c +- h x_j) u} = e^{i c u} e^{+-i h x_j u},
// and the second factor is cached per half-width h, which repeats across
// the uniform panels and their bisections.
class ExponentPanelRule {
 public:
  ExponentPanelRule(const FilterKernel& kernel, const BathModel& bath)
      : kernel_(kernel), bath_(bath), m_(kernel.phasor_times().size()) {}

  quad::Panel operator()(double lo, double hi) {
    using R = quad::GaussKronrod21;
    const double t = kernel_.total_time();
    const double center = 0.5 * (lo + hi);
    const double half = 0.5 * (hi - lo);
    std::array<double, 10> minus{}, plus{};
    if (lo * t < 1e-2) {
      for (std::size_t i = 0; i < 10; ++i) {
        minus[i] = coherence_integrand(kernel_, bath_, center - half * R::nodes[i]);
        plus[i] = coherence_integrand(kernel_, bath_, center + half * R::nodes[i]);
      }
      return quad::kronrod_combine(lo, hi, coherence_integrand(kernel_, bath_, center),
                                   minus.data(), plus.data());
    }

    const std::vector<double>& rot = rotations(half);
    const auto& u = kernel_.phasor_times();
    const auto& c = kernel_.phasor_coeffs();
    std::array<double, 10> pre{}, pim{}, mre{}, mim{};
    double cre = -1.0, cim = 0.0;
    for (std::size_t k = 0; k < m_; ++k) {
      const double br = c[k] * std::cos(center * u[k]);
      const double bi = c[k] * std::sin(center * u[k]);
      cre += br;
      cim += bi;
      const double* rr = &rot[20 * k];
      const double* ri = rr + 10;
      for (std::size_t i = 0; i < 10; ++i) {
        pre[i] += br * rr[i] - bi * ri[i];
        pim[i] += br * ri[i] + bi * rr[i];
        mre[i] += br * rr[i] + bi * ri[i];
        mim[i] += bi * rr[i] - br * ri[i];
      }
    }
    auto value = [&](double w, double re, double im) {
      return bath_.spectrum(w) * 0.5 * (re * re + im * im) / (std::numbers::pi * w * w);
    };
    for (std::size_t i = 0; i < 10; ++i) {
      const double dx = half * R::nodes[i];
      // The t = 0 phasor contributes -1 at every node.
      minus[i] = value(center - dx, mre[i] - 1.0, mim[i]);
      plus[i] = value(center + dx, pre[i] - 1.0, pim[i]);
    }
    return quad::kronrod_combine(lo, hi, value(center, cre, cim), minus.data(), plus.data());
  }

 private:
  const std::vector<double>& rotations(double half) {
    auto it = cache_.find(half);
    if (it != cache_.end()) return it->second;
    std::vector<double> rot(20 * m_);
    const auto& u = kernel_.phasor_times();
    for (std::size_t k = 0; k < m_; ++k)
      for (std::size_t i = 0; i < 10; ++i) {
        const double phase = half * quad::GaussKronrod21::nodes[i] * u[k];
        rot[20 * k + i] = std::cos(phase);
        rot[20 * k + 10 + i] = std::sin(phase);
      }
    return cache_.emplace(half, std::move(rot)).first->second;
  }

  const FilterKernel& kernel_;
  const BathModel& bath_;
  std::size_t m_;
  std::map<double, std::vector<double>> cache_;
};

inline double choose_omega_max(const FilterKernel& kernel, const BathModel& bath, double tol,
                               double osc) {
  const double t = kernel.total_time();
  const double n = static_cast<double>(kernel.pulse_count());
  double omega = std::max(8.0 * std::numbers::pi * (n + 1.0) / t,
                          16.0 * bath.characteristic_rate());
  if (std::isfinite(bath.support_limit())) return bath.support_limit();
  for (int iter = 0; iter < 400; ++iter) {
    if (tail_remainder_bound(kernel, bath, omega, osc) <= 0.1 * tol) break;
    omega *= 1.25;
  }
  return omega;
}

}  // namespace detail

/**
 * Decay exponent chi = int_0^inf S(w) F(w t) / (pi w^2) dw, so that
 * C(t) = exp(-chi).
 *
 * [0, W] is integrated by adaptive Gauss-Kronrod on panels eight oscillation
 * periods (16 pi / t) wide. Beyond W the filter is replaced by its mean and
 * the smooth remainder int_W^inf S / w^2 is integrated after the change of
 * variable w = W / x. W is the smallest cut whose remaining oscillatory
 * contribution is provably below tol / 10.
 */
inline ExponentResult coherence_exponent(const PulseSequence& seq, const BathModel& bath,
                                         const QuadratureConfig& cfg = {}) {
  if (!(cfg.tol > 0.0) || cfg.tol > 1e-3)
    throw InvalidArgument("quadrature tolerance must lie in (0, 1e-3]");

  const FilterKernel kernel(seq);
  const double t = seq.total_time();
  const double osc = kernel.oscillation_bound();
  const double big_omega =
      cfg.omega_max > 0.0 ? cfg.omega_max : detail::choose_omega_max(kernel, bath, cfg.tol, osc);

  const double period = 2.0 * std::numbers::pi / t;
  const double rate = bath.characteristic_rate();
  std::vector<double> breaks{0.0};
  for (double w = rate / 8.0; w < std::min(2.0 * period, big_omega); w *= 2.0)
    breaks.push_back(w);
  for (double w = 2.0 * period; w < big_omega; w += 8.0 * period)
    if (w > breaks.back()) breaks.push_back(w);
  breaks.push_back(big_omega);

  quad::Options opt;
  opt.abs_tol = 0.8 * cfg.tol;
  opt.min_width = std::min(std::numbers::pi / (4.0 * t), rate / 8.0) * 1e-3;
  opt.max_panels = cfg.max_panels;
  detail::ExponentPanelRule rule(kernel, bath);
  const quad::Result body = quad::integrate_panels(rule, breaks, opt);

  double tail = 0.0, tail_err = 0.0;
  if (big_omega < bath.support_limit()) {
    auto smooth = [&](double x) {
      return x > 0.0 ? bath.spectrum(big_omega / x) / big_omega : 0.0;
    };
    quad::Options topt;
    topt.abs_tol = 0.05 * cfg.tol / std::max(1.0, kernel.mean());
    const quad::Result r = quad::integrate(smooth, 0.0, 1.0, topt);
    tail = kernel.mean() * r.value / std::numbers::pi;
    tail_err = kernel.mean() * r.abs_error / std::numbers::pi +
               detail::tail_remainder_bound(kernel, bath, big_omega, osc);
  }

  ExponentResult out;
  out.exponent = body.value + tail;
  out.abs_error = body.abs_error + tail_err;
  out.omega_max = big_omega;
  out.tail = tail;
  out.panels = body.panels;
  if (!body.converged)
    throw NumericFailure("coherence quadrature did not converge within the panel budget",
                         out.exponent, out.abs_error);
  return out;
}

/// C(t) = exp(-chi) at the sequence's total time.
inline double coherence(const PulseSequence& seq, const BathModel& bath,
                        const QuadratureConfig& cfg = {}) {
  return std::exp(-coherence_exponent(seq, bath, cfg).exponent);
}

inline double coherence(const PulseSequence& seq, const BathModel& bath, double tol) {
  QuadratureConfig cfg;
  cfg.tol = tol;
  return coherence(seq, bath, cfg);
}

enum class CurveMethod { analytic, quadrature, monte_carlo };

inline std::string to_string(CurveMethod m) {
  switch (m) {
    case CurveMethod::analytic: return "analytic";
    case CurveMethod::quadrature: return "quadrature";
    case CurveMethod::monte_carlo: return "monte_carlo";
  }
  return "analytic";
}

struct CoherenceCurve {
  std::vector<double> times;
  std::vector<double> values;
  CurveMethod method = CurveMethod::quadrature;
  std::map<std::string, double> params;
};

using SequenceGenerator = std::function<PulseSequence(double)>;

/// CPMG generator holding f_DD fixed: n = round(2 f_DD t).
inline SequenceGenerator cpmg_generator(double f_dd) {
  return [f_dd](double t) { return cpmg_at_rate(f_dd, t); };
}

inline CoherenceCurve coherence_curve(const SequenceGenerator& family, const BathModel& bath,
                                      const std::vector<double>& times,
                                      const QuadratureConfig& cfg = {}) {
  CoherenceCurve curve;
  curve.method = CurveMethod::quadrature;
  curve.times = times;
  curve.values.reserve(times.size());
  for (std::size_t k = 0; k < times.size(); ++k) {
    if (times[k] < 0.0 || (k > 0 && times[k] < times[k - 1]))
      throw InvalidArgument("curve times must be non-negative and ascending", k);
    curve.values.push_back(times[k] == 0.0 ? 1.0 : coherence(family(times[k]), bath, cfg));
  }
  if (const auto* lb = dynamic_cast<const LorentzianBath*>(&bath)) {
    curve.params["sigma_delta"] = lb->sigma_delta();
    curve.params["gamma"] = lb->gamma();
  }
  return curve;
}

/// Collisionless free decay of a thermal ensemble in a 3D harmonic trap:
/// C(t) = (1 + (sigma t)^2 / 3)^{-3/2}.
inline double free_decay_3d(double sigma_delta, double t) {
  if (sigma_delta < 0.0 || t < 0.0) throw InvalidArgument("sigma_delta and t must be >= 0");
  const double x = sigma_delta * t;
  return std::pow(1.0 + x * x / 3.0, -1.5);
}

/// 1/e time of free_decay_3d: sqrt(3 (e^{2/3} - 1)) / sigma.
inline double free_decay_3d_tau1(double sigma_delta) {
  return std::sqrt(3.0 * (std::exp(2.0 / 3.0) - 1.0)) / sigma_delta;
}

enum class TauMethod { root_e_crossing, exponential_fit };

struct CoherenceTime {
  double tau_c = 0.0;
  TauMethod method = TauMethod::root_e_crossing;
  double fit_residual = 0.0;
  /// Set when C stayed above 1/e up to the search limit; tau_c then holds
  /// that limit.
  bool lower_bound = false;
};

/// Solves C(tau) = 1/e by scanning [0, t_max] on a uniform grid for the
/// first sign change, then bisecting to relative tolerance rel_tol.
inline CoherenceTime coherence_time_root(const std::function<double(double)>& evaluator,
                                         double t_max, double rel_tol = 1e-4,
                                         std::size_t scan_points = 32) {
  if (!(t_max > 0.0)) throw InvalidArgument("t_max must be positive");
  const double target = std::exp(-1.0);
  double lo = 0.0, hi = 0.0, last = 1.0;
  bool bracketed = false;
  for (std::size_t k = 1; k <= scan_points; ++k) {
    const double t = t_max * static_cast<double>(k) / static_cast<double>(scan_points);
    last = evaluator(t);
    if (last < target) {
      hi = t;
      bracketed = true;
      break;
    }
    lo = t;
  }
  if (!bracketed)
    throw NotFound("coherence stays above 1/e up to t_max", last);
  while (hi - lo > rel_tol * hi) {
    const double mid = 0.5 * (lo + hi);
    (evaluator(mid) < target ? hi : lo) = mid;
  }
  return {0.5 * (lo + hi), TauMethod::root_e_crossing, 0.0, false};
}

namespace detail {

inline double exp_fit_sse(const CoherenceCurve& c, double tau) {
  double s = 0.0;
  for (std::size_t k = 0; k < c.times.size(); ++k) {
    const double r = c.values[k] - std::exp(-c.times[k] / tau);
    s += r * r;
  }
  return s;
}

// Golden-section minimisation of f on [a, b].
template <class F>
double golden_minimize(F&& f, double a, double b, double abs_tol) {
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = b - inv_phi * (b - a), d = a + inv_phi * (b - a);
  double fc = f(c), fd = f(d);
  while (b - a > abs_tol) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - inv_phi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + inv_phi * (b - a);
      fd = f(d);
    }
  }
  return 0.5 * (a + b);
}

}  // namespace detail

/// Least-squares fit of exp(-t / tau) to the curve values. Needs at least
/// four samples below 0.9.
inline CoherenceTime coherence_time_fit(const CoherenceCurve& curve) {
  if (curve.times.size() != curve.values.size())
    throw InvalidArgument("curve times and values differ in length");
  std::size_t informative = 0;
  double t_max = 0.0, t_min = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < curve.times.size(); ++k) {
    if (curve.values[k] < 0.9) ++informative;
    if (curve.times[k] > 0.0) t_min = std::min(t_min, curve.times[k]);
    t_max = std::max(t_max, curve.times[k]);
  }
  if (informative < 4) throw FitFailure("exponential fit needs >= 4 points with C < 0.9");

  // Coarse scan in log tau to land in the right basin, then refine.
  const double lo = std::log(t_min * 1e-3), hi = std::log(t_max * 1e3);
  const std::size_t grid = 400;
  std::size_t best = 0;
  double best_val = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k <= grid; ++k) {
    const double u = lo + (hi - lo) * static_cast<double>(k) / grid;
    const double v = detail::exp_fit_sse(curve, std::exp(u));
    if (v < best_val) {
      best_val = v;
      best = k;
    }
  }
  const double step = (hi - lo) / grid;
  const double centre = lo + step * static_cast<double>(best);
  const double u = detail::golden_minimize(
      [&](double x) { return detail::exp_fit_sse(curve, std::exp(x)); }, centre - step,
      centre + step, 1e-12);
  const double tau = std::exp(u);
  const double rms = std::sqrt(detail::exp_fit_sse(curve, tau) /
                               static_cast<double>(curve.times.size()));
  return {tau, TauMethod::exponential_fit, rms, false};
}

struct FittedCoherenceTime {
  CoherenceTime fit;
  CoherenceTime root;
  CoherenceCurve window;
};

/**
 * Coherence time as extracted from decay data: locate the 1/e crossing,
 * sample `points` equally spaced times on (0, min(2 tau_1/e, t_max)] and fit
 * exp(-t / tau_c) to them. The same procedure serves both the quadrature
 * and the Monte-Carlo engines so their results are comparable.
 *
 * If C never drops below 1/e before t_max the result is flagged as a lower
 * bound equal to t_max.
 */
inline FittedCoherenceTime fitted_coherence_time(const std::function<double(double)>& evaluator,
                                                 double t_max, std::size_t points = 16,
                                                 CurveMethod method = CurveMethod::quadrature) {
  FittedCoherenceTime out;
  try {
    out.root = coherence_time_root(evaluator, t_max);
  } catch (const NotFound&) {
    out.root = {t_max, TauMethod::root_e_crossing, 0.0, true};
    out.fit = {t_max, TauMethod::exponential_fit, 0.0, true};
    return out;
  }
  const double span = std::min(2.0 * out.root.tau_c, t_max);
  out.window.method = method;
  for (std::size_t k = 1; k <= points; ++k) {
    const double t = span * static_cast<double>(k) / static_cast<double>(points);
    out.window.times.push_back(t);
    out.window.values.push_back(evaluator(t));
  }
  out.fit = coherence_time_fit(out.window);
  return out;
}

/// Delta-peak estimate tau_c ~ 1 / S(2 pi f_DD)
///   = (Gamma^2 + (2 pi f_DD)^2) / (2 Gamma sigma^2).
/// Order-of-magnitude only; it carries the f_DD^2 / (sigma^2 Gamma) scaling.
inline double tau_c_delta_approx(double f_dd, const LorentzianBath& bath) {
  if (!(f_dd > 0.0)) throw InvalidArgument("f_dd must be positive");
  const double omega = 2.0 * std::numbers::pi * f_dd;
  return 1.0 / bath.spectrum(omega);
}

struct SigmaFit {
  double sigma_delta = 0.0;
  double residual = 0.0;
};

/// Least-squares fit of free_decay_3d to a collisionless free-decay curve.
inline SigmaFit fit_sigma_delta(const CoherenceCurve& curve) {
  const auto& t = curve.times;
  const auto& c = curve.values;
  if (t.size() != c.size() || t.size() < 4)
    throw FitFailure("free-decay fit needs at least 4 samples");
  const auto [mn, mx] = std::minmax_element(c.begin(), c.end());
  if (*mx - *mn < 0.05) throw FitFailure("curve is flat; no decay to fit");
  double running_min = c.front();
  for (std::size_t k = 1; k < c.size(); ++k) {
    if (t[k] <= t[k - 1]) throw FitFailure("curve times must be strictly increasing");
    if (c[k] > running_min + 0.1) throw FitFailure("curve is not monotonically decaying");
    running_min = std::min(running_min, c[k]);
  }

  auto sse = [&](double log_sigma) {
    const double s = std::exp(log_sigma);
    double acc = 0.0;
    for (std::size_t k = 0; k < t.size(); ++k) {
      const double r = c[k] - free_decay_3d(s, t[k]);
      acc += r * r;
    }
    return acc;
  };
  const double t_pos = *std::max_element(t.begin(), t.end());
  const double lo = std::log(1e-3 / t_pos), hi = std::log(1e4 / t_pos);
  const std::size_t grid = 400;
  double best_u = lo, best_v = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k <= grid; ++k) {
    const double u = lo + (hi - lo) * static_cast<double>(k) / grid;
    const double v = sse(u);
    if (v < best_v) {
      best_v = v;
      best_u = u;
    }
  }
  const double step = (hi - lo) / grid;
  const double u = detail::golden_minimize(sse, best_u - step, best_u + step, 1e-12);
  return {std::exp(u), std::sqrt(sse(u) / static_cast<double>(t.size()))};
}

}  // namespace ddkit
