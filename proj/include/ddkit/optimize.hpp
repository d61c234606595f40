#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <vector>

#include "ddkit/decoherence.hpp"
#include "ddkit/errors.hpp"
#include "ddkit/nelder_mead.hpp"
#include "ddkit/parallel.hpp"
#include "ddkit/rng.hpp"
#include "ddkit/sequences.hpp"

namespace ddkit {

/**
 * Unconstrained coordinates for ordered pulse timings.
 *
 * n pulses split [0, t] into n + 1 gaps. The first n gaps are
 * g_j = softplus(y_j); the last one is a fixed anchor a. Pulse times are
 * the normalised partial sums
 *
 *   t_i = t * (g_0 + ... + g_{i-1}) / (g_0 + ... + g_{n-1} + a),
 *
 * so every y in R^n gives 0 < t_1 < ... < t_n < t. Only gap ratios matter,
 * which is why one gap can be held fixed.
 */
class GapMap {
 public:
  /// Chooses the anchor so that the gaps of `start` map to softplus values
  /// near one.
  explicit GapMap(const PulseSequence& start)
      : total_time_(start.total_time()), n_(start.size()) {
    if (n_ == 0) throw InvalidArgument("gap map needs at least one pulse");
    const auto p = start.pulse_times();
    anchor_ = (total_time_ - p[n_ - 1]) * static_cast<double>(n_ + 1) / total_time_;
  }

  std::size_t size() const noexcept { return n_; }
  double anchor() const noexcept { return anchor_; }

  static double softplus(double y) { return y > 30.0 ? y : std::log1p(std::exp(y)); }
  static double softplus_inverse(double g) { return g > 30.0 ? g : std::log(std::expm1(g)); }
  static double sigmoid(double y) { return 1.0 / (1.0 + std::exp(-y)); }

  std::vector<double> times(const Point& y) const {
    std::vector<double> out(n_);
    double sum = 0.0;
    for (std::size_t j = 0; j < n_; ++j) {
      out[j] = sum;
      sum += softplus(y[j]);
    }
    const double total = sum + anchor_;
    for (std::size_t j = 0; j < n_; ++j) {
      out[j] = total_time_ * (out[j] + softplus(y[j])) / total;
    }
    return out;
  }

  PulseSequence sequence(const Point& y) const { return custom(times(y), total_time_); }

  Point coordinates(const PulseSequence& seq) const {
    const auto p = seq.pulse_times();
    if (p.size() != n_) throw InvalidArgument("pulse count differs from the gap map");
    const double scale = anchor_ / (total_time_ - p[n_ - 1]);
    Point y(n_);
    double prev = 0.0;
    for (std::size_t j = 0; j < n_; ++j) {
      y[j] = softplus_inverse(scale * (p[j] - prev));
      prev = p[j];
    }
    return y;
  }

  /// Coordinate steps that move each gap by `fraction` of t.
  Point step_for(const Point& y, double fraction) const {
    double total = anchor_;
    for (double v : y) total += softplus(v);
    Point step(n_);
    for (std::size_t j = 0; j < n_; ++j) step[j] = fraction * total / sigmoid(y[j]);
    return step;
  }

 private:
  double total_time_;
  std::size_t n_;
  double anchor_ = 1.0;
};

struct EtaProjection {
  double eta = 0.5;
  /// max_i |t_i - t_i(eta)| / t.
  double max_deviation = 0.0;
};

/// Least-squares fit of the eta-family to the given timings.
inline EtaProjection project_onto_eta(const PulseSequence& seq) {
  const std::size_t n = seq.size();
  if (n == 0) throw InvalidArgument("cannot project an empty sequence");
  const auto frac = seq.fractions();
  auto form = [n](double eta, std::size_t i) {
    return (eta + static_cast<double>(i)) / (static_cast<double>(n) - 1.0 + 2.0 * eta);
  };
  auto sse = [&](double eta) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += (frac[i] - form(eta, i)) * (frac[i] - form(eta, i));
    return s;
  };
  double eta = 0.5;
  if (n > 1) {
    const double lo = std::log(1e-3), hi = std::log(10.0);
    const std::size_t grid = 200;
    std::size_t best = 0;
    double best_val = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k <= grid; ++k) {
      const double v = sse(std::exp(lo + (hi - lo) * static_cast<double>(k) / grid));
      if (v < best_val) {
        best_val = v;
        best = k;
      }
    }
    const double step = (hi - lo) / grid;
    const double c = lo + step * static_cast<double>(best);
    eta = std::exp(detail::golden_minimize([&](double u) { return sse(std::exp(u)); }, c - step,
                                           c + step, 1e-12));
  }
  EtaProjection out{eta, 0.0};
  for (std::size_t i = 0; i < n; ++i)
    out.max_deviation = std::max(out.max_deviation, std::abs(frac[i] - form(eta, i)));
  return out;
}

/// Multiplies each of the n + 1 gaps of seq by exp(N(0, sd^2)) and
/// renormalises to the same total time. Used to seed the optimizer away
/// from a family member.
inline PulseSequence perturb_gaps(const PulseSequence& seq, double sd, std::uint64_t seed) {
  if (!(sd >= 0.0) || !std::isfinite(sd)) throw InvalidArgument("perturbation sd must be >= 0");
  Stream rng(seed, 0);
  const double t = seq.total_time();
  std::vector<double> gaps;
  double prev = 0.0;
  for (double x : seq.pulse_times()) {
    gaps.push_back((x - prev) * std::exp(sd * rng.normal()));
    prev = x;
  }
  gaps.push_back((t - prev) * std::exp(sd * rng.normal()));
  double sum = 0.0;
  for (double g : gaps) sum += g;
  std::vector<double> times;
  double acc = 0.0;
  for (std::size_t i = 0; i + 1 < gaps.size(); ++i) times.push_back(t * (acc += gaps[i]) / sum);
  return custom(std::move(times), t);
}

struct OptimizationResult {
  PulseSequence best_sequence;
  double best_coherence = 1.0;
  double start_coherence = 1.0;
  std::size_t iterations = 0;
  std::size_t evaluations = 0;
  bool converged = false;
  std::optional<double> eta_equivalent;
  /// Per-pulse deviation from the projected eta-family member, relative to t.
  double eta_residual = 0.0;
};

struct OptimizeOptions {
  /// Quadrature tolerance for each objective evaluation.
  double tol = 1e-9;
  std::size_t max_iter = 20000;
  /// Starting timings; CPMG when absent.
  std::optional<PulseSequence> start;
  /// Fresh simplices built around the incumbent after a run stops.
  std::size_t restarts = 4;
  /// Initial simplex size as a fraction of t, and its factor per restart.
  double initial_step = 0.01;
  double restart_step_scale = 1.0;
  /// Iteration cap of each individual run; 0 leaves only max_iter.
  std::size_t iterations_per_run = 0;
  /// Dimension-dependent simplex coefficients (Gao and Han 2012) instead of
  /// the fixed 1 / 2 / 0.5 / 0.5.
  bool adaptive_coefficients = false;
};

/**
 * Maximises C(t) over the pulse timings with Nelder-Mead on the gap
 * coordinates. The objective is the exponent -ln C; the quadrature cut-off
 * is fixed at the start so the objective is a smooth function of the
 * timings. The initial simplex moves each gap by 1% of t; a run stops when
 * the simplex spans less than 1e-6 t in pulse time or its objective spread
 * drops below 1e-10.
 */
inline OptimizationResult optimize_timings(std::size_t n, double total_time, const BathModel& bath,
                                           const OptimizeOptions& options = {}) {
  if (n == 0) throw InvalidArgument("optimize_timings needs n >= 1");
  const PulseSequence start = options.start ? *options.start : cpmg(static_cast<long long>(n), total_time);
  if (start.size() != n || start.total_time() != total_time)
    throw InvalidArgument("start sequence does not match n and total_time");

  QuadratureConfig cfg;
  cfg.tol = options.tol;
  cfg.omega_max = coherence_exponent(start, bath, cfg).omega_max;

  const GapMap map(start);
  auto objective = [&](const Point& y) {
    try {
      return coherence_exponent(map.sequence(y), bath, cfg).exponent;
    } catch (const InvalidArgument&) {
      // Gaps below double resolution collapse two pulses.
      return std::numeric_limits<double>::infinity();
    } catch (const NumericFailure&) {
      // Nearly coincident pulses; never better than a resolvable point.
      return std::numeric_limits<double>::infinity();
    }
  };

  NelderMeadOptions nm;
  nm.x_tol = 1e-6 * total_time;
  if (options.adaptive_coefficients) {
    const double d = static_cast<double>(n);
    nm.expansion = 1.0 + 2.0 / d;
    nm.contraction = 0.75 - 0.5 / d;
    nm.shrink = 1.0 - 1.0 / d;
  }
  nm.f_tol = 1e-10;
  nm.distance = [&](const Point& a, const Point& b) {
    const auto ta = map.times(a), tb = map.times(b);
    double d = 0.0;
    for (std::size_t i = 0; i < n; ++i) d = std::max(d, std::abs(ta[i] - tb[i]));
    return d;
  };

  Point y = map.coordinates(start);
  const double f_start = objective(y);
  double f_best = f_start;
  OptimizationResult out{start, std::exp(-f_start), std::exp(-f_start)};
  bool converged = false;
  double step = options.initial_step;
  for (std::size_t round = 0; round <= options.restarts; ++round, step *= options.restart_step_scale) {
    if (out.iterations >= options.max_iter) break;
    nm.max_iter = options.max_iter - out.iterations;
    if (options.iterations_per_run > 0)
      nm.max_iter = std::min(nm.max_iter, options.iterations_per_run);
    nm.initial_step = map.step_for(y, step);
    const NelderMeadResult r = nelder_mead(objective, y, nm);
    out.iterations += r.iterations;
    out.evaluations += r.evaluations;
    converged = r.converged;
    const double gain = f_best - r.fx;
    if (r.fx < f_best) {
      f_best = r.fx;
      y = r.x;
    }
    // A run cut short by the overall budget, or a restart that cannot
    // improve on the incumbent, ends the search.
    if (out.iterations >= options.max_iter || gain < nm.f_tol) break;
  }

  if (f_best < f_start) {
    out.best_sequence = map.sequence(y);
    out.best_coherence = std::exp(-f_best);
  }
  out.converged = converged;
  const EtaProjection proj = project_onto_eta(out.best_sequence);
  out.eta_equivalent = proj.eta;
  out.eta_residual = proj.max_deviation;
  return out;
}

struct EtaPoint {
  double eta = 0.5;
  double coherence = 1.0;
  /// -t / ln C at the evaluation time; infinite when C = 1.
  double tau_c = 0.0;
};

inline double tau_from_coherence(double total_time, double c) {
  return c >= 1.0 ? std::numeric_limits<double>::infinity() : -total_time / std::log(c);
}

/// Coherence and coherence time of eta_family(n, t, eta) for every eta in
/// the grid. Grid points are evaluated independently, in parallel when
/// workers != 1.
inline std::vector<EtaPoint> eta_scan(std::size_t n, double total_time, const BathModel& bath,
                                      const std::vector<double>& eta_grid,
                                      const QuadratureConfig& cfg = {}, std::size_t workers = 1) {
  for (std::size_t k = 0; k < eta_grid.size(); ++k)
    if (!(eta_grid[k] > 0.0 && eta_grid[k] <= 2.0))
      throw InvalidArgument("eta grid values must lie in (0, 2]", k);
  std::vector<EtaPoint> out(eta_grid.size());
  parallel_for(eta_grid.size(), workers, [&](std::size_t k) {
    const double c =
        coherence(eta_family(static_cast<long long>(n), total_time, eta_grid[k]), bath, cfg);
    out[k] = {eta_grid[k], c, tau_from_coherence(total_time, c)};
  });
  return out;
}

/// Maximises tau_c over eta in [lo, hi] by a 21-point scan and golden-section
/// refinement.
inline EtaPoint best_eta(std::size_t n, double total_time, const BathModel& bath, double lo = 0.05,
                         double hi = 2.0, const QuadratureConfig& cfg = {}) {
  if (!(lo > 0.0 && hi > lo && hi <= 2.0)) throw InvalidArgument("eta range must lie in (0, 2]");
  std::vector<double> grid;
  for (int k = 0; k <= 20; ++k) grid.push_back(lo + (hi - lo) * k / 20.0);
  const auto scan = eta_scan(n, total_time, bath, grid, cfg);
  std::size_t best = 0;
  for (std::size_t k = 1; k < scan.size(); ++k)
    if (scan[k].coherence > scan[best].coherence) best = k;
  const double a = grid[best == 0 ? 0 : best - 1];
  const double b = grid[std::min(best + 1, grid.size() - 1)];
  auto neg = [&](double eta) {
    return -coherence(eta_family(static_cast<long long>(n), total_time, eta), bath, cfg);
  };
  const double eta = detail::golden_minimize(neg, a, b, 1e-6);
  const double c = -neg(eta);
  if (c < scan[best].coherence) return scan[best];
  return {eta, c, tau_from_coherence(total_time, c)};
}

struct UddComparison {
  std::size_t n = 0;
  double tau_cpmg = 0.0;
  double tau_udd = 0.0;
  /// 1 - tau_udd / tau_cpmg.
  double udd_deficit = 0.0;
};

/// Coherence times -t / ln C of CPMG and UDD with equal n, t and bath.
inline std::vector<UddComparison> compare_cpmg_udd(const std::vector<long long>& n_values,
                                                   double total_time, const BathModel& bath,
                                                   const QuadratureConfig& cfg = {},
                                                   std::size_t workers = 1) {
  for (std::size_t k = 0; k < n_values.size(); ++k)
    if (n_values[k] < 1) throw InvalidArgument("pulse counts must be >= 1", k);
  std::vector<UddComparison> out(n_values.size());
  parallel_for(n_values.size(), workers, [&](std::size_t k) {
    const long long n = n_values[k];
    const double a = tau_from_coherence(total_time, coherence(cpmg(n, total_time), bath, cfg));
    const double b = tau_from_coherence(total_time, coherence(udd(n, total_time), bath, cfg));
    out[k] = {static_cast<std::size_t>(n), a, b, 1.0 - b / a};
  });
  return out;
}

}  // namespace ddkit
