#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "ddkit/decoherence.hpp"
#include "ddkit/errors.hpp"
#include "ddkit/parallel.hpp"
#include "ddkit/rng.hpp"
#include "ddkit/sequences.hpp"

namespace ddkit {

enum class EnergyModel { gamma3, gaussian };

inline std::string to_string(EnergyModel m) {
  return m == EnergyModel::gamma3 ? "gamma3" : "gaussian";
}

inline EnergyModel energy_model_from_string(const std::string& s) {
  if (s == "gamma3") return EnergyModel::gamma3;
  if (s == "gaussian") return EnergyModel::gaussian;
  throw InvalidArgument("unknown energy model: " + s);
}

struct EnsembleConfig {
  std::size_t n_atoms = 1000;
  double sigma_delta = 23.8;
  /// Rate of full detuning resampling (the correlation decay rate).
  double gamma = 37.5;
  std::uint64_t seed = 0;
  EnergyModel energy_model = EnergyModel::gamma3;
  /// Threads; 0 picks the hardware concurrency. Results do not depend on it.
  std::size_t workers = 1;

  void validate() const {
    if (n_atoms < 1) throw InvalidArgument("n_atoms must be >= 1");
    if (!(sigma_delta >= 0.0) || !std::isfinite(sigma_delta))
      throw InvalidArgument("sigma_delta must be finite and >= 0");
    if (!(gamma >= 0.0) || !std::isfinite(gamma))
      throw InvalidArgument("gamma must be finite and >= 0");
  }
};

struct AtomState {
  double detuning = 0.0;
  double phase = 0.0;
  int sign = 1;
  std::uint64_t rng_stream = 0;
};

struct SimulationResult {
  CoherenceCurve coherence_curve;
  std::vector<double> phase_variance;
  std::vector<double> statistical_error;
};

/**
 * Detuning of one atom. gamma3: delta = (sigma / sqrt 3) (E - 3) with E the
 * energy of a thermal 3D oscillator in units of k T, i.e. Gamma(3, 1);
 * mean 0, standard deviation sigma, skewness 2 / sqrt 3. gaussian: N(0,
 * sigma^2).
 */
inline double sample_detuning(const EnsembleConfig& cfg, Stream& rng) {
  if (cfg.energy_model == EnergyModel::gamma3)
    return cfg.sigma_delta / std::sqrt(3.0) * (rng.gamma_int(3) - 3.0);
  return cfg.sigma_delta * rng.normal();
}

/**
 * Piecewise-constant detuning history of one atom: delta is redrawn at
 * the events of a Poisson process with rate gamma. Events are generated in
 * order, so extending the horizon never changes the earlier history.
 */
class DetuningTrajectory {
 public:
  DetuningTrajectory(const EnsembleConfig& cfg, std::uint64_t atom, double horizon)
      : rng_(cfg.seed, atom) {
    starts_.push_back(0.0);
    values_.push_back(sample_detuning(cfg, rng_));
    integrals_.push_back(0.0);
    if (cfg.gamma > 0.0) {
      double t = rng_.exponential() / cfg.gamma;
      while (t < horizon) {
        integrals_.push_back(integrals_.back() + values_.back() * (t - starts_.back()));
        starts_.push_back(t);
        values_.push_back(sample_detuning(cfg, rng_));
        t += rng_.exponential() / cfg.gamma;
      }
    }
  }

  std::size_t segments() const noexcept { return starts_.size(); }
  double initial_detuning() const noexcept { return values_.front(); }

  /// Detuning at time t.
  double value(double t) const { return values_[segment(t)]; }

  /// int_0^t delta(s) ds.
  double integral(double t) const {
    const std::size_t j = segment(t);
    return integrals_[j] + values_[j] * (t - starts_[j]);
  }

  /// Same as integral() for non-decreasing t with a caller-held cursor.
  double integral(double t, std::size_t& cursor) const {
    while (cursor + 1 < starts_.size() && starts_[cursor + 1] <= t) ++cursor;
    return integrals_[cursor] + values_[cursor] * (t - starts_[cursor]);
  }

 private:
  std::size_t segment(double t) const {
    const auto it = std::upper_bound(starts_.begin(), starts_.end(), t);
    return static_cast<std::size_t>(it - starts_.begin()) - 1;
  }

  Stream rng_;
  std::vector<double> starts_;
  std::vector<double> values_;
  std::vector<double> integrals_;
};

/// Toggled phase sum_k (-1)^k int_{t_k}^{t_{k+1}} delta over the sequence.
inline AtomState evolve_atom(const DetuningTrajectory& traj, const PulseSequence& seq) {
  AtomState s;
  std::size_t cursor = 0;
  double prev = 0.0;
  for (double p : seq.pulse_times()) {
    const double d = traj.integral(p, cursor);
    s.phase += s.sign * (d - prev);
    prev = d;
    s.sign = -s.sign;
  }
  s.phase += s.sign * (traj.integral(seq.total_time(), cursor) - prev);
  s.detuning = traj.value(seq.total_time());
  return s;
}

inline AtomState evolve_atom(const EnsembleConfig& cfg, std::uint64_t atom,
                             const PulseSequence& seq) {
  const DetuningTrajectory traj(cfg, atom, seq.total_time());
  AtomState s = evolve_atom(traj, seq);
  s.rng_stream = atom;
  return s;
}

namespace detail {

// Pairwise (tree) sum of f(x[i]) in index order.
template <class F>
double pairwise_sum(std::span<const double> x, F&& f) {
  if (x.size() <= 8) {
    double s = 0.0;
    for (double v : x) s += f(v);
    return s;
  }
  const std::size_t h = x.size() / 2;
  return pairwise_sum(x.first(h), f) + pairwise_sum(x.subspan(h), f);
}

struct PhaseStats {
  double coherence = 1.0;
  double error = 0.0;
  double variance = 0.0;
  double mean_phase = 0.0;
};

inline PhaseStats phase_stats(std::span<const double> phases) {
  const double n = static_cast<double>(phases.size());
  const double re = pairwise_sum(phases, [](double p) { return std::cos(p); }) / n;
  const double im = pairwise_sum(phases, [](double p) { return std::sin(p); }) / n;
  PhaseStats s;
  s.coherence = std::min(1.0, std::hypot(re, im));
  s.mean_phase = pairwise_sum(phases, [](double p) { return p; }) / n;
  const double mu = s.mean_phase;
  s.variance = pairwise_sum(phases, [mu](double p) { return (p - mu) * (p - mu); }) / n;
  // Standard error of |<e^{i phi}>| from the spread of the projections
  // onto the mean direction.
  const double theta = std::atan2(im, re), c = s.coherence;
  const double var_proj =
      pairwise_sum(phases, [theta, c](double p) {
        const double x = std::cos(p - theta) - c;
        return x * x;
      }) / n;
  s.error = n > 1.0 ? std::sqrt(var_proj / (n - 1.0)) : 0.0;
  return s;
}

}  // namespace detail

/**
 * Ensemble coherence C(t) = |<e^{i phi(t)}>| at each sample time. At time t
 * the atoms run generator(t); every atom keeps one detuning history across
 * all sample times. Phases are integrated exactly between collision events
 * and pulses.
 *
 * Atoms are distributed over cfg.workers threads; each atom draws from its
 * own stream and the ensemble sums run in atom order, so the result is
 * bitwise identical for any worker count.
 */
inline SimulationResult simulate(const EnsembleConfig& cfg, const SequenceGenerator& generator,
                                 const std::vector<double>& sample_times) {
  cfg.validate();
  if (sample_times.empty()) throw InvalidArgument("sample_times must not be empty");
  for (std::size_t k = 0; k < sample_times.size(); ++k)
    if (!(sample_times[k] >= 0.0) || (k > 0 && sample_times[k] < sample_times[k - 1]))
      throw InvalidArgument("sample times must be non-negative and ascending", k);

  const std::size_t m = sample_times.size(), atoms = cfg.n_atoms;
  std::vector<PulseSequence> seqs;
  seqs.reserve(m);
  // t = 0 needs no sequence; a placeholder keeps the indices aligned.
  for (double t : sample_times) seqs.push_back(t == 0.0 ? free_evolution(1.0) : generator(t));
  const double horizon = sample_times.back();

  // phases[k * atoms + a]: sample-major so each reduction reads a
  // contiguous block.
  std::vector<double> phases(m * atoms);
  parallel_for(atoms, cfg.workers, [&](std::size_t a) {
    const DetuningTrajectory traj(cfg, a, horizon);
    for (std::size_t k = 0; k < m; ++k)
      phases[k * atoms + a] = sample_times[k] == 0.0 ? 0.0 : evolve_atom(traj, seqs[k]).phase;
  });

  SimulationResult res;
  auto& curve = res.coherence_curve;
  curve.method = CurveMethod::monte_carlo;
  curve.times = sample_times;
  curve.params = {{"n_atoms", static_cast<double>(atoms)},
                  {"sigma_delta", cfg.sigma_delta},
                  {"gamma", cfg.gamma},
                  {"seed", static_cast<double>(cfg.seed)}};
  for (std::size_t k = 0; k < m; ++k) {
    const auto st = detail::phase_stats(std::span<const double>(phases).subspan(k * atoms, atoms));
    curve.values.push_back(sample_times[k] == 0.0 ? 1.0 : st.coherence);
    res.phase_variance.push_back(st.variance);
    res.statistical_error.push_back(st.error);
  }
  return res;
}

struct AutocorrelationEstimate {
  std::vector<double> lags;
  std::vector<double> values;
  /// One standard error per lag, from the spread of per-atom time averages.
  std::vector<double> errors;
};

/// Time-averaged <delta(s + lag) delta(s)> over `duration`, sampled on a
/// grid of `samples` start times per atom and averaged over the ensemble.
inline AutocorrelationEstimate detuning_autocorrelation(const EnsembleConfig& cfg,
                                                        const std::vector<double>& lag_grid,
                                                        double duration,
                                                        std::size_t samples = 2000) {
  cfg.validate();
  double max_lag = 0.0;
  for (std::size_t k = 0; k < lag_grid.size(); ++k) {
    if (!(lag_grid[k] >= 0.0)) throw InvalidArgument("lags must be >= 0", k);
    max_lag = std::max(max_lag, lag_grid[k]);
  }
  if (!(duration > max_lag)) throw InvalidArgument("duration must exceed the largest lag");

  const std::size_t atoms = cfg.n_atoms, nl = lag_grid.size();
  std::vector<double> per_atom(nl * atoms);
  parallel_for(atoms, cfg.workers, [&](std::size_t a) {
    const DetuningTrajectory traj(cfg, a, duration);
    for (std::size_t l = 0; l < nl; ++l) {
      const double span = duration - lag_grid[l];
      double s = 0.0;
      for (std::size_t i = 0; i < samples; ++i) {
        const double t = span * (static_cast<double>(i) + 0.5) / static_cast<double>(samples);
        s += traj.value(t) * traj.value(t + lag_grid[l]);
      }
      per_atom[l * atoms + a] = s / static_cast<double>(samples);
    }
  });

  AutocorrelationEstimate out;
  out.lags = lag_grid;
  const double n = static_cast<double>(atoms);
  for (std::size_t l = 0; l < nl; ++l) {
    const auto block = std::span<const double>(per_atom).subspan(l * atoms, atoms);
    const double mean = detail::pairwise_sum(block, [](double v) { return v; }) / n;
    const double var =
        detail::pairwise_sum(block, [mean](double v) { return (v - mean) * (v - mean); }) / n;
    out.values.push_back(mean);
    out.errors.push_back(atoms > 1 ? std::sqrt(var / (n - 1.0)) : 0.0);
  }
  return out;
}

struct PhaseDistribution {
  std::vector<double> bin_edges;
  /// Normalised probability density per bin.
  std::vector<double> density;
  double variance = 0.0;
  double mean = 0.0;
  /// |<e^{i phi}>| over the ensemble.
  double coherence_direct = 1.0;
  /// exp(-variance / 2), exact for Gaussian phases.
  double coherence_gaussian = 1.0;
};

/// Accumulated-phase histogram of the ensemble at the end of `seq`.
inline PhaseDistribution phase_distribution(const EnsembleConfig& cfg, const PulseSequence& seq,
                                            std::size_t bins = 64) {
  cfg.validate();
  if (bins == 0) throw InvalidArgument("bins must be >= 1");
  const std::size_t atoms = cfg.n_atoms;
  std::vector<double> phases(atoms);
  parallel_for(atoms, cfg.workers, [&](std::size_t a) {
    phases[a] = seq.total_time() == 0.0 ? 0.0 : evolve_atom(cfg, a, seq).phase;
  });
  const auto st = detail::phase_stats(phases);

  PhaseDistribution out;
  out.variance = st.variance;
  out.mean = st.mean_phase;
  out.coherence_direct = seq.total_time() == 0.0 ? 1.0 : st.coherence;
  out.coherence_gaussian = std::exp(-0.5 * st.variance);

  const auto [lo_it, hi_it] = std::minmax_element(phases.begin(), phases.end());
  double lo = *lo_it, hi = *hi_it;
  if (hi - lo < 1e-12) {
    lo -= 0.5;
    hi += 0.5;
  }
  const double width = (hi - lo) / static_cast<double>(bins);
  out.bin_edges.resize(bins + 1);
  for (std::size_t b = 0; b <= bins; ++b) out.bin_edges[b] = lo + width * static_cast<double>(b);
  out.density.assign(bins, 0.0);
  for (double p : phases) {
    const auto b = std::min(bins - 1, static_cast<std::size_t>((p - lo) / width));
    out.density[b] += 1.0;
  }
  for (double& d : out.density) d /= static_cast<double>(atoms) * width;
  return out;
}

struct TauScanPoint {
  double f_dd = 0.0;
  CoherenceTime tau;
  /// Fit window actually used.
  CoherenceCurve window;
};

/**
 * Coherence time versus CPMG rate from simulated decay curves: for each
 * f_DD the e^{-1} crossing is located and exp(-t / tau_c) is fitted on the
 * window that follows from it (see fitted_coherence_time). Rates whose
 * curve stays above 1/e up to t_max come back as lower bounds.
 */
inline std::vector<TauScanPoint> tau_c_scan(const EnsembleConfig& cfg,
                                             const std::vector<double>& f_dd_grid, double t_max,
                                             std::size_t points = 16) {
  cfg.validate();
  if (!(t_max > 0.0)) throw InvalidArgument("t_max must be positive");
  for (std::size_t k = 0; k < f_dd_grid.size(); ++k)
    if (!(f_dd_grid[k] > 0.0)) throw InvalidArgument("f_dd values must be positive", k);
  std::vector<TauScanPoint> out;
  for (double f : f_dd_grid) {
    const auto gen = cpmg_generator(f);
    auto evaluator = [&](double t) { return simulate(cfg, gen, {t}).coherence_curve.values[0]; };
    const auto fit = fitted_coherence_time(evaluator, t_max, points, CurveMethod::monte_carlo);
    out.push_back({f, fit.fit, fit.window});
  }
  return out;
}

/// One-sigma statistical error of a Monte-Carlo tau_c fit: the per-point
/// errors of the fit window, re-simulated with the same streams, propagated
/// through the slope of -ln C = t / tau.
inline double tau_standard_error(const EnsembleConfig& cfg, const SequenceGenerator& generator,
                                 const CoherenceCurve& window, double tau) {
  if (window.times.empty()) throw InvalidArgument("empty fit window");
  const auto sim = simulate(cfg, generator, window.times);
  double stt = 0.0, var = 0.0;
  for (std::size_t k = 0; k < window.times.size(); ++k) {
    const double t = window.times[k];
    const double c = sim.coherence_curve.values[k];
    if (!(c > 0.0)) continue;
    const double sy = sim.statistical_error[k] / c;
    stt += t * t;
    var += t * t * sy * sy;
  }
  if (stt == 0.0) return std::numeric_limits<double>::infinity();
  return tau * tau * std::sqrt(var) / stt;
}

}  // namespace ddkit
