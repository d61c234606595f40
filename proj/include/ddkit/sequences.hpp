#pragma once

#include <cmath>
#include <cstddef>
#include <map>
#include <numbers>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ddkit/errors.hpp"

namespace ddkit {

enum class SequenceFamily { cpmg, udd, eta, custom };

inline std::string to_string(SequenceFamily f) {
  switch (f) {
    case SequenceFamily::cpmg: return "cpmg";
    case SequenceFamily::udd: return "udd";
    case SequenceFamily::eta: return "eta";
    case SequenceFamily::custom: return "custom";
  }
  return "custom";
}

inline SequenceFamily family_from_string(const std::string& s) {
  if (s == "cpmg") return SequenceFamily::cpmg;
  if (s == "udd") return SequenceFamily::udd;
  if (s == "eta") return SequenceFamily::eta;
  if (s == "custom") return SequenceFamily::custom;
  throw InvalidArgument("unknown sequence family '" + s + "'");
}

/// Phase pattern {+pi, +pi, -pi, -pi, ...} applied to successive pulses.
inline std::vector<double> alternating_phases(std::size_t n) {
  std::vector<double> phases(n);
  for (std::size_t k = 0; k < n; ++k)
    phases[k] = (k / 2) % 2 == 0 ? std::numbers::pi : -std::numbers::pi;
  return phases;
}

/**
 * Ordered train of ideal, instantaneous pi pulses inside [0, total_time].
 *
 * Times are absolute seconds and strictly inside the open interval
 * (0, total_time). An empty train is free evolution. Phases are carried as
 * metadata; the dephasing model ignores them.
 */
class PulseSequence {
 public:
  using Params = std::map<std::string, double>;

  PulseSequence(double total_time, std::vector<double> pulse_times,
                std::vector<double> phases, SequenceFamily family = SequenceFamily::custom,
                Params family_params = {})
      : total_time_(total_time),
        pulse_times_(std::move(pulse_times)),
        phases_(std::move(phases)),
        family_(family),
        family_params_(std::move(family_params)) {
    validate();
  }

  PulseSequence(double total_time, std::vector<double> pulse_times)
      : PulseSequence(total_time, pulse_times, alternating_phases(pulse_times.size())) {}

  double total_time() const noexcept { return total_time_; }
  std::size_t size() const noexcept { return pulse_times_.size(); }
  bool empty() const noexcept { return pulse_times_.empty(); }
  std::span<const double> pulse_times() const noexcept { return pulse_times_; }
  std::span<const double> phases() const noexcept { return phases_; }
  SequenceFamily family() const noexcept { return family_; }
  const Params& family_params() const noexcept { return family_params_; }

  /// Pulse times divided by the total time.
  std::vector<double> fractions() const {
    std::vector<double> out(pulse_times_.size());
    for (std::size_t k = 0; k < out.size(); ++k) out[k] = pulse_times_[k] / total_time_;
    return out;
  }

  /// True for an eta-family member whose eta lies outside [0.5, 1].
  bool eta_out_of_range() const {
    auto it = family_params_.find("eta_out_of_range");
    return it != family_params_.end() && it->second != 0.0;
  }

  friend bool operator==(const PulseSequence&, const PulseSequence&) = default;

 private:
  void validate() const {
    if (!(total_time_ > 0.0) || !std::isfinite(total_time_))
      throw InvalidArgument("total_time must be positive and finite");
    if (phases_.size() != pulse_times_.size())
      throw InvalidArgument("phases must have one entry per pulse");
    for (std::size_t k = 0; k < pulse_times_.size(); ++k) {
      const double tk = pulse_times_[k];
      if (!std::isfinite(tk) || tk <= 0.0 || tk >= total_time_)
        throw InvalidArgument("pulse " + std::to_string(k) +
                                  " lies on or outside the boundary of (0, total_time)",
                              k);
      if (k > 0 && !(tk > pulse_times_[k - 1]))
        throw InvalidArgument("pulse times not strictly increasing at index " +
                                  std::to_string(k),
                              k);
    }
  }

  double total_time_;
  std::vector<double> pulse_times_;
  std::vector<double> phases_;
  SequenceFamily family_;
  Params family_params_;
};

namespace detail {

inline void require_pulse_count(long long n) {
  if (n < 1) throw InvalidArgument("pulse count must be at least 1");
}

inline void require_positive_time(double t) {
  if (!(t > 0.0) || !std::isfinite(t))
    throw InvalidArgument("total_time must be positive and finite");
}

}  // namespace detail

inline PulseSequence free_evolution(double total_time) {
  detail::require_positive_time(total_time);
  return PulseSequence(total_time, {}, {}, SequenceFamily::cpmg, {{"n", 0.0}});
}

/// Carr-Purcell-Meiboom-Gill: t_k = (2k - 1) / (2n) * t.
inline PulseSequence cpmg(long long n, double total_time) {
  detail::require_pulse_count(n);
  detail::require_positive_time(total_time);
  std::vector<double> times(static_cast<std::size_t>(n));
  for (long long k = 1; k <= n; ++k)
    times[k - 1] = static_cast<double>(2 * k - 1) / static_cast<double>(2 * n) * total_time;
  return PulseSequence(total_time, std::move(times), alternating_phases(n),
                       SequenceFamily::cpmg, {{"n", static_cast<double>(n)}});
}

/// Uhrig sequence: t_j = t * sin^2(j pi / (2 (n + 1))).
inline PulseSequence udd(long long n, double total_time) {
  detail::require_pulse_count(n);
  detail::require_positive_time(total_time);
  std::vector<double> times(static_cast<std::size_t>(n));
  for (long long j = 1; j <= n; ++j) {
    const double s = std::sin(static_cast<double>(j) * std::numbers::pi /
                              (2.0 * static_cast<double>(n + 1)));
    times[j - 1] = total_time * s * s;
  }
  return PulseSequence(total_time, std::move(times), alternating_phases(n),
                       SequenceFamily::udd, {{"n", static_cast<double>(n)}});
}

/// One-parameter family t_i = (eta + i - 1) / (n - 1 + 2 eta) * t. eta = 0.5
/// is CPMG. Values outside [0.5, 1] are allowed and flagged.
inline PulseSequence eta_family(long long n, double total_time, double eta) {
  detail::require_pulse_count(n);
  detail::require_positive_time(total_time);
  if (!(eta > 0.0) || !std::isfinite(eta)) throw InvalidArgument("eta must be positive");
  const double denom = static_cast<double>(n - 1) + 2.0 * eta;
  std::vector<double> times(static_cast<std::size_t>(n));
  for (long long i = 1; i <= n; ++i)
    times[i - 1] = (eta + static_cast<double>(i - 1)) / denom * total_time;
  const bool flagged = eta < 0.5 || eta > 1.0;
  return PulseSequence(total_time, std::move(times), alternating_phases(n),
                       SequenceFamily::eta,
                       {{"n", static_cast<double>(n)},
                        {"eta", eta},
                        {"eta_out_of_range", flagged ? 1.0 : 0.0}});
}

inline PulseSequence custom(std::vector<double> pulse_times, double total_time) {
  detail::require_positive_time(total_time);
  auto phases = alternating_phases(pulse_times.size());
  return PulseSequence(total_time, std::move(pulse_times), std::move(phases),
                       SequenceFamily::custom);
}

/// f_DD = n / (2 t); zero for free evolution.
inline double effective_rate(const PulseSequence& seq) noexcept {
  return static_cast<double>(seq.size()) / (2.0 * seq.total_time());
}

/// Pulse count that keeps the rate f_dd fixed at total time t.
inline long long pulses_for_rate(double f_dd, double t) {
  return std::llround(2.0 * f_dd * t);
}

/// CPMG at fixed effective rate; falls back to free evolution when the
/// rounded pulse count is zero.
inline PulseSequence cpmg_at_rate(double f_dd, double t) {
  const long long n = pulses_for_rate(f_dd, t);
  return n >= 1 ? cpmg(n, t) : free_evolution(t);
}

}  // namespace ddkit
