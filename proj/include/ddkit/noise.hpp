#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <cstddef>
#include <memory>
#include <numbers>
#include <string>
#include <vector>

#include "ddkit/errors.hpp"

namespace ddkit {

/// Ratio between the mean elastic collision rate and the energy relaxation
/// rate for cold collisions in a 3D harmonic trap (Monroe et al., PRL 70,
/// 414, 1993).
inline constexpr double kCollisionToRelaxationRatio = 2.7;

/// Detuning bath seen by a single two-level system.
///
/// spectrum() is the two-sided power spectrum S(w) = int Phi(t) e^{iwt} dt,
/// in (rad/s)^2 per rad/s; correlation() is Phi(tau) in (rad/s)^2. Both are
/// even functions.
class BathModel {
 public:
  virtual ~BathModel() = default;

  virtual double spectrum(double omega) const = 0;
  virtual double correlation(double tau) const = 0;

  /// Frequency scale where the spectrum starts its decay. Used by the
  /// quadrature to place its first cut.
  virtual double characteristic_rate() const = 0;

  /// Upper bound of the spectrum's support, or +inf when unbounded.
  virtual double support_limit() const { return std::numeric_limits<double>::infinity(); }

  double variance() const { return correlation(0.0); }
};

/// Jump-process bath: Phi(tau) = sigma^2 exp(-Gamma |tau|),
/// S(w) = 2 Gamma sigma^2 / (Gamma^2 + w^2).
class LorentzianBath final : public BathModel {
 public:
  LorentzianBath(double sigma_delta, double gamma) : sigma_(sigma_delta), gamma_(gamma) {
    if (!(sigma_delta >= 0.0) || !std::isfinite(sigma_delta))
      throw InvalidArgument("sigma_delta must be non-negative and finite");
    if (!(gamma > 0.0) || !std::isfinite(gamma))
      throw InvalidArgument("gamma must be positive and finite");
  }

  double sigma_delta() const noexcept { return sigma_; }
  double gamma() const noexcept { return gamma_; }

  double spectrum(double omega) const override {
    return 2.0 * gamma_ * sigma_ * sigma_ / (gamma_ * gamma_ + omega * omega);
  }

  double correlation(double tau) const override {
    return sigma_ * sigma_ * std::exp(-gamma_ * std::abs(tau));
  }

  double characteristic_rate() const override { return gamma_; }

 private:
  double sigma_;
  double gamma_;
};

/// Piecewise-linear spectrum on a non-negative frequency grid, mirrored to
/// negative frequencies and zero beyond the last grid point.
class TabulatedBath final : public BathModel {
 public:
  TabulatedBath(std::vector<double> omega, std::vector<double> s_omega)
      : omega_(std::move(omega)), s_(std::move(s_omega)) {
    if (omega_.size() < 2 || omega_.size() != s_.size())
      throw InvalidArgument("tabulated spectrum needs matching grids of at least 2 points");
    if (omega_.front() < 0.0) throw InvalidArgument("tabulated omega must be non-negative", 0);
    for (std::size_t k = 0; k < omega_.size(); ++k) {
      if (!(s_[k] >= 0.0) || !std::isfinite(s_[k]))
        throw InvalidArgument("tabulated spectrum must be non-negative", k);
      if (k > 0 && !(omega_[k] > omega_[k - 1]))
        throw InvalidArgument("tabulated omega must be strictly increasing", k);
    }
  }

  const std::vector<double>& omega() const noexcept { return omega_; }
  const std::vector<double>& values() const noexcept { return s_; }

  double spectrum(double omega) const override {
    const double w = std::abs(omega);
    if (w <= omega_.front()) return s_.front();
    if (w > omega_.back()) return 0.0;
    const auto it = std::upper_bound(omega_.begin(), omega_.end(), w);
    const std::size_t hi = static_cast<std::size_t>(it - omega_.begin());
    const std::size_t lo = hi - 1;
    const double frac = (w - omega_[lo]) / (omega_[hi] - omega_[lo]);
    return s_[lo] + frac * (s_[hi] - s_[lo]);
  }

  // Phi(tau) = (1/pi) int_0^inf S(w) cos(w tau) dw, integrated exactly on
  // each linear segment. The flat extension below omega.front() is included.
  double correlation(double tau) const override {
    const double t = std::abs(tau);
    double acc = s_.front() * (t == 0.0 ? omega_.front()
                                        : std::sin(omega_.front() * t) / t);
    if (t * omega_.back() < 1e-6) {
      for (std::size_t k = 1; k < omega_.size(); ++k)
        acc += 0.5 * (s_[k] + s_[k - 1]) * (omega_[k] - omega_[k - 1]);
      return acc / std::numbers::pi;
    }
    for (std::size_t k = 1; k < omega_.size(); ++k) {
      const double a = omega_[k - 1], b = omega_[k];
      const double slope = (s_[k] - s_[k - 1]) / (b - a);
      auto antideriv = [&](double w, double sw) {
        return sw * std::sin(w * t) / t + slope * std::cos(w * t) / (t * t);
      };
      acc += antideriv(b, s_[k]) - antideriv(a, s_[k - 1]);
    }
    return acc / std::numbers::pi;
  }

  double characteristic_rate() const override {
    // Half-power point of the table, as a rough frequency scale.
    const double peak = *std::max_element(s_.begin(), s_.end());
    for (std::size_t k = 0; k < s_.size(); ++k)
      if (s_[k] < 0.5 * peak && omega_[k] > 0.0) return omega_[k];
    return omega_.back();
  }

  double support_limit() const override { return omega_.back(); }

 private:
  std::vector<double> omega_;
  std::vector<double> s_;
};

/// Gamma = Gamma_col / 2.7.
inline double collision_rate_to_gamma(double gamma_col,
                                      double ratio = kCollisionToRelaxationRatio) {
  if (!(gamma_col >= 0.0)) throw InvalidArgument("collision rate must be non-negative");
  return gamma_col / ratio;
}

inline double gamma_to_collision_rate(double gamma,
                                      double ratio = kCollisionToRelaxationRatio) {
  if (!(gamma >= 0.0)) throw InvalidArgument("relaxation rate must be non-negative");
  return gamma * ratio;
}

}  // namespace ddkit
