#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <random>
#include <vector>

#include "ddkit/errors.hpp"
#include "ddkit/nelder_mead.hpp"
#include "ddkit/rng.hpp"

namespace ddkit {

using cplx = std::complex<double>;
using Matrix2c = Eigen::Matrix2cd;
using Matrix4c = Eigen::Matrix4cd;

/**
 * Qubit operators in the basis (|1>, |2>). |2> is the +z state and
 * (|1> + |2>)/sqrt 2 the +x state, so with
 *
 *   X = [[0, 1], [1, 0]],  Y = [[0, -i], [i, 0]],  Z = [[-1, 0], [0, 1]]
 *
 * (|1> + i|2>)/sqrt 2 is the +y state. Note XY = -iZ in this frame.
 */
namespace pauli {

inline Matrix2c I() { return Matrix2c::Identity(); }
inline Matrix2c X() {
  Matrix2c m;
  m << 0, 1, 1, 0;
  return m;
}
inline Matrix2c Y() {
  Matrix2c m;
  m << 0, cplx(0, -1), cplx(0, 1), 0;
  return m;
}
inline Matrix2c Z() {
  Matrix2c m;
  m << -1, 0, 0, 1;
  return m;
}

/// Process basis (I, X, -iY, Z).
inline std::array<Matrix2c, 4> process_basis() {
  return {I(), X(), cplx(0, -1) * Y(), Z()};
}

}  // namespace pauli

struct BlochVector {
  double x = 0.0, y = 0.0, z = 0.0;

  double norm() const { return std::sqrt(x * x + y * y + z * z); }
  double dot(const BlochVector& o) const { return x * o.x + y * o.y + z * o.z; }
};

class DensityMatrix {
 public:
  DensityMatrix() : m_(Matrix2c::Identity() / 2.0) {}
  /// Checks Hermiticity, unit trace and eigenvalues >= -tol.
  explicit DensityMatrix(const Matrix2c& m, double tol = 1e-9) : m_(m) {
    if ((m - m.adjoint()).cwiseAbs().maxCoeff() > 1e-10)
      throw InvalidArgument("density matrix must be Hermitian");
    if (std::abs(m.trace() - cplx(1.0)) > 1e-10)
      throw InvalidArgument("density matrix must have unit trace");
    const Eigen::SelfAdjointEigenSolver<Matrix2c> es(m);
    if (es.eigenvalues().minCoeff() < -tol)
      throw InvalidArgument("density matrix must be positive semidefinite");
  }

  static DensityMatrix pure(cplx amp1, cplx amp2) {
    Eigen::Vector2cd v(amp1, amp2);
    v.normalize();
    return DensityMatrix(v * v.adjoint());
  }

  const Matrix2c& matrix() const noexcept { return m_; }
  cplx operator()(int i, int j) const { return m_(i, j); }

 private:
  Matrix2c m_;
};

/// r_i = tr(sigma_i rho).
inline BlochVector bloch(const DensityMatrix& rho) {
  const Matrix2c& m = rho.matrix();
  return {(pauli::X() * m).trace().real(), (pauli::Y() * m).trace().real(),
          (pauli::Z() * m).trace().real()};
}

/// rho = (I + r . sigma) / 2.
inline DensityMatrix bloch_to_rho(const BlochVector& r, double tol = 1e-9) {
  if (r.norm() > 1.0 + tol) throw InvalidArgument("Bloch vector longer than one");
  const Matrix2c m = 0.5 * (pauli::I() + r.x * pauli::X() + r.y * pauli::Y() + r.z * pauli::Z());
  return DensityMatrix(m, 2.0 * tol);
}

using Channel = std::function<DensityMatrix(const DensityMatrix&)>;

/// Phase damping, depolarisation and a slow rotation about z.
struct ChannelParams {
  /// Equatorial decay time; infinity disables it.
  double dephasing_tau = std::numeric_limits<double>::infinity();
  double depolarizing_t1 = std::numeric_limits<double>::infinity();
  /// Azimuthal rotation rate, rad/s.
  double rotation_rate = 0.0;

  void validate() const {
    if (!(dephasing_tau > 0.0) || !(depolarizing_t1 > 0.0))
      throw InvalidArgument("decay times must be positive (infinity allowed)");
    if (!(rotation_rate >= 0.0)) throw InvalidArgument("rotation_rate must be >= 0");
  }
};

/// Memory channel of the QPT experiment: tau_c = 2.4 s, T1 = 6 s and
/// 9 degrees per second of residual rotation, which can be switched off.
inline ChannelParams memory_channel(bool with_rotation = true) {
  return {2.4, 6.0, with_rotation ? 9.0 * std::numbers::pi / 180.0 : 0.0};
}

/**
 * Bloch-space action: (x, y) scaled by e^{-t/tau_c} e^{-t/T1} and turned
 * by rotation_rate * t about z; z scaled by e^{-t/T1}, so the fixed point
 * is the maximally mixed state.
 */
inline DensityMatrix apply_channel(const ChannelParams& p, double t, const DensityMatrix& rho) {
  p.validate();
  if (!(t >= 0.0)) throw InvalidArgument("t must be >= 0");
  const BlochVector r = bloch(rho);
  const double depol = std::exp(-t / p.depolarizing_t1);
  const double eq = std::exp(-t / p.dephasing_tau) * depol;
  const double a = p.rotation_rate * t;
  const double c = std::cos(a), s = std::sin(a);
  return bloch_to_rho({eq * (c * r.x - s * r.y), eq * (s * r.x + c * r.y), depol * r.z});
}

inline Channel make_channel(const ChannelParams& p, double t) {
  return [p, t](const DensityMatrix& rho) { return apply_channel(p, t, rho); };
}

class ChiMatrix {
 public:
  ChiMatrix() : m_(Matrix4c::Zero()) { m_(0, 0) = 1.0; }
  explicit ChiMatrix(const Matrix4c& m) : m_(m) {}

  const Matrix4c& matrix() const noexcept { return m_; }
  cplx operator()(int k, int l) const { return m_(k, l); }

  /// max |sum_kl chi_kl E_l^dag E_k - I|.
  double tp_residual() const {
    const auto e = pauli::process_basis();
    Matrix2c s = Matrix2c::Zero();
    for (int k = 0; k < 4; ++k)
      for (int l = 0; l < 4; ++l) s += m_(k, l) * e[l].adjoint() * e[k];
    return (s - Matrix2c::Identity()).cwiseAbs().maxCoeff();
  }

  /// Smallest eigenvalue of the Choi matrix (twice that of chi).
  double min_choi_eigenvalue() const {
    const Matrix4c h = 0.5 * (m_ + m_.adjoint());
    return 2.0 * Eigen::SelfAdjointEigenSolver<Matrix4c>(h).eigenvalues().minCoeff();
  }

  double hermiticity_residual() const { return (m_ - m_.adjoint()).cwiseAbs().maxCoeff(); }

 private:
  Matrix4c m_;
};

/// rho_out = sum_kl E_k rho E_l^dag chi_kl, with E = (I, X, -iY, Z).
inline Matrix2c chi_apply_matrix(const ChiMatrix& chi, const Matrix2c& rho) {
  const auto e = pauli::process_basis();
  Matrix2c out = Matrix2c::Zero();
  for (int k = 0; k < 4; ++k)
    for (int l = 0; l < 4; ++l) out += chi(k, l) * e[k] * rho * e[l].adjoint();
  return out;
}

inline DensityMatrix chi_apply(const ChiMatrix& chi, const DensityMatrix& rho) {
  return DensityMatrix(chi_apply_matrix(chi, rho.matrix()), 1e-6);
}

namespace detail {

// Column k: v_k[2i + j] = (E_k)_{ji}, so that the Choi matrix
// J = sum_ij |i><j| (x) E(|i><j|) equals sum_kl chi_kl v_k v_l^dag.
inline Matrix4c choi_vectors() {
  const auto e = pauli::process_basis();
  Matrix4c v;
  for (int k = 0; k < 4; ++k)
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) v(2 * i + j, k) = e[k](j, i);
  return v;
}

inline Matrix4c chi_to_choi(const Matrix4c& chi) {
  const Matrix4c v = choi_vectors();
  return v * chi * v.adjoint();
}

inline Matrix4c choi_to_chi(const Matrix4c& choi) {
  // The v_k are orthogonal with norm^2 = 2.
  const Matrix4c v = choi_vectors();
  return v.adjoint() * choi * v / 4.0;
}

// Choi matrix from the images of the probes |1><1|, |2><2|, |+><+|, |+i><+i|.
inline Matrix4c choi_from_probe_images(const std::array<Matrix2c, 4>& out) {
  const cplx i(0, 1);
  std::array<std::array<Matrix2c, 2>, 2> img;
  img[0][0] = out[0];
  img[1][1] = out[1];
  // |1><2| = |+><+| + i|+i><+i| - (1 + i)/2 (|1><1| + |2><2|)
  img[0][1] = out[2] + i * out[3] - 0.5 * (1.0 + i) * (out[0] + out[1]);
  img[1][0] = out[2] - i * out[3] - 0.5 * (1.0 - i) * (out[0] + out[1]);
  Matrix4c j = Matrix4c::Zero();
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b) j.block<2, 2>(2 * a, 2 * b) = img[a][b];
  return j;
}

}  // namespace detail

/// Probe inputs |1>, |2>, |+> = (|1> + |2>)/sqrt 2, |+i> = (|1> + i|2>)/sqrt 2.
inline std::array<DensityMatrix, 4> probe_states() {
  const double h = 1.0 / std::sqrt(2.0);
  return {DensityMatrix::pure(1, 0), DensityMatrix::pure(0, 1), DensityMatrix::pure(h, h),
          DensityMatrix::pure(h, cplx(0, h))};
}

struct ChiReconstruction {
  ChiMatrix chi;
  /// TP residual before any projection.
  double tp_residual = 0.0;
  /// Sum of the negative Choi eigenvalues removed to restore CP.
  double clipped_mass = 0.0;
};

/// chi of a linear map from its action on the four probe states.
inline ChiReconstruction channel_to_chi_diagnostic(const Channel& channel) {
  const auto probes = probe_states();
  std::array<Matrix2c, 4> out;
  for (int k = 0; k < 4; ++k) out[k] = channel(probes[k]).matrix();
  ChiReconstruction r;
  r.chi = ChiMatrix(detail::choi_to_chi(detail::choi_from_probe_images(out)));
  r.tp_residual = r.chi.tp_residual();
  return r;
}

inline ChiMatrix channel_to_chi(const Channel& channel) {
  return channel_to_chi_diagnostic(channel).chi;
}

/// Bloch-space form r' = M r + c of the map chi induces.
struct AffineBlochMap {
  Eigen::Matrix3d m;
  Eigen::Vector3d c;
};

inline AffineBlochMap bloch_map(const ChiMatrix& chi) {
  const std::array<Matrix2c, 3> s{pauli::X(), pauli::Y(), pauli::Z()};
  auto coords = [&](const Matrix2c& rho) {
    Eigen::Vector3d v;
    for (int i = 0; i < 3; ++i) v(i) = (s[i] * rho).trace().real();
    return v;
  };
  AffineBlochMap a;
  a.c = coords(chi_apply_matrix(chi, 0.5 * pauli::I()));
  // rho = I/2 + sum_j r_j sigma_j / 2, so column j is the image of sigma_j / 2.
  for (int j = 0; j < 3; ++j) a.m.col(j) = coords(chi_apply_matrix(chi, 0.5 * s[j]));
  return a;
}

struct FidelityResult {
  double fidelity = 1.0;
  /// Minimising input state in Bloch angles.
  double theta = 0.0;
  double phi = 0.0;
};

/**
 * min over pure states |psi> of <psi| E(|psi><psi|) |psi> = (1 + r . r') / 2,
 * by a 64 x 128 grid over (theta, phi) and Nelder-Mead refinement of the
 * best grid points.
 */
inline FidelityResult worst_case_fidelity(const ChiMatrix& chi) {
  const AffineBlochMap a = bloch_map(chi);
  auto fid = [&](double theta, double phi) {
    const Eigen::Vector3d r(std::sin(theta) * std::cos(phi), std::sin(theta) * std::sin(phi),
                            std::cos(theta));
    return 0.5 * (1.0 + r.dot(a.m * r + a.c));
  };
  const int nt = 64, np = 128;
  struct Cand {
    double f, theta, phi;
  };
  std::vector<Cand> grid;
  grid.reserve(nt * np);
  for (int i = 0; i < nt; ++i)
    for (int j = 0; j < np; ++j) {
      const double th = std::numbers::pi * i / (nt - 1);
      const double ph = 2.0 * std::numbers::pi * j / np;
      grid.push_back({fid(th, ph), th, ph});
    }
  std::partial_sort(grid.begin(), grid.begin() + 4, grid.end(),
                    [](const Cand& x, const Cand& y) { return x.f < y.f; });

  FidelityResult best{grid[0].f, grid[0].theta, grid[0].phi};
  NelderMeadOptions opt;
  opt.initial_step = {std::numbers::pi / nt, 2.0 * std::numbers::pi / np};
  opt.x_tol = 1e-9;
  opt.f_tol = 1e-12;
  opt.max_iter = 2000;
  for (int c = 0; c < 4; ++c) {
    const auto r = nelder_mead([&](const Point& x) { return fid(x[0], x[1]); },
                               {grid[c].theta, grid[c].phi}, opt);
    if (r.fx < best.fidelity) best = {r.fx, r.x[0], r.x[1]};
  }
  // Fold the angles back to the canonical ranges.
  double th = std::fmod(best.theta, 2.0 * std::numbers::pi);
  double ph = best.phi;
  if (th < 0) th += 2.0 * std::numbers::pi;
  if (th > std::numbers::pi) {
    th = 2.0 * std::numbers::pi - th;
    ph += std::numbers::pi;
  }
  ph = std::fmod(ph, 2.0 * std::numbers::pi);
  if (ph < 0) ph += 2.0 * std::numbers::pi;
  best.theta = th;
  best.phi = ph;
  return best;
}

/// Measurement settings of state tomography: |2> population directly, after
/// a pi/2 pulse taking +x to |2>, and after one taking +y to |2>.
enum class MeasurementSetting { direct, pulse_y, pulse_x };

/// Exact |2> population of a state under each setting.
using PopulationOracle = std::function<double(MeasurementSetting)>;

inline PopulationOracle population_oracle(const DensityMatrix& rho) {
  const BlochVector r = bloch(rho);
  return [r](MeasurementSetting s) {
    switch (s) {
      case MeasurementSetting::direct: return 0.5 * (1.0 + r.z);
      case MeasurementSetting::pulse_y: return 0.5 * (1.0 + r.x);
      case MeasurementSetting::pulse_x: return 0.5 * (1.0 + r.y);
    }
    return 0.5;
  };
}

/// Shot count meaning "exact populations".
inline constexpr std::uint64_t kNoiseless = std::numeric_limits<std::uint64_t>::max();

struct StateEstimate {
  DensityMatrix rho;
  BlochVector raw;
  bool clipped = false;
};

/**
 * Reconstructs rho from the three populations, each estimated from `shots`
 * binomial trials, as r_i = 2 P_i - 1. Estimates outside the Bloch ball
 * are scaled back onto its surface.
 */
inline StateEstimate state_tomography(const PopulationOracle& measure, std::uint64_t shots,
                                      Stream* rng = nullptr) {
  if (shots == 0) throw InvalidArgument("shots must be >= 1");
  if (shots != kNoiseless && rng == nullptr)
    throw InvalidArgument("finite shot counts need a random stream");
  auto estimate = [&](MeasurementSetting s) {
    const double p = std::clamp(measure(s), 0.0, 1.0);
    if (shots == kNoiseless) return p;
    std::binomial_distribution<std::uint64_t> draw(shots, p);
    return static_cast<double>(draw(rng->engine())) / static_cast<double>(shots);
  };
  StateEstimate out;
  out.raw.z = 2.0 * estimate(MeasurementSetting::direct) - 1.0;
  out.raw.x = 2.0 * estimate(MeasurementSetting::pulse_y) - 1.0;
  out.raw.y = 2.0 * estimate(MeasurementSetting::pulse_x) - 1.0;
  BlochVector r = out.raw;
  const double len = r.norm();
  if (len > 1.0) {
    r = {r.x / len, r.y / len, r.z / len};
    out.clipped = true;
  }
  out.rho = bloch_to_rho(r, 1e-12);
  return out;
}

namespace detail {

// Partial trace over the output factor of a Choi matrix.
inline Matrix2c choi_input_marginal(const Matrix4c& j) {
  Matrix2c m;
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b) m(a, b) = j(2 * a, 2 * b) + j(2 * a + 1, 2 * b + 1);
  return m;
}

// Alternating projections onto the CP cone and the TP affine set. Returns
// the negative eigenvalue mass removed by the first clip.
inline double make_physical(Matrix4c& j, int max_rounds = 200) {
  double first_clip = 0.0;
  for (int round = 0; round < max_rounds; ++round) {
    j = 0.5 * (j + j.adjoint());
    const Eigen::SelfAdjointEigenSolver<Matrix4c> es(j);
    Eigen::Vector4d ev = es.eigenvalues();
    double neg = 0.0;
    for (int k = 0; k < 4; ++k)
      if (ev(k) < 0.0) {
        neg -= ev(k);
        ev(k) = 0.0;
      }
    if (round == 0) first_clip = neg;
    const Matrix2c marg = choi_input_marginal(j);
    const double tp = (marg - Matrix2c::Identity()).cwiseAbs().maxCoeff();
    if (neg <= 1e-12 && tp <= 1e-12) break;
    if (neg > 0.0) {
      j = es.eigenvectors() * ev.cast<cplx>().asDiagonal() * es.eigenvectors().adjoint();
      j *= 2.0 / j.trace().real();
    }
    // Shift onto Tr_out J = I.
    const Matrix2c d = choi_input_marginal(j) - Matrix2c::Identity();
    for (int a = 0; a < 2; ++a)
      for (int b = 0; b < 2; ++b)
        for (int o = 0; o < 2; ++o) j(2 * a + o, 2 * b + o) -= 0.5 * d(a, b);
  }
  return first_clip;
}

}  // namespace detail

/**
 * Process tomography: each probe is sent through the channel, its output
 * is estimated by state tomography and chi is inverted from the four
 * estimates. The result is made Hermitian, trace preserving and
 * completely positive (negative Choi eigenvalues clipped, trace
 * renormalised); the clipped mass is reported.
 */
inline ChiReconstruction process_tomography(const Channel& channel, std::uint64_t shots,
                                            std::uint64_t seed = 0) {
  const auto probes = probe_states();
  std::array<Matrix2c, 4> out;
  for (int k = 0; k < 4; ++k) {
    Stream rng(seed, static_cast<std::uint64_t>(k));
    out[k] = state_tomography(population_oracle(channel(probes[k])), shots, &rng).rho.matrix();
  }
  Matrix4c j = detail::choi_from_probe_images(out);
  ChiReconstruction r;
  r.tp_residual = ChiMatrix(detail::choi_to_chi(j)).tp_residual();
  r.clipped_mass = detail::make_physical(j);
  r.chi = ChiMatrix(detail::choi_to_chi(j));
  return r;
}

struct FringeScan {
  std::vector<double> phases;
  std::vector<double> populations;
  /// Fitted sinusoid P = 1/2 + (contrast / 2) sin(offset - alpha).
  double contrast = 0.0;
  double offset = 0.0;
};

/**
 * |2> population after a pi/2 pulse about (cos a, sin a, 0) applied to
 * channel(initial), for each detection phase a. For an output with
 * equatorial length c and azimuth phi this is (1 + c sin(phi - a)) / 2.
 */
inline FringeScan fringe_scan(const DensityMatrix& initial, const Channel& channel,
                              const std::vector<double>& phases) {
  if (phases.empty()) throw InvalidArgument("phase list must not be empty");
  const BlochVector r = bloch(channel(initial));
  FringeScan out;
  out.phases = phases;
  double sc = 0, ss = 0, s1 = 0, cc = 0, cs = 0, sn = 0;
  for (double a : phases) {
    // Quarter turn about n = (cos a, sin a, 0): z' = (n x r)_z.
    const double zp = std::cos(a) * r.y - std::sin(a) * r.x;
    const double p = 0.5 * (1.0 + zp);
    out.populations.push_back(p);
    s1 += p;
    sc += p * std::cos(a);
    ss += p * std::sin(a);
    cc += std::cos(a) * std::cos(a);
    sn += std::sin(a) * std::sin(a);
    cs += std::cos(a) * std::sin(a);
  }
  // Least squares P = a0 + b cos a + c sin a.
  const double n = static_cast<double>(phases.size());
  Eigen::Matrix3d A;
  Eigen::Vector3d rhs;
  double sumc = 0, sums = 0;
  for (double a : phases) {
    sumc += std::cos(a);
    sums += std::sin(a);
  }
  A << n, sumc, sums, sumc, cc, cs, sums, cs, sn;
  rhs << s1, sc, ss;
  const Eigen::Vector3d coef = A.completeOrthogonalDecomposition().solve(rhs);
  out.contrast = 2.0 * std::hypot(coef(1), coef(2));
  out.offset = std::atan2(coef(1), -coef(2));
  return out;
}

}  // namespace ddkit
