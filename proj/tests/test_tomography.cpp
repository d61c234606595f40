#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <random>

#include "ddkit/tomography.hpp"

using namespace ddkit;
using Catch::Approx;

namespace {

const double kH = 1.0 / std::sqrt(2.0);

DensityMatrix psi1() { return DensityMatrix::pure(kH, kH); }
DensityMatrix psi2() { return DensityMatrix::pure(kH, cplx(0, kH)); }

DensityMatrix random_state(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  BlochVector r;
  do {
    r = {u(rng), u(rng), u(rng)};
  } while (r.norm() > 1.0);
  return bloch_to_rho(r);
}

double max_diff(const Matrix2c& a, const Matrix2c& b) { return (a - b).cwiseAbs().maxCoeff(); }

Channel identity_channel() {
  return [](const DensityMatrix& r) { return r; };
}

}  // namespace

TEST_CASE("Bloch conventions", "[tomography]") {
  const auto up = bloch(DensityMatrix::pure(0, 1));
  CHECK(up.z == Approx(1.0));
  CHECK(bloch(DensityMatrix::pure(1, 0)).z == Approx(-1.0));
  const auto x = bloch(psi1());
  CHECK(x.x == Approx(1.0));
  CHECK(x.y == Approx(0.0).margin(1e-15));
  const auto y = bloch(psi2());
  CHECK(y.x == Approx(0.0).margin(1e-15));
  CHECK(y.y == Approx(1.0));
  CHECK(bloch(DensityMatrix()).norm() == Approx(0.0).margin(1e-15));

  std::mt19937_64 rng(1);
  for (int k = 0; k < 50; ++k) {
    const auto rho = random_state(rng);
    CHECK(max_diff(bloch_to_rho(bloch(rho)).matrix(), rho.matrix()) < 1e-14);
  }
  CHECK_THROWS_AS(bloch_to_rho({1.0, 0.1, 0.0}), InvalidArgument);
  Matrix2c bad;
  bad << 0.5, 0.7, 0.7, 0.5;
  CHECK_THROWS_AS(DensityMatrix(bad), InvalidArgument);
}

TEST_CASE("memory channel", "[tomography]") {
  const auto p = memory_channel();
  CHECK(max_diff(apply_channel(p, 0.0, psi1()).matrix(), psi1().matrix()) < 1e-15);

  ChannelParams pure_dephasing{2.4};
  const auto r = bloch(apply_channel(pure_dephasing, 1.0, psi1()));
  CHECK(std::hypot(r.x, r.y) == Approx(std::exp(-1.0 / 2.4)));
  CHECK(std::hypot(r.x, r.y) == Approx(0.659).margin(5e-4));

  ChannelParams spin{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(),
                     9.0 * std::numbers::pi / 180.0};
  const auto s = bloch(apply_channel(spin, 3.0, psi1()));
  CHECK(std::atan2(s.y, s.x) * 180.0 / std::numbers::pi == Approx(27.0));

  const auto z = bloch(apply_channel(p, 2.0, DensityMatrix::pure(0, 1)));
  CHECK(z.z == Approx(std::exp(-2.0 / 6.0)));
  CHECK_THROWS_AS(apply_channel({-1.0}, 1.0, psi1()), InvalidArgument);
}

TEST_CASE("chi matrix of simple channels", "[tomography]") {
  const auto id = channel_to_chi(identity_channel());
  Matrix4c expect = Matrix4c::Zero();
  expect(0, 0) = 1.0;
  CHECK((id.matrix() - expect).cwiseAbs().maxCoeff() < 1e-12);

  const Channel full_dephasing = [](const DensityMatrix& rho) {
    const auto r = bloch(rho);
    return bloch_to_rho({0.0, 0.0, r.z});
  };
  const auto pd = channel_to_chi(full_dephasing);
  expect = Matrix4c::Zero();
  expect(0, 0) = 0.5;
  expect(3, 3) = 0.5;
  CHECK((pd.matrix() - expect).cwiseAbs().maxCoeff() < 1e-12);

  const auto fig2 = channel_to_chi(make_channel(memory_channel(), 1.0));
  CHECK(fig2(3, 3).real() > fig2(1, 1).real());
  CHECK(fig2(1, 1).real() == Approx(fig2(2, 2).real()).epsilon(1e-12));
  CHECK(fig2.tp_residual() < 1e-12);
  CHECK(fig2.min_choi_eigenvalue() > -1e-12);
}

TEST_CASE("chi application", "[tomography]") {
  Matrix4c m = Matrix4c::Zero();
  m(0, 0) = 1.0;
  std::mt19937_64 rng(2);
  const auto rho = random_state(rng);
  CHECK(max_diff(chi_apply(ChiMatrix(m), rho).matrix(), rho.matrix()) < 1e-15);

  m = Matrix4c::Zero();
  m(1, 1) = 1.0;
  const auto flipped = chi_apply(ChiMatrix(m), DensityMatrix::pure(0, 1));
  CHECK(max_diff(flipped.matrix(), DensityMatrix::pure(1, 0).matrix()) < 1e-15);
}

TEST_CASE("chi round trip on random channels", "[tomography][property]") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst = 0.0, worst_tp = 0.0;
  for (int k = 0; k < 100; ++k) {
    const ChannelParams p{0.2 + 5.0 * u(rng), 0.5 + 10.0 * u(rng), 2.0 * u(rng)};
    const double t = 3.0 * u(rng);
    const auto f = make_channel(p, t);
    const auto chi = channel_to_chi(f);
    for (int j = 0; j < 5; ++j) {
      const auto rho = random_state(rng);
      const auto out = chi_apply(chi, rho);
      worst = std::max(worst, max_diff(out.matrix(), f(rho).matrix()));
      worst_tp = std::max(worst_tp, std::abs(out.matrix().trace() - cplx(1.0)));
    }
  }
  CHECK(worst < 1e-8);
  CHECK(worst_tp < 1e-8);
}

TEST_CASE("worst-case fidelity", "[tomography]") {
  CHECK(worst_case_fidelity(channel_to_chi(identity_channel())).fidelity == Approx(1.0).margin(1e-12));

  const double c = std::exp(-1.0 / 2.4);
  const auto pd = worst_case_fidelity(channel_to_chi(make_channel({2.4}, 1.0)));
  CHECK(pd.fidelity == Approx((1.0 + c) / 2.0).margin(1e-6));
  CHECK(pd.fidelity == Approx(0.830).margin(1e-3));
  CHECK(std::abs(std::cos(pd.theta)) < 1e-3);

  // Describing the channel in a frame turned about z leaves the minimum
  // unchanged: R^dag E(R rho R^dag) R.
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 2.0 * std::numbers::pi);
  const auto base = make_channel({1.5, 4.0, 0.3}, 1.0);
  const double f0 = worst_case_fidelity(channel_to_chi(base)).fidelity;
  auto turn = [](const DensityMatrix& rho, double a) {
    const auto r = bloch(rho);
    return bloch_to_rho({std::cos(a) * r.x - std::sin(a) * r.y,
                         std::sin(a) * r.x + std::cos(a) * r.y, r.z});
  };
  for (int k = 0; k < 10; ++k) {
    const double a = u(rng);
    const Channel framed = [&, a](const DensityMatrix& rho) {
      return turn(base(turn(rho, a)), -a);
    };
    CHECK(worst_case_fidelity(channel_to_chi(framed)).fidelity == Approx(f0).margin(1e-6));
  }
  // Plain pre-composition is not a symmetry: a half turn sends the
  // equatorial overlap c to -c.
  const Channel flipped = [&](const DensityMatrix& rho) { return base(turn(rho, std::numbers::pi)); };
  CHECK(worst_case_fidelity(channel_to_chi(flipped)).fidelity < f0 - 0.1);
}

TEST_CASE("state tomography", "[tomography]") {
  const auto up = state_tomography(population_oracle(DensityMatrix::pure(0, 1)), kNoiseless);
  CHECK(up.raw.z == 1.0);
  CHECK(up.raw.x == 0.0);
  const auto y = state_tomography(population_oracle(psi2()), kNoiseless);
  CHECK(y.raw.x == Approx(0.0).margin(1e-15));
  CHECK(y.raw.y == Approx(1.0));
  CHECK_THROWS_AS(state_tomography(population_oracle(psi1()), 0), InvalidArgument);

  // 275 000 shots per setting: each component has sigma = sqrt(1 - r_i^2) / sqrt(N).
  Stream rng(9, 0);
  const auto noisy = state_tomography(population_oracle(psi1()), 275000, &rng);
  const auto r = bloch(noisy.rho);
  const double sigma = 1.0 / std::sqrt(275000.0);
  CHECK(std::abs(r.x - 1.0) < 0.01);
  CHECK(std::abs(r.y) < 3.0 * sigma);
  CHECK(std::abs(r.z) < 3.0 * sigma);
  CHECK(r.norm() <= 1.0 + 1e-12);

  // Unbiased: the mean over repetitions sits within 3 standard errors.
  const BlochVector truth{0.3, -0.4, 0.5};
  const auto oracle = population_oracle(bloch_to_rho(truth));
  const int reps = 10000;
  const std::uint64_t shots = 1000;
  double mx = 0, my = 0, mz = 0;
  for (int k = 0; k < reps; ++k) {
    Stream s(11, static_cast<std::uint64_t>(k));
    const auto e = state_tomography(oracle, shots, &s);
    mx += e.raw.x;
    my += e.raw.y;
    mz += e.raw.z;
  }
  auto se = [&](double ri) { return std::sqrt((1.0 - ri * ri) / shots / reps); };
  CHECK(std::abs(mx / reps - truth.x) < 3.0 * se(truth.x));
  CHECK(std::abs(my / reps - truth.y) < 3.0 * se(truth.y));
  CHECK(std::abs(mz / reps - truth.z) < 3.0 * se(truth.z));
}

TEST_CASE("process tomography", "[tomography]") {
  const auto id = process_tomography(identity_channel(), kNoiseless);
  Matrix4c expect = Matrix4c::Zero();
  expect(0, 0) = 1.0;
  CHECK((id.chi.matrix() - expect).cwiseAbs().maxCoeff() < 1e-10);
  CHECK(id.clipped_mass == 0.0);

  for (double t : {1.0, 2.0, 3.0}) {
    const auto exact = process_tomography(make_channel(memory_channel(), t), kNoiseless);
    CHECK(exact.chi.tp_residual() < 1e-8);
    CHECK(exact.chi.min_choi_eigenvalue() > -1e-6);
    const double f_exact = worst_case_fidelity(exact.chi).fidelity;

    // Shot noise at 275 000 atoms moves the fidelity by far less than 0.02.
    double worst = 0.0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const auto noisy = process_tomography(make_channel(memory_channel(), t), 275000, seed);
      CHECK(noisy.chi.tp_residual() < 1e-8);
      CHECK(noisy.chi.min_choi_eigenvalue() > -1e-6);
      worst = std::max(worst, std::abs(worst_case_fidelity(noisy.chi).fidelity - f_exact));
    }
    CHECK(worst < 0.02);
  }

  // Identical seeds reproduce the reconstruction exactly.
  const auto a = process_tomography(make_channel(memory_channel(), 1.0), 1000, 5);
  const auto b = process_tomography(make_channel(memory_channel(), 1.0), 1000, 5);
  CHECK(a.chi.matrix() == b.chi.matrix());
}

TEST_CASE("physicality projection", "[tomography]") {
  // Few shots on pure outputs push estimates outside the physical set.
  const auto r = process_tomography(identity_channel(), 50, 3);
  CHECK(r.chi.tp_residual() < 1e-8);
  CHECK(r.chi.min_choi_eigenvalue() > -1e-6);
  CHECK(r.clipped_mass >= 0.0);
  CHECK(r.chi.hermiticity_residual() < 1e-12);

  int clipped = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto q = process_tomography(identity_channel(), 50, seed);
    if (q.clipped_mass > 0.0) ++clipped;
    CHECK(q.chi.tp_residual() < 1e-8);
    CHECK(q.chi.min_choi_eigenvalue() > -1e-6);
  }
  CHECK(clipped > 0);
}

TEST_CASE("fringe scans", "[tomography]") {
  std::vector<double> phases;
  for (int k = 0; k < 24; ++k) phases.push_back(2.0 * std::numbers::pi * k / 24.0);
  const auto a = fringe_scan(psi1(), identity_channel(), phases);
  const auto b = fringe_scan(psi2(), identity_channel(), phases);
  CHECK(a.contrast == Approx(1.0));
  CHECK(a.offset == Approx(0.0).margin(1e-12));
  CHECK(b.contrast == Approx(1.0));
  CHECK(b.offset - a.offset == Approx(std::numbers::pi / 2.0));

  const auto decayed = fringe_scan(psi1(), make_channel({3.0}, 3.0), phases);
  CHECK(decayed.contrast == Approx(std::exp(-1.0)));
  CHECK(decayed.contrast == Approx(0.368).margin(5e-4));
  CHECK_THROWS_AS(fringe_scan(psi1(), identity_channel(), {}), InvalidArgument);
}
