#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numbers>

#include "ddkit/noise.hpp"
#include "ddkit/quadrature.hpp"

using namespace ddkit;
using Catch::Approx;

TEST_CASE("Lorentzian spectrum closed form", "[noise]") {
  const LorentzianBath trap(23.8, 37.5);
  CHECK(trap.spectrum(0.0) == Approx(2.0 * 23.8 * 23.8 / 37.5).epsilon(1e-15));
  CHECK(trap.spectrum(0.0) == Approx(30.21).epsilon(1e-3));
  CHECK(LorentzianBath(1.0, 1.0).spectrum(1.0) == 1.0);

  // w^-2 tail.
  const double w = 1e6;
  CHECK(trap.spectrum(w) * w * w == Approx(2.0 * 37.5 * 23.8 * 23.8).epsilon(1e-8));
  CHECK(trap.spectrum(1e12) < 1e-18);
}

TEST_CASE("Lorentzian correlation", "[noise]") {
  CHECK(LorentzianBath(2.0, 1.0).correlation(0.0) == 4.0);
  CHECK(LorentzianBath(1.0, 1.0).correlation(std::log(2.0)) == Approx(0.5).epsilon(1e-15));
  const LorentzianBath trap(23.8, 37.5);
  CHECK(trap.correlation(0.1) == Approx(566.44 * std::exp(-3.75)).epsilon(1e-12));
  CHECK(trap.correlation(0.1) == Approx(13.31).epsilon(1e-3));
  CHECK(trap.correlation(-0.1) == trap.correlation(0.1));
  CHECK(trap.variance() == Approx(23.8 * 23.8));
}

TEST_CASE("bath invariants", "[noise][property]") {
  for (double sigma : {0.5, 23.8, 100.0}) {
    for (double gamma : {0.1, 37.5, 500.0}) {
      const LorentzianBath b(sigma, gamma);
      double prev = b.correlation(0.0);
      for (double w = -1e4; w <= 1e4; w += 97.3) {
        REQUIRE(b.spectrum(w) > 0.0);
        REQUIRE(b.spectrum(w) == b.spectrum(-w));
      }
      for (double tau = 1e-3; tau < 10.0 / gamma; tau *= 1.5) {
        const double c = b.correlation(tau);
        REQUIRE(c <= prev);
        prev = c;
      }
    }
  }
}

TEST_CASE("Wiener-Khinchin consistency", "[noise][property]") {
  const LorentzianBath b(23.8, 37.5);
  const double gamma = b.gamma();
  quad::Options opt;
  opt.abs_tol = 1e-12;
  for (double w : {0.0, gamma, 10.0 * gamma}) {
    // S(w) = 2 int_0^inf Phi(tau) cos(w tau) dtau; the truncated tail is
    // below exp(-60) relative.
    auto f = [&](double tau) { return 2.0 * b.correlation(tau) * std::cos(w * tau); };
    const auto r = quad::integrate(f, 0.0, 60.0 / gamma, opt);
    CHECK(r.value == Approx(b.spectrum(w)).epsilon(1e-6));
  }
  // int_0^inf S dw / pi = sigma^2, via w = Gamma tan(theta).
  auto g = [&](double theta) {
    const double w = gamma * std::tan(theta);
    return b.spectrum(w) * gamma / (std::cos(theta) * std::cos(theta)) / std::numbers::pi;
  };
  const auto area = quad::integrate(g, 0.0, std::numbers::pi / 2.0, opt);
  CHECK(area.value == Approx(23.8 * 23.8).epsilon(1e-9));
}

TEST_CASE("collision rate conversion", "[noise]") {
  CHECK(collision_rate_to_gamma(100.0) == Approx(37.037).epsilon(1e-4));
  // Quoted pair: 100 /s collisions and Gamma = 37.5 /s agree to 1.5 %.
  CHECK(std::abs(collision_rate_to_gamma(100.0) - 37.5) / 37.5 < 0.015);
  CHECK(collision_rate_to_gamma(0.0) == 0.0);
  CHECK(collision_rate_to_gamma(2.7) == Approx(1.0).epsilon(1e-15));
  CHECK(gamma_to_collision_rate(1.0) == 2.7);
  CHECK_THROWS_AS(collision_rate_to_gamma(-1.0), InvalidArgument);
  for (double x : {0.0, 1e-9, 3.3, 100.0, 7.77e5}) {
    const double back = gamma_to_collision_rate(collision_rate_to_gamma(x));
    CHECK(back == Approx(x).epsilon(2.0 * std::numeric_limits<double>::epsilon()));
  }
}

TEST_CASE("bath parameter validation", "[noise]") {
  CHECK_THROWS_AS(LorentzianBath(-1.0, 1.0), InvalidArgument);
  CHECK_THROWS_AS(LorentzianBath(1.0, 0.0), InvalidArgument);
  CHECK_NOTHROW(LorentzianBath(0.0, 1.0));
  CHECK_THROWS_AS(TabulatedBath({0.0}, {1.0}), InvalidArgument);
  CHECK_THROWS_AS(TabulatedBath({0.0, 1.0}, {1.0, -1.0}), InvalidArgument);
  CHECK_THROWS_AS(TabulatedBath({1.0, 0.5}, {1.0, 1.0}), InvalidArgument);
}

TEST_CASE("tabulated bath reproduces a sampled Lorentzian", "[noise]") {
  const LorentzianBath ref(23.8, 37.5);
  std::vector<double> w, s;
  for (double x = 0.0; x <= 2e5; x += (x < 2000.0 ? 0.5 : 50.0)) {
    w.push_back(x);
    s.push_back(ref.spectrum(x));
  }
  const TabulatedBath tab(w, s);
  CHECK(tab.spectrum(-10.25) == tab.spectrum(10.25));
  CHECK(tab.spectrum(10.25) == Approx(ref.spectrum(10.25)).epsilon(1e-4));
  CHECK(tab.spectrum(3e5) == 0.0);
  // Truncation at 2e5 rad/s loses 2 Gamma sigma^2 / (pi 2e5) of variance.
  CHECK(tab.correlation(0.0) == Approx(ref.correlation(0.0)).epsilon(5e-4));
  CHECK(tab.correlation(0.02) == Approx(ref.correlation(0.02)).epsilon(5e-3));
  CHECK(tab.correlation(-0.02) == tab.correlation(0.02));
}
