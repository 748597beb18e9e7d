#include <catch_amalgamated.hpp>

#include <csgeom/weyl.hpp>

#include "oracles.hpp"

#include <random>

using namespace csgeom;
using Catch::Approx;

TEST_CASE("overlap normalization and decay", "[weyl]") {
  GaussianReference r1(1.0);
  WeylState a{r1, {0.7, -1.3}};
  CHECK(std::abs(overlap(a, a) - 1.0) < 1e-15);

  for (double q : {0.5, 1.0, 3.0}) {
    WeylState o{r1, {0, 0}}, b{r1, {q, 0}}, c{r1, {0, q}};
    CHECK(std::abs(overlap(o, b)) == Approx(std::exp(-q * q / 4)).margin(1e-10));
    CHECK(std::abs(overlap(o, c)) == Approx(std::exp(-q * q / 4)).margin(1e-10));
    CHECK(std::abs(overlap(o, b) - oracle::grid_overlap(1.0, 0, 0, q, 0)) < 1e-10);
    CHECK(std::abs(overlap(o, c) - oracle::grid_overlap(1.0, 0, 0, 0, q)) < 1e-10);
  }
}

TEST_CASE("overlap agrees with the x-grid oracle across the parameter box", "[weyl][property]") {
  std::mt19937_64 eng(2024);
  std::uniform_real_distribution<double> box(-5.0, 5.0), logs(std::log(0.25), std::log(4.0));
  for (int trial = 0; trial < 60; ++trial) {
    const double s = std::exp(logs(eng));
    GaussianReference ref(s);
    PhasePoint z1{box(eng), box(eng)}, z2{box(eng), box(eng)};
    const Complex an = overlap(WeylState{ref, z1}, WeylState{ref, z2});
    const Complex gr = oracle::grid_overlap(s, z1.q, z1.p, z2.q, z2.p);
    INFO("sigma=" << s << " z1=(" << z1.q << "," << z1.p << ") z2=(" << z2.q << "," << z2.p << ")");
    CHECK(std::abs(an - gr) < 1e-10);
    // Hermiticity and contraction
    const Complex rev = overlap(WeylState{ref, z2}, WeylState{ref, z1});
    CHECK(std::abs(an - std::conj(rev)) < 1e-15);
    CHECK(std::abs(an) <= 1.0);
  }
}

TEST_CASE("overlap has modulus one only on the diagonal", "[weyl][property]") {
  GaussianReference ref(0.8);
  std::mt19937_64 eng(5);
  std::normal_distribution<double> nd(0.0, 1.0);
  for (int k = 0; k < 50; ++k) {
    PhasePoint z{nd(eng), nd(eng)};
    PhasePoint w{z.q + 1e-3 * nd(eng), z.p + 1e-3 * nd(eng)};
    CHECK(std::abs(overlap(WeylState{ref, z}, WeylState{ref, w})) < 1.0);
    CHECK(std::abs(overlap(WeylState{ref, z}, WeylState{ref, z})) == 1.0);
  }
}

TEST_CASE("mismatched references are rejected", "[weyl]") {
  WeylState a{GaussianReference(1.0), {0, 0}}, b{GaussianReference(2.0), {0, 0}};
  CHECK_THROWS_AS(overlap(a, b), ValidationError);
  CHECK_THROWS_AS(GaussianReference(0.0), ValidationError);
  CHECK_THROWS_AS(GaussianReference(-1.0), ValidationError);
}

TEST_CASE("second moments match the quadrature oracle", "[weyl]") {
  for (double s : {0.25, 0.5, 1.0, 2.0, 4.0}) {
    auto m = second_moments(GaussianReference(s));
    auto o = oracle::gaussian_moments(s);
    CHECK(m.dq == Approx(o.dq).epsilon(1e-10));
    CHECK(m.dp == Approx(o.dp).epsilon(1e-10));
    CHECK(std::abs(m.cpq - o.cpq) < 1e-12);
    CHECK(std::abs(m.dq * m.dp - 0.5) < 1e-12);
  }
  auto m1 = second_moments(GaussianReference(1.0));
  CHECK(m1.dq == Approx(1 / std::sqrt(2.0)));
  CHECK(m1.dp == Approx(1 / std::sqrt(2.0)));
  auto m2 = second_moments(GaussianReference(2.0));
  CHECK(m2.dq == Approx(std::sqrt(2.0)));
  CHECK(m2.dp == Approx(1 / (2 * std::sqrt(2.0))));
}

TEST_CASE("library grid moments reproduce the closed forms", "[weyl][grid]") {
  for (double s : {0.25, 1.0, 4.0}) {
    GaussianReference ref(s);
    auto gs = sample(WeylState{ref, {0.3, -0.4}}, weyl_oracle_grid(s, 0.3));
    CHECK(gs.norm2() == Approx(1.0).epsilon(1e-12));
    auto m = grid_moments(gs);
    CHECK(m.dq * m.dp == Approx(0.5).epsilon(1e-10));
    CHECK(m.mean_q == Approx(0.3).epsilon(1e-10));
    CHECK(m.mean_p == Approx(-0.4).epsilon(1e-10));
  }
}

TEST_CASE("metric closed forms", "[weyl][metric]") {
  auto g1 = metric_analytic(GaussianReference(1.0));
  CHECK(g1.gqq == Approx(0.5));
  CHECK(g1.gpp == Approx(0.5));
  CHECK(g1.gqp == 0.0);
  auto g2 = metric_analytic(GaussianReference(2.0));
  CHECK(g2.gqq == Approx(0.125));
  CHECK(g2.gpp == Approx(2.0));
  for (double s : {0.1, 0.5, 3.0, 10.0}) CHECK(metric_analytic(GaussianReference(s)).det() >= 0.25 - 1e-12);
}

TEST_CASE("correlated reference", "[weyl][correlated]") {
  for (double c : {-0.4, 0.0, 0.3, 1.2}) {
    auto ref = CorrelatedReference::with_covariance(1.3, c);
    auto m = second_moments(ref);
    auto o = oracle::gaussian_moments(ref.sigma, ref.gamma);
    CHECK(m.dq == Approx(o.dq).epsilon(1e-10));
    CHECK(m.dp == Approx(o.dp).epsilon(1e-10));
    CHECK(m.cpq == Approx(c).margin(1e-12));
    CHECK(o.cpq == Approx(c).margin(1e-10));
    // pure Gaussians saturate the Schrödinger–Robertson bound
    CHECK(m.dq * m.dq * m.dp * m.dp - m.cpq * m.cpq == Approx(0.25).epsilon(1e-12));
    CHECK(metric_analytic(ref).det() >= 0.25 - 1e-12);

    PhasePoint z1{0.4, -1.0}, z2{-0.6, 0.8};
    const Complex an = overlap(ref, z1, z2);
    const Complex gr = oracle::grid_overlap(ref.sigma, z1.q, z1.p, z2.q, z2.p, ref.gamma);
    CHECK(std::abs(an - gr) < 1e-10);
    CHECK(std::abs(overlap(ref, z1, z1) - 1.0) < 1e-14);
  }
}

TEST_CASE("connection gauges", "[weyl][gauge]") {
  for (auto g : {Gauge::position_phase, Gauge::symmetric, Gauge::momentum_phase}) {
    auto a = connection_analytic({0, 0}, g);
    CHECK(a[0] == 0.0);
    CHECK(a[1] == 0.0);
  }
  auto a = connection_analytic({1.0, 2.0}, Gauge::position_phase);
  CHECK(a[0] == 0.0);
  CHECK(a[1] == 1.0);
  auto s = connection_analytic({1.0, 2.0}, Gauge::symmetric);
  CHECK(s[0] == -1.0);
  CHECK(s[1] == 0.5);

  // gauge only rephases: moduli agree, closed three-point products agree
  GaussianReference ref(1.0);
  WeylState x{ref, {0, 0}}, y{ref, {1, 0}}, w{ref, {0, 1}};
  for (auto g : {Gauge::symmetric, Gauge::momentum_phase}) {
    CHECK(std::abs(std::abs(overlap(x, y, g)) - std::abs(overlap(x, y))) < 1e-15);
    Complex b0 = overlap(w, y) * overlap(y, x) * overlap(x, w);
    Complex bg = overlap(w, y, g) * overlap(y, x, g) * overlap(x, w, g);
    CHECK(std::abs(b0 - bg) < 1e-14);
  }
}
