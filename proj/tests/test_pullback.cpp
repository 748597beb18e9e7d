#include <catch_amalgamated.hpp>

#include <csgeom/pullback.hpp>
#include <csgeom/weyl.hpp>

#include <random>

using namespace csgeom;
using Catch::Approx;

namespace {

// two independent Weyl degrees of freedom: chart (q1, p1, q2, p2)
StateFamily weyl_pair(double s1, double s2) {
  StateFamily a = weyl_family(GaussianReference(s1)), b = weyl_family(GaussianReference(s2));
  StateFamily f;
  f.name = "weyl-pair";
  f.dim = 4;
  f.overlap = [a, b](std::span<const Real> x, std::span<const Real> y) {
    return a(x.subspan(0, 2), y.subspan(0, 2)) * b(x.subspan(2, 2), y.subspan(2, 2));
  };
  return f;
}

StateFamily cubic_gauge(double c) {
  return rephase(
      weyl_family(GaussianReference(1.0)), [c](std::span<const Real> z) { return c * z[0] * z[0] * z[0]; },
      [c](std::span<const Real> z) {
        Vec g(2);
        g << 3.0 * c * z[0] * z[0], 0.0;
        return g;
      },
      "+cubic");
}

}  // namespace

TEST_CASE("FD connection on the Weyl family", "[pullback][connection]") {
  auto fam = weyl_family(GaussianReference(1.0));
  std::vector<double> o{0, 0}, z{1, 2};
  auto A0 = connection_fd(fam, o, 1e-3);
  CHECK(std::abs(A0(0)) < 1e-6);
  CHECK(std::abs(A0(1)) < 1e-6);
  for (auto g : {Gauge::position_phase, Gauge::symmetric, Gauge::momentum_phase}) {
    auto fg = weyl_family(GaussianReference(1.0), g);
    auto A = connection_fd(fg, z, 1e-3);
    auto ex = connection_analytic({1, 2}, g);
    CHECK(A(0) == Approx(ex[0]).margin(1e-6));
    CHECK(A(1) == Approx(ex[1]).margin(1e-6));
  }
}

TEST_CASE("FD connection converges at second order", "[pullback][connection]") {
  auto fam = cubic_gauge(0.4);
  std::vector<double> z{0.7, -0.3};
  const double exact = 3 * 0.4 * 0.49;
  double e1 = std::abs(connection_fd(fam, z, 1e-2)(0) - exact);
  double e2 = std::abs(connection_fd(fam, z, 5e-3)(0) - exact);
  CHECK(e1 / e2 == Approx(4.0).epsilon(0.05));
}

TEST_CASE("FD metric on the Weyl family", "[pullback][metric]") {
  std::vector<double> z{0.3, -0.8};
  auto g1 = metric_fd(weyl_family(GaussianReference(1.0)), z, 1e-3);
  CHECK(g1(0, 0) == Approx(0.5).margin(1e-5));
  CHECK(g1(1, 1) == Approx(0.5).margin(1e-5));
  CHECK(std::abs(g1(0, 1)) < 1e-5);
  auto g2 = metric_fd(weyl_family(GaussianReference(2.0)), z, 1e-3);
  CHECK(g2(0, 0) == Approx(0.125).margin(1e-5));
  CHECK(g2(1, 1) == Approx(2.0).margin(1e-5));

  auto gl = metric_fd(weyl_family(GaussianReference(2.0)), z, 1e-3, MetricStencil::log_modulus);
  CHECK((gl - g2).cwiseAbs().maxCoeff() < 1e-5);

  // correlated reference: cross term is −C_pq in this orientation
  auto ref = CorrelatedReference::with_covariance(0.9, 0.3);
  auto gc = metric_fd(weyl_family(ref), z, 1e-3);
  auto ga = metric_analytic(ref);
  CHECK(gc(0, 0) == Approx(ga.gqq).epsilon(1e-5));
  CHECK(gc(1, 1) == Approx(ga.gpp).epsilon(1e-5));
  CHECK(gc(0, 1) == Approx(-0.3).epsilon(1e-5));
}

TEST_CASE("FD curvature is the constant symplectic form", "[pullback][curvature]") {
  std::mt19937_64 eng(11);
  std::uniform_real_distribution<double> u(-3, 3);
  for (double s : {0.5, 1.0, 2.0}) {
    auto fam = weyl_family(GaussianReference(s), Gauge::symmetric);
    for (int k = 0; k < 10; ++k) {
      std::vector<double> z{u(eng), u(eng)};
      auto O = curvature_fd(fam, z, 1e-3);
      CHECK(O(0, 1) == Approx(1.0).margin(1e-4));
      CHECK(O(1, 0) == -O(0, 1));
      auto Ok = curvature_fd_kernel(fam, z, 1e-3);
      CHECK(Ok(0, 1) == Approx(1.0).margin(1e-4));
    }
  }
}

TEST_CASE("curvature is closed in four dimensions", "[pullback][curvature]") {
  auto fam = weyl_pair(1.0, 0.7);
  std::vector<double> z{0.2, -0.4, 1.0, 0.5};
  CHECK(curvature_closedness_fd(fam, z, 1e-2) < 1e-3);
  CHECK(curvature_closedness_fd(weyl_family(GaussianReference(1.0)), std::vector<double>{0, 0}, 1e-3) == 0.0);
  auto O = curvature_fd(fam, z, 1e-3);
  CHECK(O(0, 1) == Approx(1.0).margin(1e-4));
  CHECK(O(2, 3) == Approx(1.0).margin(1e-4));
  CHECK(std::abs(O(0, 2)) < 1e-4);
}

TEST_CASE("gauge covariance of the pulled-back structures", "[pullback][gauge]") {
  auto base = weyl_family(GaussianReference(1.3));
  const double c0 = 0.3, c1 = -0.7;
  auto fam = rephase(base, [=](std::span<const Real> z) { return c0 * z[0] + c1 * z[1]; });
  std::vector<double> z{0.4, 1.1};
  auto A0 = connection_fd(base, z, 1e-3), A1 = connection_fd(fam, z, 1e-3);
  CHECK(A1(0) - A0(0) == Approx(c0).margin(1e-6));
  CHECK(A1(1) - A0(1) == Approx(c1).margin(1e-6));
  CHECK((metric_fd(base, z, 1e-3) - metric_fd(fam, z, 1e-3)).cwiseAbs().maxCoeff() < 1e-6);
  CHECK((curvature_fd(base, z, 1e-3) - curvature_fd(fam, z, 1e-3)).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("metric is positive semidefinite at sampled points", "[pullback][property]") {
  std::mt19937_64 eng(3);
  std::uniform_real_distribution<double> u(-2, 2), c(-1, 1);
  for (int k = 0; k < 20; ++k) {
    auto fam = weyl_family(CorrelatedReference::with_covariance(0.5 + 0.1 * k, c(eng)));
    std::vector<double> z{u(eng), u(eng)};
    Eigen::SelfAdjointEigenSolver<Mat> es(metric_fd(fam, z, 1e-3));
    CHECK(es.eigenvalues().minCoeff() >= -1e-8);
  }
}

TEST_CASE("analytic and FD geometry agree", "[pullback]") {
  auto fam = weyl_family(GaussianReference(0.8), Gauge::symmetric);
  std::vector<double> z{-1.2, 0.6};
  auto an = geometry(fam, z, GeometryMethod::analytic);
  auto fd = geometry(fam, z);
  CHECK(an.method == GeometryMethod::analytic);
  CHECK(fd.method == GeometryMethod::finite_difference);
  for (int i = 0; i < 2; ++i) {
    CHECK(fd.A(i) == Approx(an.A(i)).epsilon(1e-5).margin(1e-8));
    for (int j = 0; j < 2; ++j) {
      CHECK(fd.g(i, j) == Approx(an.g(i, j)).epsilon(1e-5).margin(1e-8));
      CHECK(fd.Omega(i, j) == Approx(an.Omega(i, j)).epsilon(1e-5).margin(1e-8));
    }
  }
}

TEST_CASE("expansion check", "[pullback][expansion]") {
  std::vector<double> z{0.5, -0.2}, d{0.3, 0.4}, scales;
  for (double s = 1.0; s > 0.009; s /= 2) scales.push_back(s);

  // Gaussian overlaps satisfy the midpoint expansion identically
  auto ex = expansion_check(weyl_family(GaussianReference(1.0)), z, d, scales);
  CHECK(ex.exact);
  for (const auto& r : ex.rows) CHECK(r.residual < 1e-14);

  std::vector<double> zero{0.0, 0.0};
  auto e0 = expansion_check(weyl_family(GaussianReference(1.0)), z, zero, scales);
  for (const auto& r : e0.rows) CHECK(r.residual == 0.0);

  // a cubic gauge phase gives a genuine third-order remainder
  auto ec = expansion_check(cubic_gauge(1.0), z, d, scales);
  CHECK_FALSE(ec.exact);
  CHECK(ec.slope >= 2.9);

  std::vector<double> bad{1.0, 2.0};
  CHECK_THROWS_AS(expansion_check(weyl_family(GaussianReference(1.0)), z, d, bad), ValidationError);
}

TEST_CASE("noisy overlaps are diagnosed", "[pullback]") {
  auto base = weyl_family(GaussianReference(1.0));
  StateFamily noisy = base;
  noisy.name = "noisy";
  noisy.overlap = [base](std::span<const Real> a, std::span<const Real> b) {
    const double jitter = 1e-5 * std::sin(1e7 * (b[0] + 3 * b[1]));
    return base(a, b) * (1.0 + jitter);
  };
  std::vector<double> z{0.1, 0.2};
  CHECK_THROWS_AS(connection_fd(noisy, z, 1e-3), NumericalError);
}
