#include <catch_amalgamated.hpp>

#include <csgeom/poincare.hpp>
#include <csgeom/uncertainty.hpp>

#include <random>

using namespace csgeom;
using Catch::Approx;

namespace {
UnitTimelike label(Real a, Real b, Real c) { return UnitTimelike{{a, b, c}}; }

// erfc closed form of the α integral
Real alpha_closed(Real s) { return std::pow(pi * s * s, -0.5) * pi / 2 * std::exp(1 / (s * s)) * std::erfc(1 / s); }

SliceSampling quick() {
  SliceSampling o;
  o.points = 1024;
  return o;
}
}  // namespace

TEST_CASE("boost matrices", "[poincare][lorentz]") {
  CHECK((boost_matrix(UnitTimelike{}) - Lorentz::Identity()).cwiseAbs().maxCoeff() == 0.0);
  const auto n1 = lorentz_act(boost_matrix(label(1, 0, 0)), FourVector{1, 0, 0, 0});
  CHECK(n1[0] == Approx(std::sqrt(2.0)).epsilon(1e-15));
  CHECK(n1[1] == Approx(1.0).epsilon(1e-15));
  CHECK(n1[2] == 0.0);

  std::mt19937_64 eng(7);
  std::uniform_real_distribution<Real> u(-2, 2);
  for (int k = 0; k < 20; ++k) {
    const auto I = label(u(eng), u(eng), u(eng));
    const Lorentz L = boost_matrix(I);
    CHECK(lorentz_defect(L) < 1e-12);
    const auto v = lorentz_act(L, {1, 0, 0, 0});
    for (std::size_t i = 0; i < 4; ++i) CHECK(v[i] == Approx(I.four()[i]).epsilon(1e-13));
    const Lorentz Li = boost_matrix(label(-I.spatial[0], -I.spatial[1], -I.spatial[2]));
    CHECK((Li * L - Lorentz::Identity()).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(minkowski(I.four(), I.four()) == Approx(1.0).margin(1e-12));
  }
  CHECK_THROWS_AS(UnitTimelike::from_four({1, 2, 0, 0}), ValidationError);
  CHECK_THROWS_AS(UnitTimelike::from_four({-1, 0, 0, 0}), ValidationError);
}

TEST_CASE("overlaps: normalization, hermiticity, bounds", "[poincare][overlap]") {
  std::mt19937_64 eng(11);
  std::uniform_real_distribution<Real> u(-0.5, 0.5), x(-1.5, 1.5);
  for (int k = 0; k < 12; ++k) {
    const PoincareState a{{x(eng), x(eng), x(eng), x(eng)}, label(u(eng), u(eng), u(eng)), 0.2, 1.0};
    const PoincareState b{{x(eng), x(eng), x(eng), x(eng)}, label(u(eng), u(eng), u(eng)), 0.2, 1.0};
    CHECK(overlap(a, a).real() == Approx(1.0).margin(1e-8));
    CHECK(std::abs(overlap(a, a).imag()) < 1e-12);
    const Complex ab = overlap(a, b), ba = overlap(b, a);
    CHECK(std::abs(ab - std::conj(ba)) < 1e-12);
    CHECK(std::abs(ab) <= 1.0 + 1e-6);
  }
  // mismatched reference parameters are rejected
  CHECK_THROWS_AS(overlap(PoincareState{{}, {}, 0.2, 1.0}, PoincareState{{}, {}, 0.3, 1.0}), ValidationError);
  CHECK_THROWS_AS(overlap(PoincareState{{}, {}, -0.2, 1.0}, PoincareState{{}, {}, -0.2, 1.0}), ValidationError);
}

TEST_CASE("spacelike shifts at rest follow the Gaussian envelope", "[poincare][overlap]") {
  // |Ψ₀|²dμ is Gaussian with variance σ²/2 per axis: |⟨0|d⟩| = exp(−m²σ²d²/4)
  for (Real m : {1.0, 2.5}) {
    const PoincareState a{{}, {}, 0.2, m};
    Real prev = 2.0;
    for (Real d : {0.0, 0.5, 1.0, 2.0, 4.0, 8.0}) {
      const PoincareState b{{0, d, 0, 0}, {}, 0.2, m};
      const Real v = std::abs(overlap(a, b));
      CHECK(v == Approx(std::exp(-m * m * 0.04 * d * d / 4)).margin(1e-10));
      CHECK(v < prev);
      prev = v;
    }
  }
}

TEST_CASE("overlaps are Poincaré invariant", "[poincare][overlap][property]") {
  const PoincareState a{{0.3, 1.0, -0.5, 0.2}, label(0.3, -0.1, 0.2), 0.2, 1.0};
  const PoincareState b{{-0.4, 0.2, 0.6, -1.1}, label(-0.2, 0.25, 0.05), 0.2, 1.0};
  const Complex ref = overlap(a, b);
  for (const auto& J : {label(0.5, 0.2, -0.3), label(-1.0, 0.0, 0.4), label(0.0, 0.0, 2.0)}) {
    const Lorentz L = boost_matrix(J);
    CHECK(std::abs(overlap(a.transformed(L), b.transformed(L)) - ref) < 1e-6);
  }
  // a shared translation only moves the labels
  const FourVector Y{0.7, -0.3, 1.2, 0.4};
  CHECK(std::abs(overlap({a.X + Y, a.I, 0.2, 1.0}, {b.X + Y, b.I, 0.2, 1.0}) - ref) < 1e-12);
  // a higher order does not move the value
  CHECK(std::abs(overlap(a, b, {40, true}) - ref) < 1e-10);
}

TEST_CASE("oscillation budget is enforced", "[poincare][overlap]") {
  const PoincareState a{{}, {}, 0.2, 1.0};
  const PoincareState far{{0, 200, 0, 0}, {}, 0.2, 1.0};
  try {
    (void)overlap(a, far, {16, true});
    FAIL("expected NumericalError");
  } catch (const NumericalError& e) {
    CHECK(std::string(e.what()).find("needs order") != std::string::npos);
  }
}

TEST_CASE("kappa against its moment expansion", "[poincare][kappa]") {
  for (Real s : {0.05, 0.1, 0.2}) {
    const auto k = kappa(s);
    CHECK(std::abs(k.kappa_num - k.series_derived) <= std::pow(s, 6));
    // the printed series misses the O(σ²) coefficient: σ²/4 against 3σ²/4
    CHECK(std::abs(k.kappa_num - k.series_printed) > 0.4 * s * s);
    // independent oracle: 3D Gauss–Hermite mean energy on the rest state
    const auto P = momentum_expectation(PoincareState{{}, {}, s, 1.0});
    CHECK(P.P[0] == Approx(k.kappa_num).epsilon(1e-10));
  }
  // next term of the expansion: −(5/128)·945/16 σ⁸
  const auto k = kappa(0.05);
  CHECK((k.kappa_num - k.series_derived) / std::pow(0.05, 8) == Approx(-4725.0 / 2048.0).epsilon(0.02));
  // κ → 1 and κ ≥ 1 (Jensen)
  CHECK(kappa(1e-3).kappa_num == Approx(1.0).margin(1e-6));
  for (Real s = 0.02; s < 1.0; s += 0.07) CHECK(kappa(s).kappa_num >= 1.0);
  CHECK_THROWS_AS(kappa(1.5), ValidationError);
}

TEST_CASE("alpha integral", "[poincare][alpha]") {
  for (Real s : {0.1, 0.3, 0.5}) {
    const auto a = alpha(s);
    CHECK(a.alpha_num == Approx(alpha_closed(s)).epsilon(1e-10));
    CHECK(a.alpha_num > 0.0);
    CHECK(a.alpha_num < 0.5);  // drop 1/(1+ξ²) ≤ 1
    CHECK(std::abs(alpha(s / 2).alpha_num - 0.5) < std::abs(a.alpha_num - 0.5));
  }
  // the σ → 0 limit is ½, not the printed leading 1
  CHECK(alpha(0.01).alpha_num == Approx(0.5).margin(1e-4));
  CHECK(alpha(0.01).printed_leading == 1.0);
}

TEST_CASE("four-momentum expectation", "[poincare][momentum]") {
  const Real m = 1.7, s = 0.2, k = kappa_value(s);
  const auto rest = momentum_expectation(PoincareState{{0.4, 1, 2, 3}, {}, s, m});
  CHECK(rest.norm2 == Approx(1.0).margin(1e-10));
  CHECK(rest.P[0] == Approx(m * k).epsilon(1e-10));
  for (std::size_t i = 1; i < 4; ++i) CHECK(std::abs(rest.P[i]) < 1e-12);

  for (const auto& I : {label(0.5, 0, 0), label(-0.3, 0.8, 0.1), label(1.5, -1.0, 0.7)}) {
    const auto P = momentum_expectation(PoincareState{{}, I, s, m});
    const auto e = I.four();
    for (std::size_t mu = 0; mu < 4; ++mu) CHECK(P.P[mu] == Approx(m * k * e[mu]).epsilon(1e-6).margin(1e-12));
    CHECK(minkowski(P.P, P.P) == Approx(m * m * k * k).epsilon(1e-6));
  }
}

TEST_CASE("reference normalization", "[poincare][normalization]") {
  for (Real s : {0.1, 0.3}) {
    const auto n = reference_normalization(s, 2.0);
    CHECK(n.norm2 == Approx(1.0).margin(1e-10));
    CHECK(n.printed_norm2 == Approx(std::pow(pi * s * s, -1.5)).epsilon(1e-10));
  }
}

TEST_CASE("pulled-back geometry against closed forms", "[poincare][geometry]") {
  const Real s = 0.1, m = 1.0, k = kappa_value(s);
  const auto rest = geometry_compare(PoincareState{{}, {}, s, m});
  CHECK(rest.count(ComponentVerdict::disagree) == 0);
  CHECK(rest.count(ComponentVerdict::inconclusive) == 0);
  // A = κ m I_μ dX^μ
  CHECK(rest.find("A[X0]")->fd == Approx(m * k).margin(1e-4));
  for (const char* c : {"A[X1]", "A[X2]", "A[X3]", "A[I1]"}) CHECK(std::abs(rest.find(c)->fd) < 1e-4);
  CHECK(rest.find("A[X0]")->printed_within_budget);
  // Ω = κ m dI_μ ∧ dX^μ: at rest dI_j pairs with X^j with a lowered index
  CHECK(rest.find("Omega[I1,X1]")->fd == Approx(-m * k).epsilon(1e-6));
  // isotropy of the boost block
  CHECK(rest.find("g[I1,I1]")->fd / rest.find("g[I2,I2]")->fd == Approx(1.0).margin(1e-3));
  CHECK(rest.find("g[I3,I3]")->fd / rest.find("g[I1,I1]")->fd == Approx(1.0).margin(1e-3));
  // boost block: 1/(2σ²) + 3/4 + O(σ²), outside the printed α/(3σ²) + O(1)
  CHECK(rest.find("g[I1,I1]")->fd == Approx(1 / (2 * s * s) + 0.75).margin(0.05));
  CHECK_FALSE(rest.find("g[I1,I1]")->printed_within_budget);
  // energy variance: 3σ⁴/8 + O(σ⁶)
  const auto* k00 = rest.find("g[X0,X0]");
  CHECK(k00->fd == Approx(m * m * energy_variance(s)).epsilon(1e-3));
  CHECK(std::abs(k00->fd - 3 * std::pow(s, 4) / 8) < 2 * std::pow(s, 6));
  CHECK_FALSE(k00->printed_within_budget);
  CHECK(rest.find("g[X1,X1]")->fd == Approx(m * m * s * s / 2).epsilon(1e-4));
  CHECK_FALSE(rest.find("g[X1,X1]")->printed_within_budget);

  const auto moving = geometry_compare(PoincareState{{0.2, 0.1, 0, 0.3}, label(0.4, -0.2, 0.1), s, 1.5});
  CHECK(moving.count(ComponentVerdict::disagree) == 0);
  CHECK((moving.fd.A - moving.derived.A).cwiseAbs().maxCoeff() < 1e-4);
}

TEST_CASE("low-order rules report their quadrature noise", "[poincare][geometry]") {
  // recentred Gauss–Hermite is near exact on these Gaussian-weighted moments
  const auto coarse = geometry_compare(PoincareState{{}, label(0.3, 0, 0), 0.5, 1.0}, {3, true});
  const auto fine = geometry_compare(PoincareState{{}, label(0.3, 0, 0), 0.5, 1.0}, {24, true});
  CHECK(coarse.count(ComponentVerdict::disagree) == 0);
  const auto* k00 = coarse.find("g[X0,X0]");
  CHECK(k00->noise > 0.0);
  CHECK(k00->noise > fine.find("g[X0,X0]")->noise);
  CHECK(std::abs(k00->fd - k00->derived) <= 10 * k00->noise + 1e-7 + 1e-4 * std::abs(k00->derived));
  // order 2 cannot even carry a static phase
  CHECK_THROWS_AS(geometry_compare(PoincareState{{}, {}, 0.1, 1.0}, {2, true}), NumericalError);
}

TEST_CASE("resolution of unity on a time slice", "[poincare][resolution]") {
  const Real s = 0.2, m = 1.0;
  const auto psi = as_function(PoincareState{{}, {}, s, m});
  auto r = resolution_of_unity_check(s, m, 0.0, psi, psi, quick());
  CHECK(r.rel_error < 0.03);
  CHECK(std::abs(r.lhs - r.rhs) < 4 * r.lhs_stderr + 1e-3 * std::abs(r.rhs));
  CHECK(r.inner.real() == Approx(1.0).margin(1e-10));
  CHECK(r.unresolved * 1000 < r.samples);
  CHECK(std::abs(r.rhs_printed - r.kappa) < 1e-10);

  // the slice time only rephases the amplitudes
  auto later = resolution_of_unity_check(s, m, 0.7, psi, psi, quick());
  CHECK(later.rel_error < 0.03);

  // odd × even in ξ⃗ integrates to zero
  const auto odd = [psi](const FourVector& xi) { return xi[1] * psi(xi) / 0.2; };
  auto par = resolution_of_unity_check(s, m, 0.0, odd, psi, quick());
  CHECK(std::abs(par.inner) < 1e-12);
  CHECK(std::abs(par.lhs) <= 4 * par.lhs_stderr + 1e-9);

  // linearity in ψ, sample by sample
  const auto twice = [psi](const FourVector& xi) { return 2.0 * psi(xi); };
  auto lin = resolution_of_unity_check(s, m, 0.0, psi, twice, quick());
  CHECK(std::abs(lin.lhs - 2.0 * r.lhs) < 1e-10 * std::abs(r.lhs));

  // importance far from the integrand: the effective sample size collapses
  auto off = quick();
  off.x_centre = {400, 0, 0};
  CHECK_THROWS_AS(resolution_of_unity_check(s, m, 0.0, psi, psi, off), NumericalError);
}

TEST_CASE("Newton–Wigner position", "[poincare][resolution]") {
  const Real s = 0.2;
  auto zero = newton_wigner_expectation(PoincareState{{}, {}, s, 1.0}, quick());
  for (std::size_t j = 0; j < 3; ++j) CHECK(std::abs(zero.value[j]) <= 4 * zero.std_error[j] + 1e-3);
  CHECK(zero.weight == Approx(1.0).margin(0.03));

  auto one = newton_wigner_expectation(PoincareState{{0, 1, 0, 0}, {}, s, 1.0}, quick());
  CHECK(one.value[0] == Approx(1.0).epsilon(0.05));
  CHECK(std::abs(one.value[1]) < 0.05);

  // Û(Y)|X,I⟩ = |X+Y,I⟩ moves the expectation by Y⃗
  const std::array<Real, 3> a{0.5, -0.3, 0.2};
  auto moved = newton_wigner_expectation(PoincareState{{0, 1 + a[0], a[1], a[2]}, {}, s, 1.0}, quick());
  // samples move with the label; only the amplitude quadrature error differs, far below the sampling error
  for (std::size_t j = 0; j < 3; ++j) CHECK(std::abs(moved.value[j] - one.value[j] - a[j]) < 0.25 * one.std_error[j]);
}

TEST_CASE("covariant uncertainty scans", "[poincare][uncertainty]") {
  const auto grid = log_grid(0.01, 10.0, 61);
  {
    const auto d = CovariantDisplacement{UnitTimelike{}, {1, 0, 0}, {0, 0, 1, 0}};
    auto r = covariant_uncertainty_scan(grid, 1.0, std::span(&d, 1)).rows.at(0);
    CHECK(r.branch == CovariantBranch::generic);
    CHECK(r.model_min == Approx(std::sqrt(2.0) / 3).margin(1e-6));
    CHECK(r.model_sigma * r.model_sigma == Approx(std::sqrt(2.0)).epsilon(1e-5));
    CHECK(r.model_holds);
    CHECK(r.interior);
    CHECK(r.exact_above_bound);
  }
  {
    const auto d = CovariantDisplacement::clock(UnitTimelike{}, {1, 0, 0}, 1.0);
    auto r = covariant_uncertainty_scan(grid, 1.0, std::span(&d, 1)).rows.at(0);
    CHECK(r.branch == CovariantBranch::degenerate);
    CHECK(r.model_min == Approx(std::cbrt(3.0) / 4).margin(1e-6));
    CHECK(r.model_holds);
    CHECK(r.exact_above_bound);
  }
  // boosted labels, both branches, several masses: the model minimum is the bound
  std::mt19937_64 eng(3);
  std::uniform_real_distribution<Real> u(-1, 1), w(0.3, 2.0);
  std::vector<CovariantDisplacement> fam;
  for (int k = 0; k < 8; ++k) {
    const auto I = label(u(eng), u(eng), u(eng));
    fam.push_back({I, {w(eng) * u(eng), w(eng) * u(eng), w(eng) * u(eng)}, {u(eng), u(eng), u(eng), u(eng)}});
    fam.push_back(CovariantDisplacement::clock(I, {u(eng), u(eng), u(eng)}, w(eng)));
  }
  for (Real m : {0.5, 1.0, 3.0}) {
    auto scan = covariant_uncertainty_scan(log_grid(1e-3, 100.0, 121), m, fam);
    for (std::size_t i = 0; i < scan.rows.size(); ++i) {
      const auto& r = scan.rows[i];
      CHECK(r.branch == (i % 2 == 0 ? CovariantBranch::generic : CovariantBranch::degenerate));
      CHECK(r.model_holds);
      CHECK(r.model_min == Approx(r.bound).epsilon(1e-6));
    }
  }
  // δI from the four-vector agrees with the chart expression
  for (const auto& d : fam) {
    Real q = 0.0;
    const Real g2 = d.I.zeroth() * d.I.zeroth();
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 3; ++j)
        q += ((i == j ? 1.0 : 0.0) - d.I.spatial[i] * d.I.spatial[j] / g2) * d.dI[i] * d.dI[j];
    CHECK(d.boost_length() == Approx(std::sqrt(q)).epsilon(1e-12));
  }
}

TEST_CASE("rest-frame scan reduces to the nonrelativistic floor", "[poincare][uncertainty]") {
  // with exact coefficients the minimum is m δI δx up to O(σ²)
  const auto d = CovariantDisplacement{UnitTimelike{}, {0.01, 0, 0}, {0, 1.0, 0, 0}};
  auto r = covariant_uncertainty_scan(log_grid(1e-3, 1.0, 61), 1.0, std::span(&d, 1)).rows.at(0);
  CHECK(r.dI == Approx(0.01).epsilon(1e-14));
  CHECK(r.dIX == Approx(1.0).epsilon(1e-14));
  const auto nr = chain_optimal_reference({1.0, 0.01, 0});
  CHECK(r.exact_min == Approx(nr.ds2).epsilon(0.02));
}

TEST_CASE("causal ordering in exact arithmetic", "[poincare][causal]") {
  const FourVector o{0, 0, 0, 0};
  CHECK(causal_future(o, {1, 0.5, 0, 0}));
  CHECK(causal_future(o, {1, 1, 0, 0}));  // null
  CHECK(causal_future(o, o));
  CHECK_FALSE(causal_future(o, {1, 2, 0, 0}));
  CHECK_FALSE(causal_future(o, {-1, 0, 0, 0}));
  // ΔX² = 2^-62 − 2^-54 − 2^-80 < 0, invisible in double products
  const FourVector near{1 + std::ldexp(1.0, -31), 1.0, std::ldexp(1.0, -15) + std::ldexp(1.0, -40), 0.0};
  CHECK_FALSE(causal_future(o, near));
  const FourVector inside{1 + std::ldexp(1.0, -31), 1.0, std::ldexp(1.0, -15), 0.0};
  CHECK(causal_future(o, inside));

  std::vector<PoincareState> hist{{{0, 0, 0, 0}, {}, 0.1, 1.0}, {{1, 0.5, 0, 0}, {}, 0.1, 1.0}, {{1.5, 1.5, 0, 0}, {}, 0.1, 1.0}};
  CHECK(first_acausal_step(hist) == std::optional<std::size_t>(1));
  hist[2].X = {2.5, 1.5, 0, 0};
  CHECK_FALSE(first_acausal_step(hist).has_value());
}
