#pragma once

/**
 * @file grid_state.hpp
 * @brief One-dimensional wavefunctions sampled on a uniform grid.
 *
 * Used as the quadrature oracle for the closed-form Gaussian formulas and as
 * the state container for numerically specified states.
 */

#include "numerics.hpp"

#include <cmath>
#include <functional>
#include <vector>

namespace csgeom {

/// Δq, Δp and the symmetrized covariance C_pq = ½⟨xp+px⟩ − ⟨x⟩⟨p⟩.
struct SecondMoments {
  Real dq = 0.0;
  Real dp = 0.0;
  Real cpq = 0.0;
  Real mean_q = 0.0;
  Real mean_p = 0.0;
};

struct GridState {
  Grid1D grid;
  std::vector<Complex> psi;

  GridState(Grid1D g, std::vector<Complex> values) : grid(g), psi(std::move(values)) {
    require(psi.size() == grid.n, "GridState: sample count does not match grid");
  }

  static GridState sample(const Grid1D& g, const std::function<Complex(Real)>& f) {
    std::vector<Complex> v(g.n);
    for (std::size_t i = 0; i < g.n; ++i) v[i] = f(g.node(i));
    return {g, std::move(v)};
  }

  [[nodiscard]] Real norm2() const {
    KahanSum<Real> s;
    for (std::size_t i = 0; i < psi.size(); ++i) s += trap_weight(i) * std::norm(psi[i]);
    return s.value();
  }

  GridState& normalize() {
    const Real n = std::sqrt(norm2());
    if (!(n > 0.0) || !std::isfinite(n)) throw NumericalError("GridState: cannot normalize a null state");
    for (auto& v : psi) v /= n;
    return *this;
  }

  [[nodiscard]] Real trap_weight(std::size_t i) const {
    return (i == 0 || i + 1 == grid.n) ? 0.5 * grid.spacing : grid.spacing;
  }
};

/// ⟨a|b⟩ by the trapezoid rule on a shared grid.
inline Complex inner(const GridState& a, const GridState& b) {
  require(a.grid.n == b.grid.n && a.grid.lo == b.grid.lo && a.grid.hi == b.grid.hi,
          "inner: states live on different grids");
  KahanSum<Complex> s;
  for (std::size_t i = 0; i < a.psi.size(); ++i) s += a.trap_weight(i) * std::conj(a.psi[i]) * b.psi[i];
  return s.value();
}

/// Eighth-order central first derivative; the state is taken to vanish off-grid.
inline std::vector<Complex> grid_derivative(const GridState& s) {
  static constexpr Real c[4] = {4.0 / 5.0, -1.0 / 5.0, 4.0 / 105.0, -1.0 / 280.0};
  const std::size_t n = s.psi.size();
  const auto at = [&](long j) -> Complex {
    return (j < 0 || j >= static_cast<long>(n)) ? Complex{} : s.psi[static_cast<std::size_t>(j)];
  };
  std::vector<Complex> d(n);
  for (std::size_t i = 0; i < n; ++i) {
    const long k = static_cast<long>(i);
    Complex acc{};
    for (long m = 1; m <= 4; ++m) acc += c[m - 1] * (at(k + m) - at(k - m));
    d[i] = acc / s.grid.spacing;
  }
  return d;
}

/// Position/momentum moments of a normalized grid state.
inline SecondMoments grid_moments(const GridState& s) {
  const auto d = grid_derivative(s);
  KahanSum<Real> n0, x1, x2, p1, p2, xp;
  for (std::size_t i = 0; i < s.psi.size(); ++i) {
    const Real w = s.trap_weight(i);
    const Real x = s.grid.node(i);
    const Complex ps = s.psi[i];
    const Complex pp = -I_unit * d[i];  // p̂ψ
    n0 += w * std::norm(ps);
    x1 += w * x * std::norm(ps);
    x2 += w * x * x * std::norm(ps);
    p1 += w * std::real(std::conj(ps) * pp);
    p2 += w * std::norm(d[i]);
    xp += w * x * std::real(std::conj(ps) * pp);  // Re⟨ψ|x̂p̂|ψ⟩
  }
  const Real nrm = n0.value();
  SecondMoments m;
  m.mean_q = x1.value() / nrm;
  m.mean_p = p1.value() / nrm;
  m.dq = std::sqrt(std::max(0.0, x2.value() / nrm - m.mean_q * m.mean_q));
  m.dp = std::sqrt(std::max(0.0, p2.value() / nrm - m.mean_p * m.mean_p));
  m.cpq = xp.value() / nrm - m.mean_q * m.mean_p;
  return m;
}

}  // namespace csgeom
