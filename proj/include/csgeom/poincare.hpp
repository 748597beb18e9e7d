#pragma once

/**
 * @file poincare.hpp
 * @brief Coherent states of the massive spinless Poincaré representation:
 *        boosted Gaussian references on the mass hyperboloid, their overlaps,
 *        energy moments, pulled-back geometry, the resolution of unity on a
 *        time slice and the covariant uncertainty scans.
 *
 * Wavefunctions live on V = {ξ : ξ·ξ = 1, ξ⁰ > 0} with measure
 * dμ = m² d³ξ / (2ξ⁰) and metric signature (+,−,−,−). The state with labels
 * (X, I) is
 *   Ψ_{X,I}(ξ) = N (2 I·ξ)^{1/2} exp(−((I·ξ)² − 1)/(2σ²) + i m ξ·X),
 * N = 1/(m (πσ²)^{3/4}), so that |Ψ₀|² dμ = N² m² e^{−|ξ⃗|²/σ²} d³ξ is a
 * normalized Gaussian with variance σ²/2 per axis.
 */

#include "family.hpp"
#include "numerics.hpp"
#include "pullback.hpp"

#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>
#include <boost/math/tools/minima.hpp>
#include <boost/multiprecision/cpp_int.hpp>
#include <boost/random/sobol.hpp>

#include <array>
#include <cmath>
#include <optional>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

namespace csgeom {

using FourVector = std::array<Real, 4>;
using Lorentz = Eigen::Matrix4d;

inline Real minkowski(const FourVector& a, const FourVector& b) {
  return a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3];
}

inline FourVector operator+(const FourVector& a, const FourVector& b) {
  return {a[0] + b[0], a[1] + b[1], a[2] + b[2], a[3] + b[3]};
}
inline FourVector operator-(const FourVector& a, const FourVector& b) {
  return {a[0] - b[0], a[1] - b[1], a[2] - b[2], a[3] - b[3]};
}
inline FourVector operator*(Real s, const FourVector& a) { return {s * a[0], s * a[1], s * a[2], s * a[3]}; }

/// Unit timelike vector with I⁰ = √(1 + |I⃗|²) > 0, stored by its spatial part.
struct UnitTimelike {
  std::array<Real, 3> spatial{0.0, 0.0, 0.0};

  [[nodiscard]] Real zeroth() const {
    return std::sqrt(1.0 + spatial[0] * spatial[0] + spatial[1] * spatial[1] + spatial[2] * spatial[2]);
  }
  [[nodiscard]] FourVector four() const { return {zeroth(), spatial[0], spatial[1], spatial[2]}; }

  /// Normalizes a future-pointing timelike vector.
  static UnitTimelike from_four(const FourVector& v) {
    const Real n2 = minkowski(v, v);
    require(v[0] > 0.0 && n2 > 0.0 && std::isfinite(n2), "UnitTimelike: vector is not future timelike");
    const Real n = std::sqrt(n2);
    return {{v[1] / n, v[2] / n, v[3] / n}};
  }
};

/// Pure boost with Λ_I (1,0,0,0) = I.
inline Lorentz boost_matrix(const UnitTimelike& I) {
  const Real g = I.zeroth();
  Lorentz L;
  L(0, 0) = g;
  for (int j = 0; j < 3; ++j) {
    L(0, j + 1) = I.spatial[static_cast<std::size_t>(j)];
    L(j + 1, 0) = I.spatial[static_cast<std::size_t>(j)];
    for (int k = 0; k < 3; ++k)
      L(j + 1, k + 1) = (j == k ? 1.0 : 0.0) +
                        I.spatial[static_cast<std::size_t>(j)] * I.spatial[static_cast<std::size_t>(k)] / (1.0 + g);
  }
  return L;
}

inline FourVector lorentz_act(const Lorentz& L, const FourVector& x) {
  FourVector y{};
  for (int i = 0; i < 4; ++i) {
    Real s = 0.0;
    for (int j = 0; j < 4; ++j) s += L(i, j) * x[static_cast<std::size_t>(j)];
    y[static_cast<std::size_t>(i)] = s;
  }
  return y;
}

inline Lorentz minkowski_metric() { return Eigen::Vector4d(1.0, -1.0, -1.0, -1.0).asDiagonal(); }

/// max |ΛᵀηΛ − η|
inline Real lorentz_defect(const Lorentz& L) {
  const Lorentz eta = minkowski_metric();
  return (L.transpose() * eta * L - eta).cwiseAbs().maxCoeff();
}

struct PoincareState {
  FourVector X{0.0, 0.0, 0.0, 0.0};
  UnitTimelike I{};
  Real sigma = 0.1;
  Real m = 1.0;

  void validate() const {
    require(sigma > 0.0 && std::isfinite(sigma), "PoincareState: sigma must be positive");
    require(m > 0.0 && std::isfinite(m), "PoincareState: mass must be positive");
    for (Real v : X) require(std::isfinite(v), "PoincareState: non-finite translation");
    for (Real v : I.spatial) require(std::isfinite(v), "PoincareState: non-finite boost label");
  }

  /// The same state seen after the Lorentz transformation L.
  [[nodiscard]] PoincareState transformed(const Lorentz& L) const {
    return {lorentz_act(L, X), UnitTimelike::from_four(lorentz_act(L, I.four())), sigma, m};
  }
};

/// Tensor Gauss–Hermite rule in the boosted rest frame of a centre label.
struct HyperboloidQuadrature {
  std::size_t order = 24;
  /// centre nodes on the normalized midpoint of the two boost labels
  bool recentre = true;
};

inline Real reference_prefactor(Real sigma, Real m) { return 1.0 / (m * std::pow(pi * sigma * sigma, 0.75)); }
/// The prefactor with (πσ²)^{3/2}; normalizes to (πσ²)^{−3/2} instead of 1.
inline Real printed_reference_prefactor(Real sigma, Real m) { return 1.0 / (m * std::pow(pi * sigma * sigma, 1.5)); }

inline Complex wavefunction(const PoincareState& s, const FourVector& xi) {
  const Real ix = minkowski(s.I.four(), xi);
  return reference_prefactor(s.sigma, s.m) * std::sqrt(2.0 * ix) *
         std::exp(Complex(-(ix * ix - 1.0) / (2.0 * s.sigma * s.sigma), s.m * minkowski(xi, s.X)));
}

using HyperboloidFunction = std::function<Complex(const FourVector&)>;

inline HyperboloidFunction as_function(const PoincareState& s) {
  const Real N = reference_prefactor(s.sigma, s.m), a = 1.0 / (2.0 * s.sigma * s.sigma);
  const FourVector I = s.I.four(), X = s.X;
  const Real m = s.m;
  return [=](const FourVector& xi) {
    const Real ix = minkowski(I, xi);
    return N * std::sqrt(2.0 * ix) * std::exp(Complex(-(ix * ix - 1.0) * a, m * minkowski(xi, X)));
  };
}

namespace detail {

struct HyperNodes {
  std::vector<FourVector> xi;
  std::vector<FourVector> eta;
  std::vector<Real> w;   // m² scale³ Π w_k / (2η⁰)
  std::vector<Real> u2;  // |u|², the Gaussian exponent stripped from the weight
};

// ∫dμ(ξ) f(ξ) = Σ w_k e^{u2_k} f(ξ_k) with ξ = Λ_c η, η⃗ = scale·u.
inline HyperNodes hyper_nodes(const UnitTimelike& centre, Real scale, Real m, std::size_t order) {
  require(order >= 2 && order <= 96, "hyperboloid quadrature: order must lie in [2, 96]");
  const auto gh = gauss_hermite(order);
  const Lorentz L = boost_matrix(centre);
  HyperNodes h;
  const std::size_t n = order * order * order;
  h.xi.reserve(n);
  h.eta.reserve(n);
  h.w.reserve(n);
  h.u2.reserve(n);
  const Real pre = m * m * scale * scale * scale;
  for (std::size_t a = 0; a < order; ++a)
    for (std::size_t b = 0; b < order; ++b)
      for (std::size_t c = 0; c < order; ++c) {
        const Real e1 = scale * gh.nodes[a], e2 = scale * gh.nodes[b], e3 = scale * gh.nodes[c];
        const Real om = std::sqrt(1.0 + e1 * e1 + e2 * e2 + e3 * e3);
        const FourVector eta{om, e1, e2, e3};
        h.eta.push_back(eta);
        h.xi.push_back(lorentz_act(L, eta));
        h.w.push_back(pre * gh.weights[a] * gh.weights[b] * gh.weights[c] / (2.0 * om));
        h.u2.push_back(gh.nodes[a] * gh.nodes[a] + gh.nodes[b] * gh.nodes[b] + gh.nodes[c] * gh.nodes[c]);
      }
  return h;
}

// Largest frequency of e^{i m ξ·dX} in the scaled node variable u.
inline Real oscillation(const UnitTimelike& centre, Real scale, Real m, const FourVector& dX) {
  const Lorentz L = boost_matrix(centre);
  Real k = 0.0;
  for (int j = 1; j < 4; ++j) {
    const FourVector col{L(0, j), L(1, j), L(2, j), L(3, j)};
    k = std::max(k, std::abs(minkowski(col, dX)));
  }
  return m * scale * k + m * scale * scale * std::abs(minkowski(centre.four(), dX));
}

// n-point Gauss–Hermite resolves e^{iku} to ~1e-9 up to k ≈ 0.23 n − 0.5.
inline std::size_t required_order(Real k) { return static_cast<std::size_t>(std::ceil((k + 0.5) / 0.23)); }
// the same at ~1e-6, enough for sampled integrands
inline std::size_t required_order_loose(Real k) { return static_cast<std::size_t>(std::ceil(k / 0.26)); }

inline void check_oscillation(Real k, std::size_t order, const char* what) {
  if (required_order(k) > order) {
    std::ostringstream os;
    os << what << ": phase m|dX| oscillates too fast for order " << order << " (frequency " << k
       << "); needs order >= " << required_order(k);
    throw NumericalError(os.str());
  }
}

}  // namespace detail

/// ⟨a|b⟩ = ∫dμ Ψ_a* Ψ_b.
inline Complex overlap(const PoincareState& a, const PoincareState& b, const HyperboloidQuadrature& quad = {}) {
  a.validate();
  b.validate();
  require(a.m == b.m && a.sigma == b.sigma, "overlap: states must share mass and width");
  const Real s = a.sigma, m = a.m;
  const FourVector Ia = a.I.four(), Ib = b.I.four(), dX = b.X - a.X;
  const UnitTimelike c = quad.recentre ? UnitTimelike::from_four(Ia + Ib) : UnitTimelike{};
  detail::check_oscillation(detail::oscillation(c, s, m, dX), quad.order, "overlap");
  const auto h = detail::hyper_nodes(c, s, m, quad.order);
  const Real logN2 = 2.0 * std::log(reference_prefactor(s, m));
  KahanSum<Complex> acc;
  for (std::size_t k = 0; k < h.w.size(); ++k) {
    const FourVector& xi = h.xi[k];
    const Real ia = minkowski(Ia, xi), ib = minkowski(Ib, xi);
    const Real re = logN2 + 0.5 * std::log(4.0 * ia * ib) - (ia * ia + ib * ib - 2.0) / (2.0 * s * s) + h.u2[k];
    const Real ph = m * minkowski(xi, dX);
    acc += h.w[k] * std::exp(re) * Complex(std::cos(ph), std::sin(ph));
  }
  return acc.value();
}

/// ∫dμ φ* ψ with nodes on the rest frame at width σ.
inline Complex hyperboloid_inner(const HyperboloidFunction& phi, const HyperboloidFunction& psi, Real sigma, Real m,
                                 std::size_t order = 24) {
  const auto h = detail::hyper_nodes(UnitTimelike{}, sigma, m, order);
  KahanSum<Complex> acc;
  for (std::size_t k = 0; k < h.w.size(); ++k)
    acc += h.w[k] * std::exp(h.u2[k]) * std::conj(phi(h.xi[k])) * psi(h.xi[k]);
  return acc.value();
}

// -----------------------------------------------------------------------------
// Radial moments of the rest-frame density
// -----------------------------------------------------------------------------

/// ⟨f(|ξ⃗|)⟩ over the Gaussian with variance σ²/2 per axis, tanh-sinh on [0, 8σ].
template <typename F>
Real radial_mean(Real sigma, F&& f, std::size_t nodes = 64) {
  require(sigma > 0.0, "radial_mean: sigma must be positive");
  const auto rule = tanh_sinh(0.0, 8.0 * sigma, nodes);
  KahanSum<Real> acc;
  for (std::size_t k = 0; k < rule.size(); ++k) {
    const Real r = rule.nodes[k];
    acc += rule.weights[k] * r * r * std::exp(-r * r / (sigma * sigma)) * f(r);
  }
  return acc.value() / (std::sqrt(pi) * sigma * sigma * sigma / 4.0);
}

struct KappaEstimate {
  Real sigma = 0.0;
  Real kappa_num = 0.0;       ///< ⟨ξ⁰⟩ on Ψ₀ by radial quadrature
  Real series_printed = 0.0;  ///< 1 + σ²/4 − σ⁴/16
  Real series_derived = 0.0;  ///< moment expansion through σ⁶
};

/// √(1+r²) expanded in r² and averaged with ⟨r^{2k}⟩ = (2k+1)!!/2^k σ^{2k}.
inline Real kappa_series_derived(Real sigma) {
  const Real s2 = sigma * sigma;
  return 1.0 + 0.75 * s2 - 15.0 / 32.0 * s2 * s2 + 105.0 / 128.0 * s2 * s2 * s2;
}
inline Real kappa_series_printed(Real sigma) {
  const Real s2 = sigma * sigma;
  return 1.0 + s2 / 4.0 - s2 * s2 / 16.0;
}

inline Real kappa_value(Real sigma) {
  return radial_mean(sigma, [](Real r) { return std::sqrt(1.0 + r * r); });
}

inline KappaEstimate kappa(Real sigma) {
  require(sigma > 0.0 && sigma < 1.0, "kappa: sigma must lie in (0, 1)");
  return {sigma, kappa_value(sigma), kappa_series_printed(sigma), kappa_series_derived(sigma)};
}

/// Var(ξ⁰) on Ψ₀, i.e. the energy spread in units of m².
inline Real energy_variance(Real sigma) {
  const Real k = kappa_value(sigma);
  return radial_mean(sigma, [k](Real r) {
    const Real d = std::sqrt(1.0 + r * r) - k;
    return d * d;
  });
}

/// Coefficient G of the boost-label block, g_II = G·(induced metric on V).
inline Real boost_metric_coefficient(Real sigma) {
  const Real s2 = sigma * sigma;
  return radial_mean(sigma, [s2](Real r) {
           const Real om = std::sqrt(1.0 + r * r), f = om / s2 - 0.5 / om;
           return r * r * f * f;
         }) /
         3.0;
}

struct AlphaEstimate {
  Real sigma = 0.0;
  Real alpha_num = 0.0;
  Real printed_leading = 1.0;
  Real limit = 0.5;  ///< σ → 0 value of the same integral
};

/// α = (πσ²)^{−1/2} ∫₀^∞ e^{−ξ²/σ²}/(1+ξ²) dξ.
inline AlphaEstimate alpha(Real sigma) {
  require(sigma > 0.0 && sigma < 1.0, "alpha: sigma must lie in (0, 1)");
  const auto rule = tanh_sinh(0.0, 8.0 * sigma, 64);
  KahanSum<Real> acc;
  for (std::size_t k = 0; k < rule.size(); ++k) {
    const Real x = rule.nodes[k];
    acc += rule.weights[k] * std::exp(-x * x / (sigma * sigma)) / (1.0 + x * x);
  }
  return {sigma, acc.value() / std::sqrt(pi * sigma * sigma), 1.0, 0.5};
}

// -----------------------------------------------------------------------------
// Moments on a state
// -----------------------------------------------------------------------------

struct MomentumExpectation {
  FourVector P{};
  Real norm2 = 0.0;  ///< ∫dμ |Ψ|² before renormalization
};

/// ⟨P̂^μ⟩ = ∫dμ m ξ^μ |Ψ|², renormalized by the quadrature norm.
inline MomentumExpectation momentum_expectation(const PoincareState& s, const HyperboloidQuadrature& quad = {}) {
  s.validate();
  const UnitTimelike c = quad.recentre ? s.I : UnitTimelike{};
  const auto h = detail::hyper_nodes(c, s.sigma, s.m, quad.order);
  const FourVector I = s.I.four();
  const Real logN2 = 2.0 * std::log(reference_prefactor(s.sigma, s.m));
  KahanSum<Real> n, p[4];
  for (std::size_t k = 0; k < h.w.size(); ++k) {
    const Real ix = minkowski(I, h.xi[k]);
    const Real rho = h.w[k] * std::exp(logN2 + std::log(2.0 * ix) - (ix * ix - 1.0) / (s.sigma * s.sigma) + h.u2[k]);
    n += rho;
    for (std::size_t mu = 0; mu < 4; ++mu) p[mu] += rho * s.m * h.xi[k][mu];
  }
  MomentumExpectation out;
  out.norm2 = n.value();
  for (std::size_t mu = 0; mu < 4; ++mu) out.P[mu] = p[mu].value() / out.norm2;
  return out;
}

struct ReferenceNormalization {
  Real sigma = 0.0, m = 0.0;
  Real prefactor = 0.0, printed_prefactor = 0.0;
  Real norm2 = 0.0;          ///< quadrature norm with the library prefactor
  Real printed_norm2 = 0.0;  ///< quadrature norm with the printed one
};

inline ReferenceNormalization reference_normalization(Real sigma, Real m, std::size_t order = 24) {
  PoincareState s{{0, 0, 0, 0}, {}, sigma, m};
  s.validate();
  const Real n2 = momentum_expectation(s, {order, true}).norm2;
  const Real ratio = printed_reference_prefactor(sigma, m) / reference_prefactor(sigma, m);
  return {sigma, m, reference_prefactor(sigma, m), printed_reference_prefactor(sigma, m), n2, n2 * ratio * ratio};
}

// -----------------------------------------------------------------------------
// Geometry
// -----------------------------------------------------------------------------

/// Chart (I¹, I², I³, X⁰, X¹, X², X³).
inline ChartPoint poincare_chart(const PoincareState& s) {
  return {s.I.spatial[0], s.I.spatial[1], s.I.spatial[2], s.X[0], s.X[1], s.X[2], s.X[3]};
}

inline PoincareState from_chart(std::span<const Real> z, Real sigma, Real m) {
  require(z.size() == 7, "poincare chart: expected 7 coordinates");
  return {{z[3], z[4], z[5], z[6]}, {{z[0], z[1], z[2]}}, sigma, m};
}

namespace detail {

inline FourVector lower(const FourVector& v) { return {v[0], -v[1], -v[2], -v[3]}; }

// ∂I^μ/∂I^i for the chart coordinate i.
inline FourVector dI(const UnitTimelike& I, std::size_t i) {
  FourVector d{I.spatial[i] / I.zeroth(), 0.0, 0.0, 0.0};
  d[i + 1] = 1.0;
  return d;
}

// Induced metric on V in the chart: δ_ij − I^iI^j/(1+|I⃗|²).
inline Mat hyperboloid_metric(const UnitTimelike& I) {
  Mat h(3, 3);
  const Real g2 = I.zeroth() * I.zeroth();
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j)
      h(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          (i == j ? 1.0 : 0.0) - I.spatial[i] * I.spatial[j] / g2;
  return h;
}

// m²[a I_μI_ν − b η_μν] with lower indices.
inline Mat momentum_correlation(const UnitTimelike& I, Real m, Real a, Real b) {
  const FourVector Il = lower(I.four());
  const Real eta[4] = {1.0, -1.0, -1.0, -1.0};
  Mat K(4, 4);
  for (int mu = 0; mu < 4; ++mu)
    for (int nu = 0; nu < 4; ++nu)
      K(mu, nu) = m * m * (a * Il[static_cast<std::size_t>(mu)] * Il[static_cast<std::size_t>(nu)] - (mu == nu ? b * eta[mu] : 0.0));
  return K;
}

inline Mat block_metric(const UnitTimelike& I, Real G, const Mat& K) {
  Mat g = Mat::Zero(7, 7);
  g.topLeftCorner(3, 3) = G * hyperboloid_metric(I);
  g.bottomRightCorner(4, 4) = K;
  return g;
}

}  // namespace detail

/// Exact momentum correlation K_μν = m²[(1 + 2σ² − κ²) I_μI_ν − (σ²/2) η_μν].
inline Mat momentum_correlation(const UnitTimelike& I, Real sigma, Real m) {
  const Real k = kappa_value(sigma), s2 = sigma * sigma;
  return detail::momentum_correlation(I, m, 1.0 + 2.0 * s2 - k * k, 0.5 * s2);
}

/// The printed K_μν = m²[(1 + ⅔σ² − κ²) I_μI_ν − (σ²/6) η_μν].
inline Mat momentum_correlation_printed(const UnitTimelike& I, Real sigma, Real m, Real kappa) {
  const Real s2 = sigma * sigma;
  return detail::momentum_correlation(I, m, 1.0 + 2.0 * s2 / 3.0 - kappa * kappa, s2 / 6.0);
}

/// Closed forms derived from the exact moments: A = mκ I_μ dX^μ, g = G h ⊕ K,
/// Ω = mκ dI_μ ∧ dX^μ.
inline AnalyticGeometry poincare_geometry(Real sigma, Real m) {
  const Real k = kappa_value(sigma), G = boost_metric_coefficient(sigma);
  AnalyticGeometry a;
  a.connection = [m, k](std::span<const Real> z) {
    const auto I = UnitTimelike{{z[0], z[1], z[2]}};
    const FourVector Il = detail::lower(I.four());
    Vec A = Vec::Zero(7);
    for (int mu = 0; mu < 4; ++mu) A(3 + mu) = m * k * Il[static_cast<std::size_t>(mu)];
    return A;
  };
  a.metric = [sigma, m, G](std::span<const Real> z) {
    const auto I = UnitTimelike{{z[0], z[1], z[2]}};
    return detail::block_metric(I, G, momentum_correlation(I, sigma, m));
  };
  a.curvature = [m, k](std::span<const Real> z) {
    const auto I = UnitTimelike{{z[0], z[1], z[2]}};
    Mat O = Mat::Zero(7, 7);
    for (std::size_t i = 0; i < 3; ++i) {
      const FourVector d = detail::lower(detail::dI(I, i));
      for (std::size_t mu = 0; mu < 4; ++mu) {
        const auto r = static_cast<Eigen::Index>(i), c = static_cast<Eigen::Index>(3 + mu);
        O(r, c) = m * k * d[mu];
        O(c, r) = -O(r, c);
      }
    }
    return O;
  };
  return a;
}

/// Printed metric: (α/3σ²)·h ⊕ printed K, with κ and α supplied.
inline Mat poincare_metric_printed(std::span<const Real> z, Real sigma, Real m, Real kappa, Real alpha_value) {
  const auto I = UnitTimelike{{z[0], z[1], z[2]}};
  return detail::block_metric(I, alpha_value / (3.0 * sigma * sigma), momentum_correlation_printed(I, sigma, m, kappa));
}

inline StateFamily poincare_family(Real sigma, Real m, HyperboloidQuadrature quad = {}) {
  require(sigma > 0.0 && m > 0.0, "poincare_family: sigma and m must be positive");
  StateFamily f;
  f.name = "poincare";
  f.dim = 7;
  f.overlap = [sigma, m, quad](std::span<const Real> a, std::span<const Real> b) {
    return overlap(from_chart(a, sigma, m), from_chart(b, sigma, m), quad);
  };
  f.analytic = poincare_geometry(sigma, m);
  f.fd_step = 1e-3 * std::min(sigma, 1.0);
  return f;
}

enum class ComponentVerdict { agree, disagree, inconclusive };

inline std::string to_string(ComponentVerdict v) {
  switch (v) {
    case ComponentVerdict::agree: return "agree";
    case ComponentVerdict::disagree: return "disagree";
    case ComponentVerdict::inconclusive: return "inconclusive";
  }
  return "?";
}

struct GeometryComponent {
  std::string name;   ///< e.g. "g[I1,I1]", "A[X0]", "Omega[I1,X1]"
  std::string block;  ///< connection | metric-II | metric-XX | metric-IX | curvature
  Real fd = 0.0, derived = 0.0, printed = 0.0;
  Real noise = 0.0;   ///< change of the FD value under a higher quadrature order
  ComponentVerdict verdict = ComponentVerdict::inconclusive;
  bool printed_within_budget = false;
};

struct GeometryComparison {
  PoincareState state;
  Real h = 0.0;
  GeometryReport fd;
  GeometryReport derived;
  Mat printed_metric;
  std::vector<GeometryComponent> rows;

  [[nodiscard]] const GeometryComponent* find(const std::string& name) const {
    for (const auto& r : rows)
      if (r.name == name) return &r;
    return nullptr;
  }
  [[nodiscard]] std::size_t count(ComponentVerdict v) const {
    std::size_t n = 0;
    for (const auto& r : rows) n += r.verdict == v;
    return n;
  }
};

/**
 * FD geometry of the Poincaré family against the derived closed forms and the
 * printed ones. A component agrees when |fd − derived| ≤ rel_tol·|derived| +
 * abs_tol + 10·noise; it is inconclusive when both values sit below the noise.
 * Printed forms are judged against σ-power budgets: O(σ⁰) for the boost block,
 * m²σ⁴ for the translation block and rel_tol for A and Ω.
 */
inline GeometryComparison geometry_compare(const PoincareState& s, const HyperboloidQuadrature& quad = {}, Real h = 0.0,
                                           Real rel_tol = 1e-4, Real abs_tol = 1e-7) {
  s.validate();
  GeometryComparison out;
  out.state = s;
  const auto fam = poincare_family(s.sigma, s.m, quad);
  const auto fam_hi = poincare_family(s.sigma, s.m, {quad.order + 8, quad.recentre});
  out.h = h > 0.0 ? h : fam.fd_step;
  const auto z = poincare_chart(s);
  out.fd = geometry(fam, z, GeometryMethod::finite_difference, out.h);
  const auto hi = geometry(fam_hi, z, GeometryMethod::finite_difference, out.h);
  out.derived = geometry(fam, z, GeometryMethod::analytic);
  const Real k = kappa_value(s.sigma);
  out.printed_metric = poincare_metric_printed(z, s.sigma, s.m, k, 1.0);

  static const char* names[7] = {"I1", "I2", "I3", "X0", "X1", "X2", "X3"};
  const Real s4 = std::pow(s.sigma, 4);
  auto push = [&](std::string name, std::string block, Real fd, Real fd_hi, Real der, Real printed, Real budget) {
    GeometryComponent c{std::move(name), std::move(block), fd, der, printed, std::abs(fd - fd_hi)};
    if (der != 0.0 && std::abs(der) < c.noise)
      c.verdict = ComponentVerdict::inconclusive;
    else
      c.verdict = std::abs(fd - der) <= rel_tol * std::abs(der) + abs_tol + 10.0 * c.noise ? ComponentVerdict::agree
                                                                                            : ComponentVerdict::disagree;
    c.printed_within_budget = std::abs(fd - printed) <= budget;
    out.rows.push_back(std::move(c));
  };
  for (Eigen::Index i = 0; i < 7; ++i) {
    const Real d = out.derived.A(i);
    push(std::string("A[") + names[i] + "]", "connection", out.fd.A(i), hi.A(i), d, d,
         rel_tol * std::max(1.0, std::abs(d)));
  }
  for (Eigen::Index i = 0; i < 7; ++i)
    for (Eigen::Index j = i; j < 7; ++j) {
      const std::string block = (i < 3 && j < 3) ? "metric-II" : (i >= 3 && j >= 3) ? "metric-XX" : "metric-IX";
      const Real budget = block == "metric-II" ? 1.0 : block == "metric-XX" ? 2.0 * s.m * s.m * s4 : abs_tol;
      push(std::string("g[") + names[i] + "," + names[j] + "]", block, out.fd.g(i, j), hi.g(i, j),
           out.derived.g(i, j), out.printed_metric(i, j), budget);
    }
  for (Eigen::Index i = 0; i < 7; ++i)
    for (Eigen::Index j = i + 1; j < 7; ++j) {
      const Real d = out.derived.Omega(i, j);
      push(std::string("Omega[") + names[i] + "," + names[j] + "]", "curvature", out.fd.Omega(i, j), hi.Omega(i, j),
           d, d, rel_tol * std::max(1.0, std::abs(d)));
    }
  return out;
}

// -----------------------------------------------------------------------------
// Resolution of unity on a time slice
// -----------------------------------------------------------------------------

struct SliceSampling {
  std::size_t points = 2048;   ///< Sobol points per replicate
  std::size_t replicates = 8;  ///< random shifts; the spread gives the standard error
  std::size_t order = 12;      ///< base Gauss–Hermite order of each coherent amplitude
  RngSeed seed{2024};
  unsigned threads = 1;
  Real min_ess = 50.0;
  /// importance centre; x is Gaussian with width x_width/(mσ), I⃗ Student-t(3) with scale σ
  std::array<Real, 3> x_centre{0.0, 0.0, 0.0};
  UnitTimelike I_centre{};
  Real x_width = 1.25;
};

namespace detail {

struct SliceSample {
  std::array<Real, 3> x;
  UnitTimelike I;
  Real inv_density;
};

// Randomly shifted Sobol points mapped through the importance quantiles.
inline std::vector<SliceSample> slice_samples(const SliceSampling& opt, Real sigma, Real m, std::size_t replicate,
                                              const std::vector<std::array<Real, 6>>& sobol) {
  auto eng = make_engine(opt.seed, 0x5110e + replicate);
  std::uniform_real_distribution<Real> u01(0.0, 1.0);
  std::array<Real, 6> shift{};
  for (auto& v : shift) v = u01(eng);
  const boost::math::normal_distribution<Real> nd;
  const boost::math::students_t_distribution<Real> td(3.0);
  const Real sx = opt.x_width / (m * sigma), sI = sigma;
  std::vector<SliceSample> out(sobol.size());
  for (std::size_t k = 0; k < sobol.size(); ++k) {
    Real dens = 1.0;
    for (std::size_t j = 0; j < 6; ++j) {
      Real v = sobol[k][j] + shift[j];
      v -= std::floor(v);
      v = std::clamp(v, 1e-13, 1.0 - 1e-13);
      if (j < 3) {
        const Real g = boost::math::quantile(nd, v);
        out[k].x[j] = opt.x_centre[j] + sx * g;
        dens *= boost::math::pdf(nd, g) / sx;
      } else {
        const Real t = boost::math::quantile(td, v);
        out[k].I.spatial[j - 3] = opt.I_centre.spatial[j - 3] + sI * t;
        dens *= boost::math::pdf(td, t) / sI;
      }
    }
    out[k].inv_density = 1.0 / dens;
  }
  return out;
}

inline std::vector<std::array<Real, 6>> sobol_points(std::size_t n) {
  boost::random::sobol gen(6);
  std::vector<std::array<Real, 6>> pts(n);
  for (auto& p : pts)
    for (auto& v : p) v = static_cast<Real>(gen() >> 11) * 0x1.0p-53;
  return pts;
}

// ⟨(t,x),I|f⟩ for each f, sharing the coherent-state factor. The order grows
// with the phase frequency of the sample; node sets are built once per order.
class SliceAmplitudes {
 public:
  SliceAmplitudes(Real sigma, Real m, std::size_t order) : sigma_(sigma), m_(m), base_(order) {
    for (std::size_t o = base_; o < kMaxOrder + 4; o += 4) sets_.push_back(build(std::min(o, kMaxOrder)));
  }

  // false when the phase outruns the largest node set; out is then left untouched
  bool operator()(Real t, const std::array<Real, 3>& x, const UnitTimelike& I, const std::vector<HyperboloidFunction>& fs,
                  std::vector<Complex>& out) const {
    const FourVector X{t, x[0], x[1], x[2]};
    const std::size_t need = required_order_loose(oscillation(I, std::sqrt(2.0) * sigma_, m_, X));
    if (need > kMaxOrder) return false;
    const auto& set = sets_[std::min((std::max(need, base_) - base_ + 3) / 4, sets_.size() - 1)];
    const Lorentz L = boost_matrix(I);
    std::vector<KahanSum<Complex>> acc(fs.size());
    for (std::size_t k = 0; k < set.c.size(); ++k) {
      const FourVector xi = lorentz_act(L, set.nodes.eta[k]);
      const Real ph = -m_ * minkowski(xi, X);
      const Complex base = set.c[k] * Complex(std::cos(ph), std::sin(ph));
      for (std::size_t f = 0; f < fs.size(); ++f) acc[f] += base * fs[f](xi);
    }
    out.resize(fs.size());
    for (std::size_t f = 0; f < fs.size(); ++f) out[f] = acc[f].value();
    return true;
  }

 private:
  static constexpr std::size_t kMaxOrder = 48;

  struct NodeSet {
    HyperNodes nodes;
    std::vector<Real> c;
  };

  // weight × Ψ₀(η) × e^{u²}; at scale √2σ the Gaussian of Ψ₀ is exactly e^{−u²}
  [[nodiscard]] NodeSet build(std::size_t order) const {
    NodeSet s{hyper_nodes(UnitTimelike{}, std::sqrt(2.0) * sigma_, m_, order), {}};
    const Real N = reference_prefactor(sigma_, m_);
    s.c.resize(s.nodes.w.size());
    for (std::size_t k = 0; k < s.c.size(); ++k) s.c[k] = s.nodes.w[k] * N * std::sqrt(2.0 * s.nodes.eta[k][0]);
    s.nodes.xi.clear();
    return s;
  }

  Real sigma_, m_;
  std::size_t base_;
  std::vector<NodeSet> sets_;
};

struct ReplicateSums {
  std::vector<Complex> sums;
  Real abs_sum = 0.0, abs_sq = 0.0;
  std::size_t unresolved = 0;
};

// Σ over one replicate of g(sample, amplitudes)·m³/q; g returns the accumulands,
// the first of which drives the effective-sample-size diagnostic.
template <typename G>
std::vector<ReplicateSums> slice_integrate(Real sigma, Real m, Real t, const SliceSampling& opt,
                                           const std::vector<HyperboloidFunction>& fs, std::size_t n_out, G&& g) {
  require(opt.points >= 16 && opt.replicates >= 2, "slice integral: need >= 16 points and >= 2 replicates");
  const auto sobol = sobol_points(opt.points);
  const SliceAmplitudes amp(sigma, m, opt.order);
  const Real m3 = m * m * m;
  auto reps = run_batches(opt.replicates, opt.threads, [&](std::size_t r) {
    const auto samples = slice_samples(opt, sigma, m, r, sobol);
    ReplicateSums rs;
    std::vector<KahanSum<Complex>> acc(n_out);
    std::vector<Complex> a, vals(n_out);
    for (const auto& smp : samples) {
      // beyond the largest node set the amplitude is roundoff; such samples count as zero
      if (!amp(t, smp.x, smp.I, fs, a)) {
        ++rs.unresolved;
        continue;
      }
      g(smp, a, vals);
      for (std::size_t j = 0; j < n_out; ++j) acc[j] += m3 * smp.inv_density * vals[j];
      const Real w = std::abs(m3 * smp.inv_density * vals[0]);
      rs.abs_sum += w;
      rs.abs_sq += w * w;
    }
    rs.sums.resize(n_out);
    for (std::size_t j = 0; j < n_out; ++j) rs.sums[j] = acc[j].value() / static_cast<Real>(opt.points);
    return rs;
  });
  Real s1 = 0.0, s2 = 0.0;
  std::size_t lost = 0;
  for (const auto& r : reps) {
    s1 += r.abs_sum;
    s2 += r.abs_sq;
    lost += r.unresolved;
  }
  const Real lost_frac = static_cast<Real>(lost) / static_cast<Real>(opt.points * opt.replicates);
  if (lost_frac > 1e-2) {
    std::ostringstream os;
    os << "slice integral: " << 100 * lost_frac << "% of samples oscillate beyond the amplitude quadrature"
       << "; move the importance centre towards the states";
    throw NumericalError(os.str());
  }
  const Real ess = s2 > 0.0 ? s1 * s1 / s2 : 0.0;
  if (ess < opt.min_ess) {
    std::ostringstream os;
    os << "slice integral: effective sample size " << ess << " below " << opt.min_ess
       << "; widen the importance density or move its centre";
    throw NumericalError(os.str());
  }
  reps.push_back({{Complex(ess, 0.0)}, 0.0, 0.0, lost});  // trailing record carries the ESS and lost samples
  return reps;
}

inline std::pair<Complex, Real> mean_and_error(const std::vector<Complex>& v) {
  const Real n = static_cast<Real>(v.size());
  Complex mean = 0.0;
  for (const auto& x : v) mean += x;
  mean /= n;
  Real var = 0.0;
  for (const auto& x : v) var += std::norm(x - mean);
  return {mean, std::sqrt(var / (n - 1.0) / n)};
}

}  // namespace detail

/// Constant c in m³∫d³I d³x |x,I⟩⟨x,I| = c·𝟙: (2π)³κ with the library's Fourier convention.
inline Real resolution_constant(Real sigma) { return std::pow(2.0 * pi, 3) * kappa_value(sigma); }

struct ResolutionCheck {
  Complex lhs;               ///< m³∫d³I d³x ⟨φ|x,I⟩⟨x,I|ψ⟩
  Real lhs_stderr = 0.0;
  Complex inner;             ///< ⟨φ|ψ⟩
  Real kappa = 0.0;
  Complex rhs;               ///< (2π)³κ⟨φ|ψ⟩
  Complex rhs_printed;       ///< κ⟨φ|ψ⟩
  Real rel_error = 0.0;      ///< |lhs − rhs| / ((2π)³κ‖φ‖‖ψ‖)
  Real ess = 0.0;
  std::size_t samples = 0;
  std::size_t unresolved = 0;  ///< samples dropped as beyond the amplitude quadrature
};

/**
 * Evaluates m³∫d³I d³x ⟨φ|x,I⟩⟨x,I|ψ⟩ over the slice X⁰ = t by randomized
 * quasi-Monte Carlo, each amplitude by a boosted Gauss–Hermite rule. φ and ψ
 * are wavefunctions on V concentrated near the rest frame at width ~σ.
 */
inline ResolutionCheck resolution_of_unity_check(Real sigma, Real m, Real t, const HyperboloidFunction& phi,
                                                 const HyperboloidFunction& psi, const SliceSampling& opt = {}) {
  require(sigma > 0.0 && m > 0.0, "resolution check: sigma and m must be positive");
  const std::vector<HyperboloidFunction> fs{phi, psi};
  auto reps = detail::slice_integrate(sigma, m, t, opt, fs, 1,
                                      [](const detail::SliceSample&, const std::vector<Complex>& a,
                                         std::vector<Complex>& out) { out[0] = std::conj(a[0]) * a[1]; });
  ResolutionCheck r;
  r.ess = reps.back().sums[0].real();
  r.unresolved = reps.back().unresolved;
  reps.pop_back();
  std::vector<Complex> means;
  for (const auto& rep : reps) means.push_back(rep.sums[0]);
  std::tie(r.lhs, r.lhs_stderr) = detail::mean_and_error(means);
  r.samples = opt.points * opt.replicates;
  r.inner = hyperboloid_inner(phi, psi, sigma, m);
  r.kappa = kappa_value(sigma);
  r.rhs = resolution_constant(sigma) * r.inner;
  r.rhs_printed = r.kappa * r.inner;
  const Real nphi = std::sqrt(hyperboloid_inner(phi, phi, sigma, m).real());
  const Real npsi = std::sqrt(hyperboloid_inner(psi, psi, sigma, m).real());
  r.rel_error = std::abs(r.lhs - r.rhs) / (resolution_constant(sigma) * nphi * npsi);
  return r;
}

struct NewtonWignerExpectation {
  std::array<Real, 3> value{};
  std::array<Real, 3> std_error{};
  Real weight = 0.0;  ///< m³∫|⟨x,I|s⟩|² / ((2π)³κ), which is ⟨s|s⟩ = 1 up to sampling error
  Real ess = 0.0;
  std::size_t unresolved = 0;
};

/**
 * ⟨x̂_Σ⟩ on the slice X⁰ = s.X⁰: the x-weighted resolution integral divided by
 * the unweighted one from the same samples. Importance is centred on the labels.
 */
inline NewtonWignerExpectation newton_wigner_expectation(const PoincareState& s, SliceSampling opt = {}) {
  s.validate();
  opt.x_centre = {s.X[1], s.X[2], s.X[3]};
  opt.I_centre = s.I;
  const std::vector<HyperboloidFunction> fs{as_function(s)};
  auto reps = detail::slice_integrate(s.sigma, s.m, s.X[0], opt, fs, 4,
                                      [](const detail::SliceSample& smp, const std::vector<Complex>& a,
                                         std::vector<Complex>& out) {
                                        const Real p = std::norm(a[0]);
                                        out[0] = p;
                                        for (std::size_t j = 0; j < 3; ++j) out[j + 1] = p * smp.x[j];
                                      });
  NewtonWignerExpectation r;
  r.ess = reps.back().sums[0].real();
  r.unresolved = reps.back().unresolved;
  reps.pop_back();
  Complex tot[4] = {};
  for (const auto& rep : reps)
    for (std::size_t j = 0; j < 4; ++j) tot[j] += rep.sums[j];
  for (std::size_t j = 0; j < 3; ++j) {
    r.value[j] = tot[j + 1].real() / tot[0].real();
    std::vector<Complex> ratios;
    for (const auto& rep : reps) ratios.push_back(rep.sums[j + 1].real() / rep.sums[0].real());
    r.std_error[j] = detail::mean_and_error(ratios).second;
  }
  r.weight = tot[0].real() / static_cast<Real>(reps.size()) / resolution_constant(s.sigma);
  return r;
}

// -----------------------------------------------------------------------------
// Covariant uncertainty scans
// -----------------------------------------------------------------------------

/// Displacement (δI, δX) at the label I; δI⁰ follows from I·δI = 0.
struct CovariantDisplacement {
  UnitTimelike I{};
  std::array<Real, 3> dI{0.0, 0.0, 0.0};
  FourVector dX{0.0, 0.0, 0.0, 0.0};

  /// clocks along the classical trajectory: δX = δt·I
  static CovariantDisplacement clock(const UnitTimelike& I, std::array<Real, 3> dI, Real dt) {
    return {I, dI, dt * I.four()};
  }

  [[nodiscard]] FourVector dI_four() const {
    const Real d0 = (I.spatial[0] * dI[0] + I.spatial[1] * dI[1] + I.spatial[2] * dI[2]) / I.zeroth();
    return {d0, dI[0], dI[1], dI[2]};
  }
  /// √(−δI·δI)
  [[nodiscard]] Real boost_length() const {
    const FourVector d = dI_four();
    return std::sqrt(std::max(0.0, -minkowski(d, d)));
  }
  /// √(−δX_⊥·δX_⊥) with δX_⊥ = δX − (I·δX) I; avoids the cancellation in (I·δX)² − δX·δX
  [[nodiscard]] Real transverse_length() const {
    const FourVector perp = dX - minkowski(I.four(), dX) * I.four();
    return std::sqrt(std::max(0.0, -minkowski(perp, perp)));
  }
  [[nodiscard]] Real proper_time() const { return minkowski(I.four(), dX); }
};

enum class CovariantBranch { generic, degenerate };

inline std::string to_string(CovariantBranch b) { return b == CovariantBranch::generic ? "generic" : "degenerate"; }

struct CovariantScanRow {
  CovariantBranch branch = CovariantBranch::generic;
  Real dI = 0.0, dIX = 0.0, dt = 0.0;
  /// leading-order model: δI²/(3σ²) + m²σ²δ_IX²/6, or δI²/(3σ²) + m²σ⁴δt²/16 when δ_IX = 0
  Real model_min = 0.0, model_sigma = 0.0;
  Real bound = 0.0;  ///< (√2/3) m δI δ_IX or (3^{1/3}/4) m^{2/3} δI^{4/3} δt^{2/3}
  bool model_holds = false;  ///< model ≥ bound on every grid σ and at the minimizer
  bool interior = false;     ///< model minimizer strictly inside the σ range
  /// exact metric: G(σ)δI² + m²[Var(ξ⁰)(I·δX)² + (σ²/2)δ_IX²]
  Real exact_min = 0.0, exact_sigma = 0.0;
  bool exact_above_bound = false;
  /// m δI δ_IX or m^{2/3} δt^{2/3} δI^{4/3}: must be ≳ 1 once δs̃² ~ 1
  Real induced = 0.0;
};

struct CovariantScan {
  Real m = 1.0;
  std::vector<CovariantScanRow> rows;
};

namespace detail {

// Grid scan, then Brent in log σ around the best grid point.
template <typename F>
std::pair<Real, Real> minimize_sigma(F&& f, std::span<const Real> grid, bool* interior = nullptr) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < grid.size(); ++i)
    if (f(grid[i]) < f(grid[best])) best = i;
  const Real lo = std::log(grid[best == 0 ? 0 : best - 1]), hi = std::log(grid[std::min(best + 1, grid.size() - 1)]);
  if (interior) *interior = best > 0 && best + 1 < grid.size();
  auto r = boost::math::tools::brent_find_minima([&](Real ls) { return f(std::exp(ls)); }, lo, hi, 52);
  return {std::exp(r.first), r.second};
}

}  // namespace detail

inline CovariantScan covariant_uncertainty_scan(std::span<const Real> sigma_grid, Real m,
                                                std::span<const CovariantDisplacement> family) {
  require(sigma_grid.size() >= 3, "covariant scan: need >= 3 sigma values");
  for (std::size_t i = 0; i < sigma_grid.size(); ++i)
    require(sigma_grid[i] > 0.0 && (i == 0 || sigma_grid[i] > sigma_grid[i - 1]),
            "covariant scan: sigma grid must be positive and increasing");
  require(m > 0.0, "covariant scan: mass must be positive");
  CovariantScan out;
  out.m = m;
  for (const auto& d : family) {
    CovariantScanRow row;
    row.dI = d.boost_length();
    row.dIX = d.transverse_length();
    row.dt = d.proper_time();
    require(row.dI > 0.0, "covariant scan: displacement needs a nonzero boost step");
    const Real scale = std::max({std::abs(d.dX[0]), std::abs(d.dX[1]), std::abs(d.dX[2]), std::abs(d.dX[3])});
    row.branch = row.dIX <= 1e-12 * std::max(1.0, scale) ? CovariantBranch::degenerate : CovariantBranch::generic;
    require(row.branch == CovariantBranch::generic || row.dt != 0.0, "covariant scan: degenerate step needs dt != 0");
    const Real dI = row.dI, dIX = row.dIX, dt = row.dt;
    std::function<Real(Real)> model;
    if (row.branch == CovariantBranch::generic) {
      model = [=](Real s) { return dI * dI / (3 * s * s) + m * m * s * s * dIX * dIX / 6; };
      row.bound = std::sqrt(2.0) / 3.0 * m * dI * dIX;
      row.induced = m * dI * dIX;
    } else {
      model = [=](Real s) { return dI * dI / (3 * s * s) + m * m * std::pow(s, 4) * dt * dt / 16; };
      row.bound = std::cbrt(3.0) / 4.0 * std::cbrt(m * m) * std::pow(dI, 4.0 / 3.0) * std::cbrt(dt * dt);
      row.induced = std::cbrt(m * m * dt * dt) * std::pow(dI, 4.0 / 3.0);
    }
    std::tie(row.model_sigma, row.model_min) = detail::minimize_sigma(model, sigma_grid, &row.interior);
    row.model_holds = row.model_min >= row.bound * (1 - 1e-12);
    for (Real s : sigma_grid) row.model_holds = row.model_holds && model(s) >= row.bound * (1 - 1e-12);

    auto exact = [=](Real s) {
      return boost_metric_coefficient(s) * dI * dI + m * m * (energy_variance(s) * dt * dt + 0.5 * s * s * dIX * dIX);
    };
    std::tie(row.exact_sigma, row.exact_min) = detail::minimize_sigma(exact, sigma_grid);
    row.exact_above_bound = row.exact_min >= row.bound;
    out.rows.push_back(row);
  }
  return out;
}

// -----------------------------------------------------------------------------
// Causal ordering
// -----------------------------------------------------------------------------

/// X' in the causal future of X: ΔX·ΔX ≥ 0 and ΔX⁰ ≥ 0, in exact rational arithmetic.
inline bool causal_future(const FourVector& X, const FourVector& Xp) {
  using boost::multiprecision::cpp_rational;
  cpp_rational d[4];
  for (std::size_t i = 0; i < 4; ++i) d[i] = cpp_rational(Xp[i]) - cpp_rational(X[i]);
  if (d[0] < 0) return false;
  return d[0] * d[0] - d[1] * d[1] - d[2] * d[2] - d[3] * d[3] >= 0;
}

/// Index k of the first step with X_{k+1} outside the causal future of X_k.
inline std::optional<std::size_t> first_acausal_step(std::span<const PoincareState> history) {
  for (std::size_t k = 0; k + 1 < history.size(); ++k)
    if (!causal_future(history[k].X, history[k + 1].X)) return k;
  return std::nullopt;
}

}  // namespace csgeom
