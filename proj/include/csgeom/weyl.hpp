#pragma once

/**
 * @file weyl.hpp
 * @brief Weyl-group coherent states ψ_z(x) = e^{ipx} ψ₀(x − q) with a Gaussian
 *        reference vector, plus the correlated (chirped) Gaussian used by the
 *        uncertainty scans.
 *
 * Orientation: the representative above has connection A = q dp and curvature
 * Ω = dq∧dp, i.e. Ω_qp = +1. Its operator generators are Â_q = −p̂ + p and
 * Â_p = x̂, so the metric cross term equals minus the symmetrized covariance.
 */

#include "family.hpp"
#include "grid_state.hpp"
#include "numerics.hpp"

#include <array>
#include <cmath>

namespace csgeom {

struct GaussianReference {
  Real sigma = 1.0;

  GaussianReference() = default;
  explicit GaussianReference(Real s) : sigma(s) {
    require(std::isfinite(s) && s > 0.0, "GaussianReference: sigma must be positive");
  }
  bool operator==(const GaussianReference&) const = default;
};

/// ψ₀(x) ∝ exp(−x²/(2σ²) + iγx²/2); C_pq = γσ²/2.
struct CorrelatedReference {
  Real sigma = 1.0;
  Real gamma = 0.0;

  CorrelatedReference() = default;
  CorrelatedReference(Real s, Real g) : sigma(s), gamma(g) {
    require(std::isfinite(s) && s > 0.0, "CorrelatedReference: sigma must be positive");
    require(std::isfinite(g), "CorrelatedReference: gamma must be finite");
  }
  /// Reference with prescribed width and symmetrized covariance C_pq.
  static CorrelatedReference with_covariance(Real sigma, Real cpq) {
    return {sigma, 2.0 * cpq / (sigma * sigma)};
  }
  bool operator==(const CorrelatedReference&) const = default;
};

struct PhasePoint {
  Real q = 0.0;
  Real p = 0.0;

  [[nodiscard]] std::array<Real, 2> array() const { return {q, p}; }
  bool operator==(const PhasePoint&) const = default;
};

enum class Gauge {
  position_phase,  ///< the representative itself: A = q dp
  symmetric,       ///< e^{−iqp/2} rephasing: A = (−p dq + q dp)/2
  momentum_phase   ///< e^{−iqp} rephasing: A = −p dq
};

inline Real gauge_phase(PhasePoint z, Gauge g) {
  switch (g) {
    case Gauge::position_phase: return 0.0;
    case Gauge::symmetric: return -0.5 * z.q * z.p;
    case Gauge::momentum_phase: return -z.q * z.p;
  }
  return 0.0;
}

struct WeylState {
  GaussianReference ref;
  PhasePoint z;

  [[nodiscard]] Complex wavefunction(Real x) const {
    const Real s = ref.sigma;
    const Real u = x - z.q;
    return std::pow(pi * s * s, -0.25) * std::exp(-u * u / (2.0 * s * s)) * std::exp(I_unit * (z.p * x));
  }
};

namespace detail {

// <z1|z2> for ψ₀ ∝ e^{−a x²/2}, Re a = 1/σ²; exact Gaussian integral.
inline Complex gaussian_overlap(Complex a, PhasePoint z1, PhasePoint z2) {
  const Complex ab = std::conj(a);
  const Real s = 2.0 * a.real();
  const Complex B = ab * z1.q + a * z2.q + I_unit * (z2.p - z1.p);
  return std::exp(B * B / (2.0 * s) - 0.5 * (ab * z1.q * z1.q + a * z2.q * z2.q));
}

}  // namespace detail

/// Closed-form ⟨z_a|z_b⟩ in the chosen gauge.
inline Complex overlap(const WeylState& a, const WeylState& b, Gauge g = Gauge::position_phase) {
  if (!(a.ref == b.ref)) throw ValidationError("overlap: states belong to different families");
  const Real s2 = a.ref.sigma * a.ref.sigma;
  const Real dq = b.z.q - a.z.q, dp = b.z.p - a.z.p;
  const Real qbar = 0.5 * (a.z.q + b.z.q);
  const Real phase = dp * qbar + gauge_phase(b.z, g) - gauge_phase(a.z, g);
  return std::exp(-dq * dq / (4.0 * s2) - s2 * dp * dp / 4.0) * std::exp(I_unit * phase);
}

inline Complex overlap(const CorrelatedReference& ref, PhasePoint a, PhasePoint b) {
  return detail::gaussian_overlap(Complex(1.0 / (ref.sigma * ref.sigma), -ref.gamma), a, b);
}

inline SecondMoments second_moments(const GaussianReference& ref) {
  return {ref.sigma / std::sqrt(2.0), 1.0 / (ref.sigma * std::sqrt(2.0)), 0.0, 0.0, 0.0};
}

inline SecondMoments second_moments(const CorrelatedReference& ref) {
  const Real s2 = ref.sigma * ref.sigma;
  return {std::sqrt(s2 / 2.0), std::sqrt(1.0 / (2.0 * s2) + ref.gamma * ref.gamma * s2 / 2.0),
          ref.gamma * s2 / 2.0, 0.0, 0.0};
}

struct MetricComponents {
  Real gqq = 0.0;
  Real gpp = 0.0;
  Real gqp = 0.0;

  [[nodiscard]] Real det() const { return gqq * gpp - gqp * gqp; }
  [[nodiscard]] Real ds2(Real dq, Real dp) const { return gqq * dq * dq + gpp * dp * dp + 2.0 * gqp * dq * dp; }
  [[nodiscard]] Mat matrix() const {
    Mat g(2, 2);
    g << gqq, gqp, gqp, gpp;
    return g;
  }
};

/// g_qq = (Δp)², g_pp = (Δq)², g_qp = −C_pq (orientation of the representative).
inline MetricComponents metric_from_moments(const SecondMoments& m) { return {m.dp * m.dp, m.dq * m.dq, -m.cpq}; }

inline MetricComponents metric_analytic(const GaussianReference& ref) { return metric_from_moments(second_moments(ref)); }
inline MetricComponents metric_analytic(const CorrelatedReference& ref) {
  return metric_from_moments(second_moments(ref));
}

/// (A_q, A_p) at z.
inline std::array<Real, 2> connection_analytic(PhasePoint z, Gauge g = Gauge::position_phase) {
  switch (g) {
    case Gauge::position_phase: return {0.0, z.q};
    case Gauge::symmetric: return {-0.5 * z.p, 0.5 * z.q};
    case Gauge::momentum_phase: return {-z.p, 0.0};
  }
  return {0.0, 0.0};
}

/// Ω_qp = ∂_q A_p − ∂_p A_q; gauge independent.
inline constexpr Real curvature_qp_analytic() { return 1.0; }

namespace detail {
inline PhasePoint as_point(std::span<const Real> z) {
  require(z.size() == 2, "Weyl family: chart dimension is 2");
  return {z[0], z[1]};
}

inline AnalyticGeometry weyl_geometry(MetricComponents g, Gauge gauge) {
  AnalyticGeometry geo;
  geo.connection = [gauge](std::span<const Real> z) {
    auto a = connection_analytic(as_point(z), gauge);
    Vec v(2);
    v << a[0], a[1];
    return v;
  };
  geo.metric = [g](std::span<const Real>) { return g.matrix(); };
  geo.curvature = [](std::span<const Real>) {
    Mat o(2, 2);
    o << 0.0, curvature_qp_analytic(), -curvature_qp_analytic(), 0.0;
    return o;
  };
  return geo;
}
}  // namespace detail

inline StateFamily weyl_family(GaussianReference ref, Gauge gauge = Gauge::position_phase) {
  StateFamily fam;
  fam.name = "weyl";
  fam.dim = 2;
  fam.overlap = [ref, gauge](std::span<const Real> a, std::span<const Real> b) {
    return overlap(WeylState{ref, detail::as_point(a)}, WeylState{ref, detail::as_point(b)}, gauge);
  };
  fam.analytic = detail::weyl_geometry(metric_analytic(ref), gauge);
  fam.fd_step = 1e-3;
  return fam;
}

inline StateFamily weyl_family(CorrelatedReference ref) {
  StateFamily fam;
  fam.name = "weyl-correlated";
  fam.dim = 2;
  fam.overlap = [ref](std::span<const Real> a, std::span<const Real> b) {
    return overlap(ref, detail::as_point(a), detail::as_point(b));
  };
  fam.analytic = detail::weyl_geometry(metric_analytic(ref), Gauge::position_phase);
  fam.fd_step = 1e-3;
  return fam;
}

/// Oracle grid: x ∈ [−12σ − qmax, 12σ + qmax], 4096 nodes.
inline Grid1D weyl_oracle_grid(Real sigma, Real qmax, std::size_t n = 4096) {
  const Real half = 12.0 * sigma + std::abs(qmax);
  return {-half, half, n};
}

inline GridState sample(const WeylState& s, const Grid1D& g) {
  return GridState::sample(g, [&](Real x) { return s.wavefunction(x); });
}

inline GridState sample(const CorrelatedReference& ref, PhasePoint z, const Grid1D& g) {
  const Real s2 = ref.sigma * ref.sigma;
  const Real nrm = std::pow(pi * s2, -0.25);
  return GridState::sample(g, [&](Real x) {
    const Real u = x - z.q;
    return nrm * std::exp(-u * u / (2.0 * s2) + I_unit * (0.5 * ref.gamma * u * u + z.p * x));
  });
}

}  // namespace csgeom
