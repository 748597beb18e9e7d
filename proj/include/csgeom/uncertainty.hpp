#pragma once

/**
 * @file uncertainty.hpp
 * @brief Numerical checks of the metric uncertainty chains: fixed reference,
 *        optimal reference, Schrödinger–Robertson and (with dynamics.hpp)
 *        the extended time–energy chain.
 */

#include "dynamics.hpp"
#include "grid_state.hpp"
#include "numerics.hpp"
#include "weyl.hpp"

#include <boost/math/tools/minima.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace csgeom {

struct ProbeDisplacement {
  Real dq = 0.0;
  Real dp = 0.0;
  Real dt = 0.0;
};

struct ChainEntry {
  std::string name;
  Real lhs = 0.0;
  Real rhs = 0.0;
  bool satisfied = true;
  /// informational rows carry a number but are not part of the pass/fail chain
  bool informational = false;
  std::string note;

  [[nodiscard]] Real slack() const { return lhs - rhs; }
};

inline ChainEntry inequality(std::string name, Real lhs, Real rhs, Real rel_tol = 1e-9) {
  ChainEntry e;
  e.name = std::move(name);
  e.lhs = lhs;
  e.rhs = rhs;
  e.satisfied = lhs >= rhs - rel_tol * std::max(1.0, std::abs(rhs));
  return e;
}

inline ChainEntry info(std::string name, Real lhs, Real rhs, std::string note = {}) {
  ChainEntry e;
  e.name = std::move(name);
  e.lhs = lhs;
  e.rhs = rhs;
  e.informational = true;
  e.note = std::move(note);
  return e;
}

struct UncertaintyReport {
  Real ds2 = 0.0;
  std::vector<ChainEntry> chain;
  ProbeDisplacement minimizer;
  Real reference_sigma = 0.0;
  Real reference_cpq = 0.0;

  [[nodiscard]] bool all_satisfied() const {
    return std::all_of(chain.begin(), chain.end(), [](const ChainEntry& e) { return e.informational || e.satisfied; });
  }
  [[nodiscard]] const ChainEntry* find(const std::string& name) const {
    for (const auto& e : chain)
      if (e.name == name) return &e;
    return nullptr;
  }
};

namespace detail {

template <typename F>
std::pair<Real, Real> brent(F f, Real lo, Real hi) {
  std::uintmax_t iters = 200;
  auto r = boost::math::tools::brent_find_minima(f, lo, hi, std::numeric_limits<Real>::digits / 2 + 10, iters);
  if (iters >= 200) {
    std::ostringstream os;
    os << "line search did not converge in [" << lo << ", " << hi << "]";
    throw NumericalError(os.str());
  }
  return r;
}

}  // namespace detail

/**
 * Scans δs²(δq) = g_qq δq² + g_pp (c/δq)² + 2 g_qp c with δp = c/δq on the
 * given positive δq grid (c = ±1, or ±0.5, ±2 for the sensitivity rows),
 * refines the grid minimum by Brent and checks the chain
 *   min δs² = 2(ΔqΔp + g_qp) at δq² = Δq/Δp,   and   min δs² ≥ 1.
 * A negative `product` probes the anti-aligned direction δqδp = −1.
 */
inline UncertaintyReport chain_fixed_reference(const MetricComponents& g, const std::vector<Real>& dq_grid,
                                               Real product = 1.0) {
  require(!dq_grid.empty(), "chain_fixed_reference: empty scan");
  for (Real v : dq_grid) require(v > 0.0 && std::isfinite(v), "chain_fixed_reference: scan values must be positive");
  require(product != 0.0, "chain_fixed_reference: dq*dp must be nonzero");
  auto ds2 = [&](Real dq, Real c) { return g.ds2(dq, c / dq); };

  std::size_t best = 0;
  for (std::size_t k = 1; k < dq_grid.size(); ++k)
    if (ds2(dq_grid[k], product) < ds2(dq_grid[best], product)) best = k;
  const Real lo = std::log(dq_grid[best > 0 ? best - 1 : best] * (best > 0 ? 1.0 : 0.5));
  const Real hi = std::log(dq_grid[best + 1 < dq_grid.size() ? best + 1 : best] * (best + 1 < dq_grid.size() ? 1.0 : 2.0));
  auto [lx, fmin] = detail::brent([&](Real l) { return ds2(std::exp(l), product); }, lo, hi);
  const Real dq_star = std::exp(lx);

  const Real dq = std::sqrt(g.gpp), dp = std::sqrt(g.gqq);  // Δq, Δp
  const Real sgn = product > 0 ? 1.0 : -1.0;
  UncertaintyReport r;
  r.ds2 = fmin;
  r.minimizer = {dq_star, product / dq_star, 0.0};
  r.reference_sigma = std::sqrt(2.0) * dq;
  r.reference_cpq = -g.gqp;
  const Real c = std::abs(product);
  r.chain.push_back(inequality("ds2 >= 2|dqdp|(Dq*Dp + sign*g_qp)", fmin, 2.0 * c * (dq * dp + sgn * g.gqp)));
  r.chain.push_back(info("argmin dq^2 = Dq/Dp", dq_star * dq_star / c, dq / dp));
  r.chain.push_back(inequality("Dq*Dp >= 1/2", dq * dp, 0.5));
  // the bound on the correlated term only holds when it does not oppose the displacement
  r.chain.push_back(info("correlation aligned with displacement", sgn * g.gqp, 0.0,
                         sgn * g.gqp >= 0 ? "intermediate step valid" : "intermediate step outside its domain"));
  r.chain.push_back(inequality("ds2 >= |dq*dp| (Heisenberg floor)", fmin, c));
  return r;
}

inline UncertaintyReport chain_fixed_reference(const GaussianReference& ref, const std::vector<Real>& dq_grid,
                                               Real product = 1.0) {
  return chain_fixed_reference(metric_analytic(ref), dq_grid, product);
}

inline UncertaintyReport chain_fixed_reference(const CorrelatedReference& ref, const std::vector<Real>& dq_grid,
                                               Real product = 1.0) {
  return chain_fixed_reference(metric_analytic(ref), dq_grid, product);
}

/// Log-spaced δq grid.
inline std::vector<Real> log_grid(Real lo, Real hi, std::size_t n) {
  require(lo > 0 && hi > lo && n >= 2, "log_grid: need 0 < lo < hi and n >= 2");
  std::vector<Real> v(n);
  for (std::size_t k = 0; k < n; ++k)
    v[k] = lo * std::pow(hi / lo, static_cast<Real>(k) / static_cast<Real>(n - 1));
  return v;
}

struct ReferenceSearch {
  Real sigma_min = 0.05;
  Real sigma_max = 20.0;
  /// largest |C_pq| explored
  Real cpq_max = 2.0;
};

/// δs² of the displacement in a pure Gaussian reference of width σ, covariance C.
inline Real ds2_in_reference(Real sigma, Real cpq, Real dq, Real dp) {
  return metric_analytic(CorrelatedReference::with_covariance(sigma, cpq)).ds2(dq, dp);
}

/**
 * Minimizes δs² over pure Gaussian references (width and covariance). The
 * covariance is restricted to values whose metric cross term does not oppose
 * the displacement (g_qp δqδp ≥ 0); inside that set the infimum is δqδp at
 * (Δq)² = δq/(2δp). The unrestricted infimum, reached by squeezing along the
 * displacement, is reported as an informational row.
 */
inline UncertaintyReport chain_optimal_reference(const ProbeDisplacement& d, const ReferenceSearch& space = {}) {
  require(d.dq > 0.0 && d.dp > 0.0, "chain_optimal_reference: dq and dp must be positive");
  require(space.sigma_min > 0 && space.sigma_max > space.sigma_min, "chain_optimal_reference: bad sigma range");
  const Real ls0 = std::log(space.sigma_min), ls1 = std::log(space.sigma_max);
  // aligned half: g_qp = −C ≥ 0 for δqδp > 0, so C ∈ [−cpq_max, 0]
  auto inner = [&](Real sigma) {
    auto [c, v] = detail::brent([&](Real cc) { return ds2_in_reference(sigma, cc, d.dq, d.dp); }, -space.cpq_max, 0.0);
    // Brent never samples the end points; compare with the boundary explicitly
    const Real v0 = ds2_in_reference(sigma, 0.0, d.dq, d.dp);
    return v0 <= v ? std::pair<Real, Real>{0.0, v0} : std::pair<Real, Real>{c, v};
  };
  auto [ls, fmin] = detail::brent([&](Real l) { return inner(std::exp(l)).second; }, ls0, ls1);
  const Real sigma = std::exp(ls);
  const Real edge = 1e-6 * (ls1 - ls0);
  if (ls - ls0 < edge || ls1 - ls < edge) {
    std::ostringstream os;
    os << "chain_optimal_reference: minimizer at the edge of the width bracket [" << space.sigma_min << ", "
       << space.sigma_max << "] (sigma = " << sigma << ")";
    throw NumericalError(os.str());
  }
  const Real cpq = inner(sigma).first;

  // unrestricted search: squeezing along the displacement, γ = δp/δq
  Real unrestricted = std::numeric_limits<Real>::infinity();
  for (Real s : log_grid(space.sigma_min, space.sigma_max, 81)) {
    const Real c_opt = std::clamp(0.5 * s * s * d.dp / d.dq, -space.cpq_max, space.cpq_max);
    unrestricted = std::min(unrestricted, ds2_in_reference(s, c_opt, d.dq, d.dp));
  }

  UncertaintyReport r;
  r.ds2 = fmin;
  r.minimizer = d;
  r.reference_sigma = sigma;
  r.reference_cpq = cpq;
  const Real dq_ref = sigma / std::sqrt(2.0);
  r.chain.push_back(inequality("ds2 >= dq*dp", fmin, d.dq * d.dp));
  r.chain.push_back(info("inf ds2 = dq*dp", fmin, d.dq * d.dp));
  r.chain.push_back(info("argmin Dq^2 = dq/(2dp)", dq_ref * dq_ref, d.dq / (2.0 * d.dp)));
  r.chain.push_back(info("unrestricted inf over correlated references", unrestricted, 0.0,
                         "squeezing along the displacement drives ds2 toward 0"));
  return r;
}

struct SRResult {
  Real dq = 0.0;
  Real dp = 0.0;
  Real cpq = 0.0;
  Real lhs = 0.0;  ///< (Δq)²(Δp)² − C²
  Real rhs = 0.25;
  Real slack = 0.0;
  bool saturated = false;
};

inline SRResult schrodinger_robertson(const SecondMoments& m, Real eq_tol = 1e-9) {
  SRResult r;
  r.dq = m.dq;
  r.dp = m.dp;
  r.cpq = m.cpq;
  r.lhs = m.dq * m.dq * m.dp * m.dp - m.cpq * m.cpq;
  r.slack = r.lhs - r.rhs;
  r.saturated = std::abs(r.slack) <= eq_tol;
  return r;
}

/// Grid moments of a normalizable state, then the bound.
inline SRResult schrodinger_robertson(GridState s, Real eq_tol = 1e-9) {
  s.normalize();
  return schrodinger_robertson(grid_moments(s), eq_tol);
}

// -----------------------------------------------------------------------------
// Extended (time–energy) chain
// -----------------------------------------------------------------------------

/**
 * Moments entering the chain for Ĉ = Δ(Â·δz) and D̂ = −ΔĤ δt, stored per unit
 * δt so the chain can be re-evaluated at any δt.
 */
struct ExtendedMoments {
  Real C2 = 0.0;          ///< ⟨Ĉ²⟩
  Real E2 = 0.0;          ///< (ΔE)², so ⟨D̂²⟩ = E2 δt²
  Real anti = 0.0;        ///< ⟨ĈD̂ + D̂Ĉ⟩ / δt
  Complex comm{};         ///< ⟨[Ĉ, D̂]⟩ / δt
  Real dH = 0.0;          ///< classical δH = ∂_q H δq + ∂_p H δp at z
};

/// Closed-form moments for free/harmonic H; the commutator comes from operator algebra in the state.
inline ExtendedMoments extended_moments(const WeylState& s, const HamiltonianSpec& H, PhasePoint dz) {
  require(H.analytic(), "extended_moments: closed form needs a free or harmonic Hamiltonian");
  const auto g = GaussianPacket::from(s);
  const auto e = energy_moments(g, H);
  const auto x = detail::extended_from(g.moments(), e, dz, 1.0);
  ExtendedMoments m;
  m.C2 = x.ds2_spatial;
  m.E2 = e.var;
  m.anti = 2.0 * (x.C_EA[0] * dz.q + x.C_EA[1] * dz.p);
  // [−δq p̂ + δp x̂, Ĥ] = i(ω² x̂ δq + p̂ δp), times −δt
  m.comm = -I_unit * (H.w2() * g.xc * dz.q + H.kinetic() * g.pc * dz.p);
  const auto grad = H.gradient(s.z);
  m.dH = grad[0] * dz.q + grad[1] * dz.p;
  return m;
}

/// All moments by applying x̂, p̂ and Ĥ to the sampled state.
inline ExtendedMoments extended_moments(const WeylState& s, const HamiltonianSpec& H, PhasePoint dz,
                                        const GridPropagation& numeric) {
  auto gs = GridState::sample(numeric.grid, [&](Real x) { return s.wavefunction(x); });
  gs.normalize();
  SpectralGrid sg(gs.grid);
  const auto Hpsi = apply_hamiltonian(sg, gs, H);
  const auto Ppsi = apply_momentum(sg, gs);
  const std::size_t n = gs.psi.size();
  std::vector<Complex> Cpsi(n), Dpsi(n);
  for (std::size_t i = 0; i < n; ++i) Cpsi[i] = -dz.q * Ppsi[i] + dz.p * gs.grid.node(i) * gs.psi[i];
  const Complex meanC = detail::grid_dot(gs, gs.psi, Cpsi);
  const Complex meanH = detail::grid_dot(gs, gs.psi, Hpsi);
  for (std::size_t i = 0; i < n; ++i) {
    Cpsi[i] -= meanC.real() * gs.psi[i];
    Dpsi[i] = -(Hpsi[i] - meanH.real() * gs.psi[i]);
  }
  ExtendedMoments m;
  m.C2 = detail::grid_dot(gs, Cpsi, Cpsi).real();
  m.E2 = detail::grid_dot(gs, Dpsi, Dpsi).real();
  const Complex cd = detail::grid_dot(gs, Cpsi, Dpsi);
  m.anti = 2.0 * cd.real();
  m.comm = Complex(0.0, 2.0 * cd.imag());
  const auto grad = H.gradient(s.z);
  m.dH = grad[0] * dz.q + grad[1] * dz.p;
  return m;
}

struct ExtendedChainOptions {
  Real tol = 1e-8;            ///< absolute slack tolerance on each inequality
  Real commutator_tol = 1e-6; ///< relative tolerance on ⟨[Ĉ, D̂]⟩ = −i δH δt
};

namespace detail {
inline Real ds2_bar_at(const ExtendedMoments& m, Real dt) { return m.C2 + m.anti * dt + m.E2 * dt * dt; }
}  // namespace detail

/**
 * Evaluates the time–energy chain for the displacement (δz, δt):
 * Schwarz for (Ĉ, D̂), the commutator identity, the anticommutator bound,
 * the lower bound on δs̄², its maximization over ⟨D̂²⟩, and the resulting
 * δs̄² ≥ δH δt and δs̄² ≥ 1 (the latter at δt = 1/ΔE). Each row is evaluated
 * as stated; rows that are not implied by the earlier ones may fail.
 * A commutator mismatch beyond tolerance throws: it means the generators or
 * the Hamiltonian action are wrong, not that a bound fails.
 */
inline UncertaintyReport extended_chain(const ExtendedMoments& m, Real dt, const ExtendedChainOptions& opt = {}) {
  require(std::isfinite(dt), "extended_chain: dt must be finite");
  const Real C2 = m.C2, D2 = m.E2 * dt * dt, anti = m.anti * dt;
  const Complex comm = m.comm * dt;
  const Real dHdt = m.dH * dt;
  const Real ds2bar = C2 + D2 + anti;

  const Complex expected(0.0, -dHdt);
  const Real cscale = std::max({std::abs(expected), std::sqrt(std::max(0.0, C2 * D2)), 1e-300});
  if (std::abs(comm - expected) > opt.commutator_tol * cscale + 1e-14) {
    std::ostringstream os;
    os << "extended_chain: <[C,D]> = " << comm << " differs from -i dH dt = " << expected;
    throw NumericalError(os.str());
  }

  UncertaintyReport r;
  r.ds2 = ds2bar;
  auto add = [&](std::string name, Real lhs, Real rhs) { r.chain.push_back(inequality(std::move(name), lhs, rhs, opt.tol)); };
  add("<C2><D2> - <CD+DC>^2/4 >= |<[C,D]>|^2/4", C2 * D2 - 0.25 * anti * anti, 0.25 * std::norm(comm));
  r.chain.push_back(info("<[C,D]> = -i dH dt", comm.imag(), -dHdt, "commutator identity (imaginary parts)"));
  const Real root = std::sqrt(std::max(0.0, 4.0 * C2 * D2 - dHdt * dHdt));
  add("sqrt(4<C2><D2> - dH^2 dt^2) >= |<CD+DC>|", root, std::abs(anti));
  add("ds2bar >= <C2> + <D2> - sqrt(4<C2><D2> - dH^2 dt^2)", ds2bar, C2 + D2 - root);
  const Real d2star = C2 > 0.0 ? dHdt * dHdt / (4.0 * C2) : 0.0;
  r.chain.push_back(info("lower bound maximal at <D2> = dH^2 dt^2/(4<C2>)", D2, d2star,
                         D2 >= d2star ? "root vanishes below the actual <D2>" : "actual <D2> below the stationary value"));
  const Real bound48 = (C2 > 0.0) ? C2 + d2star : (dHdt == 0.0 ? 0.0 : std::numeric_limits<Real>::infinity());
  add("ds2bar >= <C2> + dH^2 dt^2/(4<C2>)", ds2bar, bound48);
  add("ds2bar >= dH*dt", ds2bar, dHdt);
  if (m.E2 > 0.0) {
    const Real t1 = 1.0 / std::sqrt(m.E2);
    add("ds2bar >= 1 at dE*dt = 1", detail::ds2_bar_at(m, t1), 1.0);
  }
  r.minimizer = {0.0, 0.0, dt};
  return r;
}

/// Failure counts of each chain row over seeded random harmonic configurations.
struct ChainSurvey {
  std::size_t configurations = 0;
  std::map<std::string, std::size_t> failures;
  std::map<std::string, Real> worst_slack;
  /// worst violation seen for the commutator identity, relative to |δH δt|
  Real commutator_residual = 0.0;

  [[nodiscard]] Real failure_fraction(const std::string& row) const {
    auto it = failures.find(row);
    return it == failures.end() || configurations == 0 ? 0.0
                                                       : static_cast<Real>(it->second) / static_cast<Real>(configurations);
  }
};

/**
 * Draws z ∈ [−2, 2]², δz ∈ [−0.2, 0.2]², δt ∈ (0, 0.2], σ, ω ∈ [0.5, 2] and
 * evaluates the chain with closed-form moments. When `numeric` is given the
 * commutator identity is also checked on the grid for every configuration.
 */
inline ChainSurvey survey_extended_chain(std::uint64_t seed, std::size_t count,
                                         const std::optional<GridPropagation>& numeric = std::nullopt,
                                         const ExtendedChainOptions& opt = {}) {
  auto eng = make_engine(RngSeed{seed}, 7);
  std::uniform_real_distribution<Real> uz(-2.0, 2.0), ud(-0.2, 0.2), ut(0.0, 0.2), us(0.5, 2.0);
  ChainSurvey s;
  for (std::size_t k = 0; k < count; ++k) {
    const PhasePoint z{uz(eng), uz(eng)}, dz{ud(eng), ud(eng)};
    const Real dt = 0.2 - ut(eng);  // (0, 0.2]
    const Real sigma = us(eng), w = us(eng);
    const auto H = HamiltonianSpec::harmonic(w);
    const WeylState st{GaussianReference(sigma), z};
    const auto m = extended_moments(st, H, dz);
    const auto rep = extended_chain(m, dt, opt);
    if (numeric) {
      const auto mg = extended_moments(st, H, dz, *numeric);
      const Real ref = std::max(std::abs(m.dH), 1e-12);
      s.commutator_residual = std::max(s.commutator_residual, std::abs(mg.comm - Complex(0.0, -m.dH)) / ref);
      extended_chain(mg, dt, opt);
    }
    ++s.configurations;
    for (const auto& e : rep.chain) {
      if (e.informational) continue;
      auto [it, fresh] = s.worst_slack.try_emplace(e.name, e.slack());
      if (!fresh) it->second = std::min(it->second, e.slack());
      s.failures.try_emplace(e.name, 0);
      if (!e.satisfied) ++s.failures[e.name];
    }
  }
  return s;
}

}  // namespace csgeom
