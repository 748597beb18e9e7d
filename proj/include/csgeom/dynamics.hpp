#pragma once

/**
 * @file dynamics.hpp
 * @brief Extended phase space Γ×R: time-evolved coherent states for the free
 *        particle and harmonic oscillator (closed-form Gaussian packets) and for
 *        tabulated potentials (split-step Fourier), extended metric, action
 *        phases and energy-decay profiles. Units: ħ = m = 1.
 */

#include "family.hpp"
#include "grid_state.hpp"
#include "histories.hpp"
#include "numerics.hpp"
#include "weyl.hpp"

#include <fftw3.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <memory>
#include <optional>
#include <sstream>
#include <variant>
#include <vector>

namespace csgeom {

enum class HamiltonianKind { zero, free, harmonic, grid };

/// H = 0, or H = p²/2 + V(x) with V = 0, ω²x²/2 or a user potential.
struct HamiltonianSpec {
  HamiltonianKind kind = HamiltonianKind::free;
  Real omega = 1.0;
  std::function<Real(Real)> potential_fn;

  static HamiltonianSpec zero() {
    HamiltonianSpec h;
    h.kind = HamiltonianKind::zero;
    return h;
  }
  static HamiltonianSpec free_particle() { return {}; }
  static HamiltonianSpec harmonic(Real w) {
    require(std::isfinite(w) && w > 0.0, "HamiltonianSpec: harmonic frequency must be positive");
    HamiltonianSpec h;
    h.kind = HamiltonianKind::harmonic;
    h.omega = w;
    return h;
  }
  static HamiltonianSpec grid(std::function<Real(Real)> v) {
    require(static_cast<bool>(v), "HamiltonianSpec: grid potential missing");
    HamiltonianSpec h;
    h.kind = HamiltonianKind::grid;
    h.potential_fn = std::move(v);
    return h;
  }

  [[nodiscard]] bool analytic() const { return kind != HamiltonianKind::grid; }

  [[nodiscard]] Real potential(Real x) const {
    switch (kind) {
      case HamiltonianKind::zero:
      case HamiltonianKind::free: return 0.0;
      case HamiltonianKind::harmonic: return 0.5 * omega * omega * x * x;
      case HamiltonianKind::grid: return potential_fn(x);
    }
    return 0.0;
  }
  /// classical H(q, p)
  [[nodiscard]] Real classical(PhasePoint z) const { return 0.5 * kinetic() * z.p * z.p + potential(z.q); }
  /// (∂H/∂q, ∂H/∂p)
  [[nodiscard]] std::array<Real, 2> gradient(PhasePoint z) const {
    Real dv = 0.0;
    if (kind == HamiltonianKind::harmonic) {
      dv = omega * omega * z.q;
    } else if (kind == HamiltonianKind::grid) {
      const Real h = 1e-5 * (1.0 + std::abs(z.q));
      dv = (potential(z.q + h) - potential(z.q - h)) / (2.0 * h);
    }
    return {dv, kinetic() * z.p};
  }
  /// coefficient of p²/2
  [[nodiscard]] Real kinetic() const { return kind == HamiltonianKind::zero ? 0.0 : 1.0; }
  [[nodiscard]] Real w2() const { return kind == HamiltonianKind::harmonic ? omega * omega : 0.0; }
};

struct ExtendedPoint {
  PhasePoint z;
  Real t = 0.0;
};

// -----------------------------------------------------------------------------
// Gaussian packets
// -----------------------------------------------------------------------------

/// ψ(x) = exp(i[A/2 (x − x_c)² + p_c (x − x_c) + γ]), Im A > 0.
struct GaussianPacket {
  Complex A{0.0, 1.0};
  Real xc = 0.0;
  Real pc = 0.0;
  Complex gamma{};

  static GaussianPacket from(const WeylState& s) {
    const Real s2 = s.ref.sigma * s.ref.sigma;
    return {Complex(0.0, 1.0 / s2), s.z.q, s.z.p, Complex(s.z.p * s.z.q, 0.25 * std::log(pi * s2))};
  }
  static GaussianPacket from(const CorrelatedReference& ref, PhasePoint z) {
    const Real s2 = ref.sigma * ref.sigma;
    return {Complex(ref.gamma, 1.0 / s2), z.q, z.p, Complex(z.p * z.q, 0.25 * std::log(pi * s2))};
  }

  [[nodiscard]] Complex operator()(Real x) const {
    const Real u = x - xc;
    return std::exp(I_unit * (0.5 * A * u * u + pc * u + gamma));
  }
  [[nodiscard]] Real var_x() const { return 1.0 / (2.0 * A.imag()); }
  [[nodiscard]] Real var_p() const { return std::norm(A) / (2.0 * A.imag()); }
  [[nodiscard]] Real cov_xp() const { return A.real() / (2.0 * A.imag()); }
  [[nodiscard]] Real norm2() const { return std::exp(-2.0 * gamma.imag()) * std::sqrt(pi / A.imag()); }
  [[nodiscard]] SecondMoments moments() const {
    return {std::sqrt(var_x()), std::sqrt(var_p()), cov_xp(), xc, pc};
  }
};

/// ⟨a|b⟩ in closed form.
inline Complex overlap(const GaussianPacket& a, const GaussianPacket& b) {
  // exponent −αx² + βx + c
  const Complex al = -0.5 * I_unit * (b.A - std::conj(a.A));
  const Complex be = I_unit * (-b.A * b.xc + std::conj(a.A) * a.xc + b.pc - a.pc);
  const Complex c = I_unit * (0.5 * b.A * b.xc * b.xc - 0.5 * std::conj(a.A) * a.xc * a.xc - b.pc * b.xc +
                              a.pc * a.xc + b.gamma - std::conj(a.gamma));
  return std::sqrt(pi / al) * std::exp(be * be / (4.0 * al) + c);
}

/**
 * Exact evolution under the free or harmonic Hamiltonian. The width obeys
 * dA/dt = −A² − ω², the centre follows the classical flow and the phase picks
 * up (i/2) log D + ∫L dt with D = cos ωt + (A₀/ω) sin ωt.
 */
inline GaussianPacket evolve(const GaussianPacket& g, const HamiltonianSpec& H, Real t) {
  require(std::isfinite(t), "evolve: time must be finite");
  require(H.analytic(), "evolve: closed-form evolution needs a free or harmonic Hamiltonian");
  if (t == 0.0 || H.kind == HamiltonianKind::zero) return g;
  GaussianPacket out;
  Complex D;
  Real argD;
  if (H.kind == HamiltonianKind::free) {
    out.xc = g.xc + g.pc * t;
    out.pc = g.pc;
    D = 1.0 + g.A * t;
    argD = std::arg(D);
  } else {
    const Real w = H.omega, c = std::cos(w * t), s = std::sin(w * t);
    out.xc = g.xc * c + g.pc / w * s;
    out.pc = g.pc * c - g.xc * w * s;
    D = c + g.A / w * s;
    // arg D is nπ at ωt = nπ and stays in the upper/lower half plane between
    const Real n = std::floor(w * t / pi);
    const Real sign = std::fmod(std::abs(n), 2.0) == 0.0 ? 1.0 : -1.0;
    argD = n * pi + std::arg(sign * D);
  }
  out.A = (H.kind == HamiltonianKind::free) ? g.A / D
                                            : (g.A * std::cos(H.omega * t) - H.omega * std::sin(H.omega * t)) / D;
  const Complex logD(std::log(std::abs(D)), argD);
  out.gamma = g.gamma + 0.5 * I_unit * logD + 0.5 * (out.xc * out.pc - g.xc * g.pc);
  return out;
}

struct EnergyMoments {
  Real mean = 0.0;
  Real var = 0.0;
  Real cov_x = 0.0;  ///< ½⟨{x̂, Ĥ}⟩ − ⟨x̂⟩⟨Ĥ⟩
  Real cov_p = 0.0;  ///< ½⟨{p̂, Ĥ}⟩ − ⟨p̂⟩⟨Ĥ⟩
};

/// Gaussian moment identities for H = p²/2 + ω²x²/2.
inline EnergyMoments energy_moments(const GaussianPacket& g, const HamiltonianSpec& H) {
  require(H.analytic(), "energy_moments: closed form needs a free or harmonic Hamiltonian");
  const Real w2 = H.w2();
  if (H.kind == HamiltonianKind::zero) return {};
  const Real vx = g.var_x(), vp = g.var_p(), c = g.cov_xp(), x = g.xc, p = g.pc;
  EnergyMoments e;
  e.mean = 0.5 * (p * p + vp) + 0.5 * w2 * (x * x + vx);
  const Real wigner = w2 * w2 * x * x * vx + 2.0 * w2 * x * p * c + p * p * vp +
                      0.5 * (w2 * w2 * vx * vx + 2.0 * w2 * c * c + vp * vp);
  e.var = wigner - 0.25 * w2;
  e.cov_x = p * c + w2 * x * vx;
  e.cov_p = p * vp + w2 * x * c;
  return e;
}

// -----------------------------------------------------------------------------
// Grid propagation
// -----------------------------------------------------------------------------

/// Periodic FFT helper on the nodes of a Grid1D.
class SpectralGrid {
 public:
  explicit SpectralGrid(const Grid1D& g) : grid_(g), k_(g.n), buf_(g.n) {
    const Real L = g.spacing * static_cast<Real>(g.n);
    for (std::size_t j = 0; j < g.n; ++j) {
      const long jj = static_cast<long>(j) < static_cast<long>(g.n / 2) ? static_cast<long>(j)
                                                                         : static_cast<long>(j) - static_cast<long>(g.n);
      k_[j] = 2.0 * pi * static_cast<Real>(jj) / L;
    }
    auto* b = reinterpret_cast<fftw_complex*>(buf_.data());
    fwd_ = fftw_plan_dft_1d(static_cast<int>(g.n), b, b, FFTW_FORWARD, FFTW_ESTIMATE | FFTW_UNALIGNED);
    bwd_ = fftw_plan_dft_1d(static_cast<int>(g.n), b, b, FFTW_BACKWARD, FFTW_ESTIMATE | FFTW_UNALIGNED);
  }
  SpectralGrid(const SpectralGrid&) = delete;
  SpectralGrid& operator=(const SpectralGrid&) = delete;
  ~SpectralGrid() {
    fftw_destroy_plan(fwd_);
    fftw_destroy_plan(bwd_);
  }

  [[nodiscard]] const std::vector<Real>& k() const { return k_; }
  [[nodiscard]] Real kmax() const { return pi / grid_.spacing; }

  /// ψ ← F⁻¹[m(k) F ψ]
  void apply_multiplier(std::vector<Complex>& psi, const std::function<Complex(Real)>& m) {
    auto* p = reinterpret_cast<fftw_complex*>(psi.data());
    fftw_execute_dft(fwd_, p, p);
    const Real inv = 1.0 / static_cast<Real>(psi.size());
    for (std::size_t j = 0; j < psi.size(); ++j) psi[j] *= m(k_[j]) * inv;
    fftw_execute_dft(bwd_, p, p);
  }

  /// fraction of spectral power in the top tenth of the momentum band
  [[nodiscard]] Real edge_power(std::vector<Complex> psi) {
    auto* p = reinterpret_cast<fftw_complex*>(psi.data());
    fftw_execute_dft(fwd_, p, p);
    KahanSum<Real> tot, edge;
    for (std::size_t j = 0; j < psi.size(); ++j) {
      tot += std::norm(psi[j]);
      if (std::abs(k_[j]) > 0.9 * kmax()) edge += std::norm(psi[j]);
    }
    return edge.value() / tot.value();
  }

  /// smallest band |k| ≤ K holding all but `tail` of the spectral power
  [[nodiscard]] Real effective_k(std::vector<Complex> psi, Real tail = 1e-12) {
    auto* p = reinterpret_cast<fftw_complex*>(psi.data());
    fftw_execute_dft(fwd_, p, p);
    std::vector<std::pair<Real, Real>> kp(psi.size());
    Real tot = 0.0;
    for (std::size_t j = 0; j < psi.size(); ++j) {
      kp[j] = {std::abs(k_[j]), std::norm(psi[j])};
      tot += kp[j].second;
    }
    std::sort(kp.begin(), kp.end(), [](auto& a, auto& b) { return a.first > b.first; });
    Real acc = 0.0;
    for (const auto& [kk, pw] : kp) {
      acc += pw;
      if (acc > tail * tot) return kk;
    }
    return 0.0;
  }

 private:
  Grid1D grid_;
  std::vector<Real> k_;
  std::vector<Complex> buf_;
  fftw_plan fwd_ = nullptr;
  fftw_plan bwd_ = nullptr;
};

namespace detail {
inline void check_resolution(SpectralGrid& sg, const GridState& s, const std::string& when) {
  const Real ep = sg.edge_power(s.psi);
  const Real wall = (std::norm(s.psi.front()) + std::norm(s.psi.back())) / std::max(1e-300, s.norm2());
  if (ep > 1e-10 || wall > 1e-14) {
    std::ostringstream os;
    os << "grid resolution violated " << when << ": spectral edge power " << ep << ", boundary density " << wall;
    throw NumericalError(os.str());
  }
}
}  // namespace detail

/**
 * Strang split-step propagation e^{−iVdt/2} e^{−iTdt} e^{−iVdt/2}. Rejects
 * grids that do not resolve the state in x or k, and steps whose phase per
 * step over the occupied band exceeds one radian.
 */
inline GridState evolve_grid(GridState s, const HamiltonianSpec& H, Real t, Real dt) {
  require(std::isfinite(t) && t >= 0.0, "evolve_grid: time must be finite and non-negative");
  require(dt > 0.0, "evolve_grid: dt must be positive");
  if (t == 0.0) return s;
  SpectralGrid sg(s.grid);
  detail::check_resolution(sg, s, "at start");
  const std::size_t nsteps = static_cast<std::size_t>(std::ceil(t / dt - 1e-12));
  const Real h = t / static_cast<Real>(nsteps);

  Real vmin = std::numeric_limits<Real>::infinity(), vmax = -vmin;
  std::vector<Real> V(s.grid.n);
  for (std::size_t i = 0; i < s.grid.n; ++i) {
    V[i] = H.potential(s.grid.node(i));
    if (std::norm(s.psi[i]) > 1e-14) {
      vmin = std::min(vmin, V[i]);
      vmax = std::max(vmax, V[i]);
    }
  }
  for (Real v : V)
    if (!std::isfinite(v)) throw ValidationError("evolve_grid: potential is not finite on the grid");
  const Real keff = sg.effective_k(s.psi);
  if (h * (0.5 * H.kinetic() * keff * keff + (vmax - vmin)) > 1.0) {
    std::ostringstream os;
    os << "evolve_grid: time step " << h << " too large for the occupied band (k_eff = " << keff
       << ", potential span " << vmax - vmin << ")";
    throw ValidationError(os.str());
  }
  std::vector<Complex> half(s.grid.n);
  for (std::size_t i = 0; i < s.grid.n; ++i) half[i] = std::exp(-0.5 * I_unit * h * V[i]);
  auto kin = [h, c = H.kinetic()](Real k) { return std::exp(-0.5 * I_unit * c * h * k * k); };
  for (std::size_t n = 0; n < nsteps; ++n) {
    for (std::size_t i = 0; i < s.grid.n; ++i) s.psi[i] *= half[i];
    sg.apply_multiplier(s.psi, kin);
    for (std::size_t i = 0; i < s.grid.n; ++i) s.psi[i] *= half[i];
  }
  detail::check_resolution(sg, s, "after propagation");
  return s;
}

/// Ĥψ with the kinetic term applied spectrally.
inline std::vector<Complex> apply_hamiltonian(SpectralGrid& sg, const GridState& s, const HamiltonianSpec& H) {
  std::vector<Complex> t = s.psi;
  sg.apply_multiplier(t, [c = H.kinetic()](Real k) { return Complex(0.5 * c * k * k); });
  for (std::size_t i = 0; i < t.size(); ++i) t[i] += H.potential(s.grid.node(i)) * s.psi[i];
  return t;
}

/// p̂ψ spectrally.
inline std::vector<Complex> apply_momentum(SpectralGrid& sg, const GridState& s) {
  std::vector<Complex> t = s.psi;
  sg.apply_multiplier(t, [](Real k) { return Complex(k); });
  return t;
}

namespace detail {
inline Complex grid_dot(const GridState& s, const std::vector<Complex>& a, const std::vector<Complex>& b) {
  KahanSum<Complex> acc;
  for (std::size_t i = 0; i < a.size(); ++i) acc += s.trap_weight(i) * std::conj(a[i]) * b[i];
  return acc.value();
}
}  // namespace detail

inline EnergyMoments energy_moments(const GridState& s, const HamiltonianSpec& H) {
  SpectralGrid sg(s.grid);
  const auto Hpsi = apply_hamiltonian(sg, s, H);
  const auto Ppsi = apply_momentum(sg, s);
  std::vector<Complex> Xpsi(s.psi.size());
  for (std::size_t i = 0; i < Xpsi.size(); ++i) Xpsi[i] = s.grid.node(i) * s.psi[i];
  const Real n = detail::grid_dot(s, s.psi, s.psi).real();
  EnergyMoments e;
  e.mean = detail::grid_dot(s, s.psi, Hpsi).real() / n;
  e.var = detail::grid_dot(s, Hpsi, Hpsi).real() / n - e.mean * e.mean;
  const Real mx = detail::grid_dot(s, s.psi, Xpsi).real() / n;
  const Real mp = detail::grid_dot(s, s.psi, Ppsi).real() / n;
  e.cov_x = detail::grid_dot(s, Xpsi, Hpsi).real() / n - mx * e.mean;
  e.cov_p = detail::grid_dot(s, Ppsi, Hpsi).real() / n - mp * e.mean;
  return e;
}

/// Options for the numerical path.
struct GridPropagation {
  Grid1D grid{-20.0, 20.0, 4096};
  Real dt = 1e-3;
};

/// Evolved state: closed-form packet when available, sampled grid state otherwise.
struct EvolvedState {
  std::variant<GaussianPacket, GridState> value;

  [[nodiscard]] bool analytic() const { return std::holds_alternative<GaussianPacket>(value); }
  [[nodiscard]] const GaussianPacket& packet() const { return std::get<GaussianPacket>(value); }
  [[nodiscard]] const GridState& grid() const { return std::get<GridState>(value); }

  [[nodiscard]] SecondMoments moments() const {
    return analytic() ? packet().moments() : grid_moments(grid());
  }
  [[nodiscard]] Real norm2() const { return analytic() ? packet().norm2() : grid().norm2(); }
};

/// |z, t⟩ = e^{−iĤt}|z⟩.
inline EvolvedState evolve(const WeylState& s, const HamiltonianSpec& H, Real t,
                           const std::optional<GridPropagation>& numeric = std::nullopt) {
  if (H.analytic() && !numeric) return {evolve(GaussianPacket::from(s), H, t)};
  const GridPropagation opt = numeric.value_or(GridPropagation{});
  auto gs = GridState::sample(opt.grid, [&](Real x) { return s.wavefunction(x); });
  return {evolve_grid(std::move(gs), H, t, opt.dt)};
}

/// Inner product of two evolved states; grid states must share a grid.
inline Complex inner(const EvolvedState& a, const EvolvedState& b) {
  if (a.analytic() && b.analytic()) return overlap(a.packet(), b.packet());
  require(!a.analytic() && !b.analytic(), "inner: mixed analytic and grid states");
  return inner(a.grid(), b.grid());
}

// -----------------------------------------------------------------------------
// Extended geometry
// -----------------------------------------------------------------------------

struct ExtendedGeometry {
  Real ds2_spatial = 0.0;
  std::array<Real, 2> C_EA{0.0, 0.0};
  Real dE2 = 0.0;
  Real ds2_bar = 0.0;
};

namespace detail {
// generator covariances in |z⟩ for Â_q = −p̂, Â_p = x̂ (constants drop out)
inline ExtendedGeometry extended_from(const SecondMoments& m, const EnergyMoments& e, PhasePoint dz, Real dt) {
  ExtendedGeometry x;
  const MetricComponents g = metric_from_moments(m);
  x.ds2_spatial = g.ds2(dz.q, dz.p);
  // C_EA_i = −Cov(Â_i, Ĥ)
  x.C_EA = {e.cov_p, -e.cov_x};
  x.dE2 = e.var;
  x.ds2_bar = x.ds2_spatial + 2.0 * (x.C_EA[0] * dz.q + x.C_EA[1] * dz.p) * dt + x.dE2 * dt * dt;
  return x;
}
}  // namespace detail

/**
 * δs̄² = Var(Â·δz − Ĥδt). The moments are those of |z⟩: conjugating every
 * operator by e^{−iĤt} leaves the extended metric independent of t.
 */
inline ExtendedGeometry extended_metric(const WeylState& s, const HamiltonianSpec& H, PhasePoint dz, Real dt,
                                        const std::optional<GridPropagation>& numeric = std::nullopt) {
  require(std::isfinite(dz.q) && std::isfinite(dz.p) && std::isfinite(dt), "extended_metric: non-finite displacement");
  if (H.analytic() && !numeric) {
    const auto g = GaussianPacket::from(s);
    return detail::extended_from(g.moments(), energy_moments(g, H), dz, dt);
  }
  const GridPropagation opt = numeric.value_or(GridPropagation{});
  auto gs = GridState::sample(opt.grid, [&](Real x) { return s.wavefunction(x); });
  const auto e = energy_moments(gs, H);
  if (!std::isfinite(e.var) || !std::isfinite(e.mean)) throw NumericalError("extended_metric: energy moments diverge");
  return detail::extended_from(grid_moments(gs), e, dz, dt);
}

/**
 * Family on (q, p, t): ⟨Z₁|Z₂⟩ = ⟨z₁|e^{−iĤ(t₂−t₁)}|z₂⟩, with closed-form
 * connection (0, q, −⟨Ĥ⟩), extended metric and Ω̄ = dq∧dp − dH∧dt.
 */
inline StateFamily extended_family(GaussianReference ref, const HamiltonianSpec& H) {
  require(H.analytic(), "extended_family: needs a free or harmonic Hamiltonian");
  StateFamily fam;
  fam.name = "weyl-extended";
  fam.dim = 3;
  fam.overlap = [ref, H](std::span<const Real> a, std::span<const Real> b) {
    const auto ga = GaussianPacket::from(WeylState{ref, {a[0], a[1]}});
    const auto gb = GaussianPacket::from(WeylState{ref, {b[0], b[1]}});
    return overlap(ga, evolve(gb, H, b[2] - a[2]));
  };
  AnalyticGeometry geo;
  geo.connection = [ref, H](std::span<const Real> z) {
    const auto e = energy_moments(GaussianPacket::from(WeylState{ref, {z[0], z[1]}}), H);
    Vec A(3);
    A << 0.0, z[0], -e.mean;
    return A;
  };
  geo.metric = [ref, H](std::span<const Real> z) {
    const auto g = GaussianPacket::from(WeylState{ref, {z[0], z[1]}});
    const auto x = detail::extended_from(g.moments(), energy_moments(g, H), {0, 0}, 0);
    const auto gs = metric_analytic(ref);
    Mat m(3, 3);
    m << gs.gqq, gs.gqp, x.C_EA[0], gs.gqp, gs.gpp, x.C_EA[1], x.C_EA[0], x.C_EA[1], x.dE2;
    return m;
  };
  geo.curvature = [H](std::span<const Real> z) {
    const auto dH = H.gradient({z[0], z[1]});
    Mat o = Mat::Zero(3, 3);
    o(0, 1) = 1.0;
    o(0, 2) = -dH[0];
    o(1, 2) = -dH[1];
    o(1, 0) = -o(0, 1);
    o(2, 0) = -o(0, 2);
    o(2, 1) = -o(1, 2);
    return o;
  };
  fam.analytic = geo;
  fam.fd_step = 1e-3;
  return fam;
}

// -----------------------------------------------------------------------------
// Action phase and energy decay
// -----------------------------------------------------------------------------

/// Parametric branch s ∈ [0, 1] -> (q, p, t) with t nondecreasing.
struct ExtendedCurve {
  std::function<std::array<Real, 3>(Real)> point;
  std::function<std::array<Real, 3>(Real)> tangent;
};

/// Classical HO/free flow from z over [t0, t1].
inline ExtendedCurve classical_branch(const HamiltonianSpec& H, PhasePoint z, Real t0, Real t1) {
  require(H.analytic(), "classical_branch: needs a free or harmonic Hamiltonian");
  ExtendedCurve c;
  const Real T = t1 - t0;
  auto flow = [H, z](Real tau) -> std::array<Real, 2> {
    if (H.kind == HamiltonianKind::zero) return {z.q, z.p};
    if (H.kind == HamiltonianKind::free) return {z.q + z.p * tau, z.p};
    const Real w = H.omega;
    return {z.q * std::cos(w * tau) + z.p / w * std::sin(w * tau), z.p * std::cos(w * tau) - z.q * w * std::sin(w * tau)};
  };
  c.point = [=](Real s) -> std::array<Real, 3> {
    auto f = flow(s * T);
    return {f[0], f[1], t0 + s * T};
  };
  c.tangent = [=](Real s) -> std::array<Real, 3> {
    auto f = flow(s * T);
    return {T * H.kinetic() * f[1], -T * H.w2() * f[0], T};
  };
  return c;
}

/// Straight segment between two extended points.
inline ExtendedCurve chord(ExtendedPoint a, ExtendedPoint b) {
  ExtendedCurve c;
  c.point = [=](Real s) -> std::array<Real, 3> {
    return {a.z.q + s * (b.z.q - a.z.q), a.z.p + s * (b.z.p - a.z.p), a.t + s * (b.t - a.t)};
  };
  c.tangent = [=](Real) -> std::array<Real, 3> { return {b.z.q - a.z.q, b.z.p - a.z.p, b.t - a.t}; };
  return c;
}

struct ActionPhase {
  std::size_t steps = 0;
  Real discrete = 0.0;  ///< unwrapped phase of d(α, β)
  Real action = 0.0;    ///< S = ∫_β Ā − ∫_α Ā by quadrature
  Real difference = 0.0;
};

namespace detail {
inline std::vector<ChartPoint> sample_branch(const ExtendedCurve& c, std::size_t n, const char* which) {
  std::vector<ChartPoint> pts(n + 1);
  for (std::size_t k = 0; k <= n; ++k) {
    const auto p = c.point(static_cast<Real>(k) / static_cast<Real>(n));
    pts[k] = {p[0], p[1], p[2]};
    if (k > 0 && pts[k][2] < pts[k - 1][2])
      throw ValidationError(std::string("action_phase: time decreases along the ") + which +
                            " branch (physical temporal ordering)");
  }
  return pts;
}

inline Real branch_integral(const StateFamily& fam, const ExtendedCurve& c, std::size_t order = 64) {
  const auto rule = gauss_legendre(order, 0.0, 1.0);
  KahanSum<Real> acc;
  for (std::size_t k = 0; k < rule.size(); ++k) {
    const auto p = c.point(rule.nodes[k]);
    const auto t = c.tangent(rule.nodes[k]);
    const ChartPoint z{p[0], p[1], p[2]};
    const Vec A = fam.analytic->connection(z);
    acc += rule.weights[k] * (A(0) * t[0] + A(1) * t[1] + A(2) * t[2]);
  }
  return acc.value();
}
}  // namespace detail

/**
 * Decoherence phase of the loop formed by two time-ordered branches with
 * common end points, against S = ∫_β Ā − ∫_α Ā, Ā = A − ⟨Ĥ⟩dt.
 */
inline ActionPhase action_phase(const StateFamily& extended, const ExtendedCurve& alpha, const ExtendedCurve& beta,
                                std::size_t steps) {
  require(extended.dim == 3 && extended.analytic, "action_phase: needs an extended family with closed forms");
  require(steps >= 1, "action_phase: need at least one step");
  const auto a = detail::sample_branch(alpha, steps, "forward");
  const auto b = detail::sample_branch(beta, steps, "backward");
  auto close = [](const ChartPoint& x, const ChartPoint& y) {
    for (std::size_t i = 0; i < 3; ++i)
      if (std::abs(x[i] - y[i]) > 1e-9 * std::max(1.0, std::abs(x[i]))) return false;
    return true;
  };
  require(close(a.front(), b.front()) && close(a.back(), b.back()), "action_phase: branches must share end points");

  const auto fam = share(extended);
  History ha(fam, std::vector<ChartPoint>(a.begin() + 1, a.end()));
  History hb(fam, std::vector<ChartPoint>(b.begin() + 1, b.end()));
  const auto d = decoherence({ha, hb, a.front()});
  ActionPhase r;
  r.steps = steps;
  r.discrete = d.phase;
  r.action = detail::branch_integral(extended, beta) - detail::branch_integral(extended, alpha);
  r.difference = std::abs(r.discrete - r.action);
  return r;
}

struct EnergyDecayProfile {
  Real neg_log_p = 0.0;
  Real energy_time = 0.0;  ///< Σ ΔE(z_k) δt
  std::vector<Real> dE;
  std::vector<Real> step_neg_log_p;
};

/**
 * History of projections onto |z_k⟩ at equally spaced times t_k; the
 * amplitude between successive projections is ⟨z_{k+1}|e^{−iĤδt}|z_k⟩.
 */
inline EnergyDecayProfile energy_decay_profile(const std::vector<ExtendedPoint>& history, GaussianReference ref,
                                               const HamiltonianSpec& H) {
  require(history.size() >= 1, "energy_decay_profile: empty history");
  require(H.analytic(), "energy_decay_profile: needs a free or harmonic Hamiltonian");
  Real dt0 = history.size() > 1 ? history[1].t - history[0].t : 0.0;
  for (std::size_t k = 1; k < history.size(); ++k) {
    const Real dt = history[k].t - history[k - 1].t;
    if (dt < 0.0) throw ValidationError("energy_decay_profile: times must be nondecreasing");
    require(std::abs(dt - dt0) <= 1e-9 * std::max(1.0, std::abs(dt0)), "energy_decay_profile: steps must be equal");
  }
  EnergyDecayProfile r;
  KahanSum<Real> nlp, et;
  for (std::size_t k = 0; k < history.size(); ++k) {
    const auto g = GaussianPacket::from(WeylState{ref, history[k].z});
    r.dE.push_back(std::sqrt(std::max(0.0, energy_moments(g, H).var)));
    if (k + 1 < history.size()) {
      const auto next = GaussianPacket::from(WeylState{ref, history[k + 1].z});
      const Real m = std::abs(overlap(next, evolve(g, H, dt0)));
      const Real step = -2.0 * std::log(m);
      r.step_neg_log_p.push_back(step);
      nlp += step;
      et += r.dE.back() * dt0;
    }
  }
  r.neg_log_p = nlp.value();
  r.energy_time = et.value();
  return r;
}

}  // namespace csgeom
