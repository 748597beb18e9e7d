#pragma once

/**
 * @file klauder.hpp
 * @brief Wiener-regularized coherent-state path integral at finite ν for the
 *        σ = 1 Weyl family: deterministic lattice transfer matrix, pinned
 *        Brownian-bridge Monte Carlo, and ν sweeps against exact propagators.
 *
 * One slice of length δτ carries the weight
 *   (1 + νδτ) · G_s(δq) G_s(δp) · exp(−i q̄ δp − i h(z̄) δτ),   s = 2νδτ,
 * where G_s is the normalized Gaussian of variance s, q̄ is the slice
 * midpoint and h is the upper symbol of Ĥ in σ = 1 coherent states. The
 * symbol is evaluated either on the nodes (½h(z_k) + ½h(z_{k+1}), default) or
 * at the slice midpoint; the latter picks up a bias of order νδτ per slice
 * from the bridge increments. The pinned element is 2π times the N-slice
 * chain from z′ to z.
 */

#include "dynamics.hpp"
#include "numerics.hpp"
#include "weyl.hpp"

#include <Eigen/Dense>

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>
#include <vector>

namespace csgeom {

enum class SymbolRule { node, midpoint };

struct LatticeConfig {
  Real q_lo = -8.0, q_hi = 8.0;
  Real p_lo = -8.0, p_hi = 8.0;
  std::size_t nq = 128, np = 128;
  std::size_t steps = 64;  ///< N
  Real time = pi / 2;
  Real nu = 4.0;
  SymbolRule rule = SymbolRule::node;
};

enum class PropagatorMethod { transfer_matrix, monte_carlo };

inline std::string to_string(PropagatorMethod m) {
  return m == PropagatorMethod::transfer_matrix ? "transfer-matrix" : "monte-carlo";
}

struct PropagatorEstimate {
  Complex value{};
  PropagatorMethod method = PropagatorMethod::transfer_matrix;
  Real std_error = 0.0;  ///< Monte Carlo only
  Real nu = 0.0;
  Complex exact{};
  Real rel_error = 0.0;
  std::size_t samples = 0;
  Real ess = 0.0;  ///< effective sample size |Σw|²/Σ|w|²
};

/// Exact ⟨z|e^{−iĤt}|z′⟩ for σ = 1 coherent states (closed-form packets).
inline Complex exact_propagator(const HamiltonianSpec& H, PhasePoint z, PhasePoint zp, Real t) {
  const GaussianReference unit(1.0);
  return overlap(GaussianPacket::from(WeylState{unit, z}), evolve(GaussianPacket::from(WeylState{unit, zp}), H, t));
}

namespace detail {

struct SliceParams {
  Real s, dtau, c, w2, kin;
  SymbolRule rule;
};

inline SliceParams slice_params(const LatticeConfig& cfg, const HamiltonianSpec& H) {
  const Real dtau = cfg.time / static_cast<Real>(cfg.steps);
  return {2.0 * cfg.nu * dtau, dtau, 1.0 + cfg.nu * dtau, H.w2(), H.kinetic(), cfg.rule};
}

/// upper symbol of κp²/2 + ω²x²/2 in σ = 1 coherent states
inline Real upper_symbol(Real q, Real p, Real w2, Real kin) {
  return 0.5 * kin * (p * p - 0.5) + 0.5 * w2 * (q * q - 0.5);
}

inline Real slice_symbol(const SliceParams& sp, Real q1, Real p1, Real q0, Real p0) {
  if (sp.rule == SymbolRule::midpoint) return upper_symbol(0.5 * (q1 + q0), 0.5 * (p1 + p0), sp.w2, sp.kin);
  return 0.5 * (upper_symbol(q1, p1, sp.w2, sp.kin) + upper_symbol(q0, p0, sp.w2, sp.kin));
}

/// one slice from (q0, p0) to (q1, p1), including the normalization factor
inline Complex slice(const SliceParams& sp, Real q1, Real p1, Real q0, Real p0) {
  const Real dq = q1 - q0, dp = p1 - p0, qm = 0.5 * (q1 + q0);
  const Real g = std::exp(-(dq * dq + dp * dp) / (2.0 * sp.s)) / (2.0 * pi * sp.s);
  return sp.c * g * std::exp(-I_unit * (qm * dp + slice_symbol(sp, q1, p1, q0, p0) * sp.dtau));
}

inline void validate(const LatticeConfig& cfg, const HamiltonianSpec& H) {
  require(H.analytic(), "klauder: needs a free or harmonic Hamiltonian (exact oracle)");
  require(cfg.nu > 0.0 && std::isfinite(cfg.nu), "klauder: nu must be positive");
  require(cfg.steps >= 1, "klauder: need at least one time step");
  require(cfg.time >= 0.0 && std::isfinite(cfg.time), "klauder: time must be non-negative");
}

inline void validate_lattice(const LatticeConfig& cfg, PhasePoint z, PhasePoint zp) {
  require(cfg.q_hi > cfg.q_lo && cfg.p_hi > cfg.p_lo, "klauder: empty lattice range");
  // state widths are 1/√2 in both q and p for σ = 1
  const Real margin = 8.0 / std::sqrt(2.0);
  auto covers = [margin](Real lo, Real hi, Real a, Real b) {
    return lo <= std::min(a, b) - margin && hi >= std::max(a, b) + margin;
  };
  if (!covers(cfg.q_lo, cfg.q_hi, z.q, zp.q) || !covers(cfg.p_lo, cfg.p_hi, z.p, zp.p))
    throw ValidationError("klauder: lattice range must cover the end states to 8 widths");
}

}  // namespace detail

/**
 * One slice acting on functions sampled on an nq × np phase-space lattice:
 * (K f)(z′) = Σ_z w · slice(z′ ← z) f(z). The Gaussian factorizes over q and
 * p once the symplectic phase −i(q + q′)(p′ − p)/2 is split into diagonal and
 * q p′, q′ p parts.
 *
 * Node rule: for fixed q̄ = (q + q′)/2 the p kernel G(p′ − p) e^{−i q̄ (p′ − p)}
 * is Toeplitz, so in the zero-padded Fourier variable of p the slice is one
 * nq × nq product per wavenumber, O(n³ log n) per slice. Midpoint rule: the
 * symbol's cross terms q q′, p p′ break the Toeplitz structure and are folded
 * into complex one-dimensional kernels; the slice is then a GEMM over q for
 * every target p′, O(n⁴).
 */
class SliceOperator {
 public:
  using CMat = Eigen::MatrixXcd;

  SliceOperator(const LatticeConfig& cfg, const HamiltonianSpec& H, unsigned threads = 1)
      : cfg_(cfg), sp_(detail::slice_params(cfg, H)), gq_(cfg.q_lo, cfg.q_hi, cfg.nq),
        gp_(cfg.p_lo, cfg.p_hi, cfg.np), threads_(threads) {
    detail::validate(cfg, H);
    require(cfg.time > 0.0, "klauder: slices need positive time");
    require(cfg.nq >= 8 && cfg.np >= 8, "klauder: lattice needs at least 8 nodes per axis");
    const Real width = std::sqrt(sp_.s);
    if (width < 2.0 * std::max(gq_.spacing, gp_.spacing)) {
      std::ostringstream os;
      os << "klauder: lattice too coarse: kernel width " << width << " < 2 spacings ("
         << std::max(gq_.spacing, gp_.spacing) << ")";
      throw ValidationError(os.str());
    }
    const auto nq = static_cast<Eigen::Index>(cfg.nq), np = static_cast<Eigen::Index>(cfg.np);
    q_ = gq_.nodes();
    p_ = gp_.nodes();
    mid_ = sp_.rule == SymbolRule::midpoint;
    norm1_ = 1.0 / std::sqrt(2.0 * pi * sp_.s);
    const Real xq = mid_ ? 0.25 * sp_.dtau * sp_.w2 : 0.0, xp = mid_ ? 0.25 * sp_.dtau * sp_.kin : 0.0;
    Gq_.resize(nq, nq);
    Gp_.resize(np, np);
    Eqp_.resize(nq, np);
    diag_.resize(nq, np);
    for (Eigen::Index a = 0; a < nq; ++a)
      for (Eigen::Index i = 0; i < nq; ++i) {
        const Real d = q_[a] - q_[i];
        Gq_(a, i) = norm1_ * gq_.spacing * std::exp(-d * d / (2.0 * sp_.s)) * std::exp(-I_unit * (xq * q_[a] * q_[i]));
      }
    for (Eigen::Index b = 0; b < np; ++b)
      for (Eigen::Index j = 0; j < np; ++j) {
        const Real d = p_[b] - p_[j];
        Gp_(b, j) = norm1_ * gp_.spacing * std::exp(-d * d / (2.0 * sp_.s)) * std::exp(-I_unit * (xp * p_[b] * p_[j]));
      }
    // per-node symbol factor: h/2 (node rule) or the diagonal part of h(midpoint) without its constant
    step_const_ = sp_.c * (mid_ ? std::exp(I_unit * (0.25 * (sp_.kin + sp_.w2) * sp_.dtau)) : Complex(1.0));
    for (Eigen::Index i = 0; i < nq; ++i)
      for (Eigen::Index j = 0; j < np; ++j) {
        Eqp_(i, j) = std::exp(0.5 * I_unit * q_[i] * p_[j]);
        const Real h = mid_ ? (sp_.kin * p_[j] * p_[j] + sp_.w2 * q_[i] * q_[i]) / 8.0
                            : 0.5 * detail::upper_symbol(q_[i], p_[j], sp_.w2, sp_.kin);
        diag_(i, j) = std::exp(-I_unit * sp_.dtau * h);
      }
    if (!mid_) init_toeplitz();
  }
  SliceOperator(const SliceOperator&) = delete;
  SliceOperator& operator=(const SliceOperator&) = delete;
  ~SliceOperator() {
    if (fwd_) fftw_destroy_plan(fwd_);
    if (bwd_) fftw_destroy_plan(bwd_);
  }

  [[nodiscard]] const Grid1D& q_grid() const { return gq_; }
  [[nodiscard]] const Grid1D& p_grid() const { return gp_; }
  [[nodiscard]] Real cell() const { return gq_.spacing * gp_.spacing; }

  /// f(z) = slice(z ← z₀) on the lattice
  [[nodiscard]] CMat from_point(PhasePoint z0) const {
    CMat f(static_cast<Eigen::Index>(cfg_.nq), static_cast<Eigen::Index>(cfg_.np));
    for (Eigen::Index i = 0; i < f.rows(); ++i)
      for (Eigen::Index j = 0; j < f.cols(); ++j) f(i, j) = detail::slice(sp_, q_[i], p_[j], z0.q, z0.p);
    return f;
  }

  /// Σ_z w · slice(z₁ ← z) f(z)
  [[nodiscard]] Complex to_point(const CMat& f, PhasePoint z1) const {
    KahanSum<Complex> acc;
    for (Eigen::Index i = 0; i < f.rows(); ++i)
      for (Eigen::Index j = 0; j < f.cols(); ++j) acc += f(i, j) * detail::slice(sp_, z1.q, z1.p, q_[i], p_[j]);
    return cell() * acc.value();
  }

  [[nodiscard]] CMat apply(const CMat& f) {
    require(f.rows() == static_cast<Eigen::Index>(cfg_.nq) && f.cols() == static_cast<Eigen::Index>(cfg_.np),
            "SliceOperator: lattice shape mismatch");
    return mid_ ? apply_gemm(f) : apply_toeplitz(f);
  }

  /// lattice L² norm² Σ|f|² dq dp
  [[nodiscard]] Real norm2(const CMat& f) const { return cell() * f.squaredNorm(); }

 private:
  CMat apply_gemm(const CMat& f) const {
    const auto nq = static_cast<Eigen::Index>(cfg_.nq), np = static_cast<Eigen::Index>(cfg_.np);
    const std::size_t nblocks = std::max<std::size_t>(1, std::min<std::size_t>(threads_, cfg_.np));
    // source factors: symbol and e^{+iqp/2}
    const CMat ft = f.cwiseProduct(diag_).cwiseProduct(Eqp_);
    auto cols = run_batches(nblocks, threads_, [&](std::size_t blk) {
      const Eigen::Index b0 = static_cast<Eigen::Index>(blk * cfg_.np / nblocks);
      const Eigen::Index b1 = static_cast<Eigen::Index>((blk + 1) * cfg_.np / nblocks);
      const Eigen::Index nb = b1 - b0;
      // stacked sources e^{−i q p′/2} f̃(q, p) for every target p′ of the block
      CMat X(nq, np * nb);
      for (Eigen::Index b = b0; b < b1; ++b)
        X.middleCols((b - b0) * np, np) = Eqp_.col(b).conjugate().asDiagonal() * ft;
      const CMat S = Gq_ * X;
      CMat out(nq, nb);
      for (Eigen::Index b = b0; b < b1; ++b)
        out.col(b - b0) = S.middleCols((b - b0) * np, np).cwiseProduct(Eqp_) * Gp_.row(b).transpose();
      return out;
    });
    CMat g(nq, np);
    for (std::size_t blk = 0; blk < nblocks; ++blk) {
      const Eigen::Index b0 = static_cast<Eigen::Index>(blk * cfg_.np / nblocks);
      g.middleCols(b0, cols[blk].cols()) = cols[blk];
    }
    return g.cwiseProduct(Eqp_.conjugate()).cwiseProduct(diag_) * step_const_;
  }

  void init_toeplitz() {
    const std::size_t n = cfg_.nq, m = cfg_.np, M = 2 * m, nbar = 2 * n - 1;
    buf_.assign(M, Complex{});
    F_.assign(M * n, Complex{});
    N_.assign(n * M, Complex{});
    T_.assign(M * nbar, Complex{});
    GqR_ = Gq_.real();
    auto* bp = reinterpret_cast<fftw_complex*>(buf_.data());
    fwd_ = fftw_plan_dft_1d(static_cast<int>(M), bp, bp, FFTW_FORWARD, FFTW_ESTIMATE | FFTW_UNALIGNED);
    bwd_ = fftw_plan_dft_1d(static_cast<int>(M), bp, bp, FFTW_BACKWARD, FFTW_ESTIMATE | FFTW_UNALIGNED);
    // transformed p kernels for every q̄ on the half-spacing grid
    for (std::size_t c = 0; c < nbar; ++c) {
      const Real qbar = gq_.lo + 0.5 * gq_.spacing * static_cast<Real>(c);
      std::fill(buf_.begin(), buf_.end(), Complex{});
      for (std::size_t u = 0; u < m; ++u) {
        const Real du = gp_.spacing * static_cast<Real>(u);
        const Real g = norm1_ * gp_.spacing * std::exp(-du * du / (2.0 * sp_.s));
        buf_[u] = g * std::exp(-I_unit * qbar * du);
        if (u > 0) buf_[M - u] = g * std::exp(I_unit * qbar * du);
      }
      fftw_execute_dft(fwd_, bp, bp);
      for (std::size_t k = 0; k < M; ++k) T_[k * nbar + c] = buf_[k];
    }
  }

  CMat apply_toeplitz(const CMat& f) {
    const std::size_t n = cfg_.nq, m = cfg_.np, M = 2 * m, nbar = 2 * n - 1;
    auto* bp = reinterpret_cast<fftw_complex*>(buf_.data());
    auto at = [](std::size_t i, std::size_t j) {
      return std::pair{static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)};
    };
    for (std::size_t i = 0; i < n; ++i) {
      std::fill(buf_.begin(), buf_.end(), Complex{});
      for (std::size_t j = 0; j < m; ++j) {
        const auto [ii, jj] = at(i, j);
        buf_[j] = f(ii, jj) * diag_(ii, jj);
      }
      fftw_execute_dft(fwd_, bp, bp);
      for (std::size_t k = 0; k < M; ++k) F_[k * n + i] = buf_[k];
    }
    const std::size_t nblocks = std::max<std::size_t>(1, std::min<std::size_t>(threads_, M));
    run_batches(nblocks, threads_, [&](std::size_t blk) {
      for (std::size_t k = blk * M / nblocks; k < (blk + 1) * M / nblocks; ++k) {
        const Complex* Tk = &T_[k * nbar];
        const Complex* Fk = &F_[k * n];
        for (std::size_t a = 0; a < n; ++a) {
          const Real* g = GqR_.data() + a;  // column-major: stride n along i
          Complex acc{};
          for (std::size_t i = 0; i < n; ++i) acc += g[i * n] * Tk[a + i] * Fk[i];
          N_[a * M + k] = acc;
        }
      }
      return 0;
    });
    CMat out(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m));
    const Real invM = 1.0 / static_cast<Real>(M);
    for (std::size_t a = 0; a < n; ++a) {
      std::copy_n(N_.begin() + static_cast<std::ptrdiff_t>(a * M), M, buf_.begin());
      fftw_execute_dft(bwd_, bp, bp);
      for (std::size_t j = 0; j < m; ++j) {
        const auto [aa, jj] = at(a, j);
        out(aa, jj) = buf_[j] * invM * diag_(aa, jj) * step_const_;
      }
    }
    return out;
  }

  LatticeConfig cfg_;
  detail::SliceParams sp_;
  Grid1D gq_, gp_;
  unsigned threads_;
  std::vector<Real> q_, p_;
  bool mid_ = false;
  Real norm1_ = 0.0;
  Complex step_const_{};
  CMat Gq_, Gp_, Eqp_, diag_;
  Eigen::MatrixXd GqR_;
  std::vector<Complex> buf_, F_, N_, T_;
  fftw_plan fwd_ = nullptr;
  fftw_plan bwd_ = nullptr;
};

/// Pinned matrix element from N slices: start point -> lattice -> ... -> end point.
inline PropagatorEstimate transfer_matrix(const LatticeConfig& cfg, const HamiltonianSpec& H, PhasePoint z,
                                          PhasePoint zp, unsigned threads = 1) {
  detail::validate(cfg, H);
  PropagatorEstimate est;
  est.method = PropagatorMethod::transfer_matrix;
  est.nu = cfg.nu;
  est.exact = exact_propagator(H, z, zp, cfg.time);
  if (cfg.time == 0.0) {
    // no slices: the propagator at t = 0 is the identity, pinned to the overlap
    est.value = overlap(WeylState{GaussianReference(1.0), z}, WeylState{GaussianReference(1.0), zp});
  } else if (cfg.steps == 1) {
    est.value = 2.0 * pi * detail::slice(detail::slice_params(cfg, H), z.q, z.p, zp.q, zp.p);
  } else {
    detail::validate_lattice(cfg, z, zp);
    SliceOperator K(cfg, H, threads);
    SliceOperator::CMat f = K.from_point(zp);
    for (std::size_t k = 1; k + 1 < cfg.steps; ++k) f = K.apply(f);
    est.value = 2.0 * pi * K.to_point(f, z);
  }
  if (!std::isfinite(est.value.real()) || !std::isfinite(est.value.imag()))
    throw NumericalError("klauder: transfer matrix produced a non-finite value");
  est.rel_error = std::abs(est.value - est.exact) / std::abs(est.exact);
  return est;
}

/**
 * Averages exp(−i Σ q̄ δp − i Σ h(z̄) δτ) over pinned bridges with per-slice
 * variance 2νδτ; the prefactor is 2π (1 + νδτ)^N times the Gaussian density
 * of the total displacement. Standard error from batch means.
 */
inline PropagatorEstimate mc_estimate(const LatticeConfig& cfg, const HamiltonianSpec& H, PhasePoint z, PhasePoint zp,
                                      std::size_t samples, RngSeed seed, unsigned threads = 1,
                                      std::size_t batches = 20) {
  detail::validate(cfg, H);
  require(samples >= 1000, "mc_estimate: need at least 1000 samples");
  require(batches >= 2 && samples % batches == 0, "mc_estimate: samples must split evenly into >= 2 batches");
  require(cfg.time > 0.0, "mc_estimate: time must be positive");
  const auto sp = detail::slice_params(cfg, H);
  const std::size_t per = samples / batches;
  const std::vector<Real> a{zp.q, zp.p}, b{z.q, z.p};

  struct Batch {
    Complex sum{};
  };
  auto res = run_batches(batches, threads, [&](std::size_t bi) {
    auto eng = make_engine(seed, bi);
    KahanSum<Complex> s;
    for (std::size_t m = 0; m < per; ++m) {
      const Path path = brownian_bridge(a, b, cfg.steps, 2.0 * cfg.nu, eng, cfg.time);
      Real phase = 0.0;
      for (std::size_t k = 0; k + 1 < path.size(); ++k) {
        const Real qm = 0.5 * (path[k][0] + path[k + 1][0]);
        phase -= qm * (path[k + 1][1] - path[k][1]) +
                 detail::slice_symbol(sp, path[k + 1][0], path[k + 1][1], path[k][0], path[k][1]) * sp.dtau;
      }
      s += std::exp(I_unit * phase);
    }
    return Batch{s.value()};
  });

  KahanSum<Complex> tot;
  for (const auto& r : res) tot += r.sum;
  const Complex mean = tot.value() / static_cast<Real>(samples);
  Real var = 0.0;
  for (const auto& r : res) var += std::norm(r.sum / static_cast<Real>(per) - mean);
  var /= static_cast<Real>(batches - 1);

  PropagatorEstimate est;
  est.method = PropagatorMethod::monte_carlo;
  est.nu = cfg.nu;
  est.samples = samples;
  est.ess = static_cast<Real>(samples) * std::norm(mean);  // unit-modulus weights
  if (est.ess < 10.0) {
    std::ostringstream os;
    os << "mc_estimate: effective sample size " << est.ess << " < 10 (oscillatory collapse at nu = " << cfg.nu << ")";
    throw NumericalError(os.str());
  }
  const Real T = static_cast<Real>(cfg.steps) * sp.s;  // total variance per coordinate
  const Real d2 = (z.q - zp.q) * (z.q - zp.q) + (z.p - zp.p) * (z.p - zp.p);
  const Real pre = 2.0 * pi * std::pow(sp.c, static_cast<Real>(cfg.steps)) * std::exp(-d2 / (2.0 * T)) / (2.0 * pi * T);
  est.value = pre * mean;
  est.std_error = pre * std::sqrt(var / static_cast<Real>(batches));
  est.exact = exact_propagator(H, z, zp, cfg.time);
  est.rel_error = std::abs(est.value - est.exact) / std::abs(est.exact);
  return est;
}

struct SweepRow {
  Real nu = 0.0;
  PropagatorEstimate estimate;
};

struct NuSweep {
  std::vector<SweepRow> rows;
  bool monotone = false;  ///< rel-error strictly decreasing in ν
  Complex extrapolated{};  ///< linear extrapolation in 1/ν from the last two rows
};

inline NuSweep nu_sweep(const std::vector<LatticeConfig>& cfgs, const HamiltonianSpec& H, PhasePoint z, PhasePoint zp,
                        unsigned threads = 1) {
  require(cfgs.size() >= 3, "nu_sweep: need at least three nu values");
  for (std::size_t k = 1; k < cfgs.size(); ++k)
    require(cfgs[k].nu > cfgs[k - 1].nu, "nu_sweep: configurations must ascend in nu");
  NuSweep out;
  for (const auto& c : cfgs) out.rows.push_back({c.nu, transfer_matrix(c, H, z, zp, threads)});
  out.monotone = true;
  for (std::size_t k = 1; k < out.rows.size(); ++k) {
    const Real prev = out.rows[k - 1].estimate.rel_error, cur = out.rows[k].estimate.rel_error;
    // rows already at round-off count as converged
    if (!(cur < prev) && !(cur < 1e-12 && prev < 1e-12)) out.monotone = false;
  }
  const auto& r1 = out.rows[out.rows.size() - 2];
  const auto& r2 = out.rows.back();
  const Real x1 = 1.0 / r1.nu, x2 = 1.0 / r2.nu;
  out.extrapolated = r2.estimate.value + (r2.estimate.value - r1.estimate.value) * (x2 / (x1 - x2));
  return out;
}

}  // namespace csgeom
