#pragma once

/**
 * @file numerics.hpp
 * @brief Deterministic numerical substrate: grids, quadrature rules, finite
 *        differences, compensated reductions and seeded Brownian bridges.
 *
 * Everything here is a value type or a pure function. Reductions are
 * performed left to right with Neumaier compensation so that repeated runs
 * with the same inputs are bit-identical on one platform.
 */

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <random>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace csgeom {

using Real = double;
using Complex = std::complex<double>;

inline constexpr Real pi = std::numbers::pi;
inline constexpr Complex I_unit{0.0, 1.0};

/// Raised when parameters violate a documented precondition.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when a computation cannot produce a trustworthy number.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& what) {
  if (!cond) throw ValidationError(what);
}

// -----------------------------------------------------------------------------
// Compensated summation
// -----------------------------------------------------------------------------

/// Neumaier-compensated accumulator. Works for Real and Complex.
template <typename T>
class KahanSum {
 public:
  KahanSum() = default;
  explicit KahanSum(T init) : sum_(init) {}

  KahanSum& operator+=(T x) {
    add(x);
    return *this;
  }
  KahanSum& operator-=(T x) {
    add(-x);
    return *this;
  }
  [[nodiscard]] T value() const { return sum_ + comp_; }

 private:
  void add(T x) {
    if constexpr (std::is_same_v<T, Complex>) {
      Real re = sum_.real(), ce = comp_.real();
      Real im = sum_.imag(), ci = comp_.imag();
      step(re, ce, x.real());
      step(im, ci, x.imag());
      sum_ = {re, im};
      comp_ = {ce, ci};
    } else {
      step(sum_, comp_, x);
    }
  }
  static void step(Real& s, Real& c, Real x) {
    Real t = s + x;
    if (std::abs(s) >= std::abs(x))
      c += (s - t) + x;
    else
      c += (x - t) + s;
    s = t;
  }

  T sum_{};
  T comp_{};
};

template <typename Range>
auto compensated_sum(const Range& r) {
  using T = std::decay_t<decltype(*std::begin(r))>;
  KahanSum<T> acc;
  for (const auto& x : r) acc += x;
  return acc.value();
}

// -----------------------------------------------------------------------------
// Grids and quadrature
// -----------------------------------------------------------------------------

/// Uniform grid with n nodes covering [lo, hi] inclusive.
struct Grid1D {
  Real lo;
  Real hi;
  std::size_t n;
  Real spacing;

  Grid1D(Real lo_, Real hi_, std::size_t n_) : lo(lo_), hi(hi_), n(n_), spacing(0.0) {
    require(n >= 2, "Grid1D: need at least two nodes");
    require(hi > lo, "Grid1D: hi must exceed lo");
    require(std::isfinite(lo) && std::isfinite(hi), "Grid1D: non-finite bounds");
    spacing = (hi - lo) / static_cast<Real>(n - 1);
  }

  [[nodiscard]] Real node(std::size_t i) const { return lo + spacing * static_cast<Real>(i); }

  [[nodiscard]] std::vector<Real> nodes() const {
    std::vector<Real> x(n);
    for (std::size_t i = 0; i < n; ++i) x[i] = node(i);
    return x;
  }
};

enum class QuadratureKind { gauss_hermite, gauss_legendre, tanh_sinh };

inline std::string to_string(QuadratureKind k) {
  switch (k) {
    case QuadratureKind::gauss_hermite: return "gauss-hermite";
    case QuadratureKind::gauss_legendre: return "gauss-legendre";
    case QuadratureKind::tanh_sinh: return "tanh-sinh";
  }
  return "?";
}

struct QuadratureRule {
  QuadratureKind kind;
  std::vector<Real> nodes;
  std::vector<Real> weights;

  [[nodiscard]] std::size_t size() const { return nodes.size(); }
};

namespace detail {

// Eigenvalues of the symmetric Jacobi matrix with zero diagonal and the given
// off-diagonal; used as starting points for Newton polishing.
inline std::vector<Real> jacobi_eigenvalues(const std::vector<Real>& offdiag, std::size_t n) {
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i + 1 < n; ++i) {
    J(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i + 1)) = offdiag[i];
    J(static_cast<Eigen::Index>(i + 1), static_cast<Eigen::Index>(i)) = offdiag[i];
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J, Eigen::EigenvaluesOnly);
  std::vector<Real> ev(n);
  for (std::size_t i = 0; i < n; ++i) ev[i] = es.eigenvalues()(static_cast<Eigen::Index>(i));
  return ev;
}

}  // namespace detail

/**
 * Gauss–Hermite rule for weight e^{-x^2}. Nodes come from the Jacobi matrix
 * and are polished by Newton iteration on orthonormal Hermite polynomials, so
 * weights keep full relative accuracy in the tails.
 */
inline QuadratureRule gauss_hermite(std::size_t n) {
  require(n >= 1, "gauss_hermite: n must be positive");
  std::vector<Real> off(n > 0 ? n - 1 : 0);
  for (std::size_t k = 1; k < n; ++k) off[k - 1] = std::sqrt(static_cast<Real>(k) / 2.0);
  std::vector<Real> x = detail::jacobi_eigenvalues(off, n);
  std::vector<Real> w(n);
  const Real p0 = std::pow(pi, -0.25);
  for (std::size_t i = 0; i < n; ++i) {
    Real xi = x[i];
    Real pn = 0.0, pn1 = 0.0;
    for (int iter = 0; iter < 8; ++iter) {
      Real pm1 = 0.0, p = p0;
      for (std::size_t j = 1; j <= n; ++j) {
        Real pj = xi * std::sqrt(2.0 / static_cast<Real>(j)) * p -
                  std::sqrt(static_cast<Real>(j - 1) / static_cast<Real>(j)) * pm1;
        pm1 = p;
        p = pj;
      }
      pn = p;
      pn1 = pm1;
      Real dp = std::sqrt(2.0 * static_cast<Real>(n)) * pn1;
      Real dx = pn / dp;
      xi -= dx;
      if (std::abs(dx) < 1e-16 * (1.0 + std::abs(xi))) break;
    }
    x[i] = xi;
    Real dp = std::sqrt(2.0 * static_cast<Real>(n)) * pn1;
    w[i] = 2.0 / (dp * dp);
  }
  return {QuadratureKind::gauss_hermite, std::move(x), std::move(w)};
}

/// Gauss–Legendre rule mapped to [a, b].
inline QuadratureRule gauss_legendre(std::size_t n, Real a = -1.0, Real b = 1.0) {
  require(n >= 1, "gauss_legendre: n must be positive");
  require(b > a, "gauss_legendre: empty interval");
  std::vector<Real> off(n > 0 ? n - 1 : 0);
  for (std::size_t k = 1; k < n; ++k) {
    Real kk = static_cast<Real>(k);
    off[k - 1] = kk / std::sqrt(4.0 * kk * kk - 1.0);
  }
  std::vector<Real> x = detail::jacobi_eigenvalues(off, n);
  std::vector<Real> w(n);
  for (std::size_t i = 0; i < n; ++i) {
    Real xi = x[i];
    Real dp = 1.0;
    for (int iter = 0; iter < 8; ++iter) {
      Real pm1 = 1.0, p = xi;
      if (n == 1) {
        p = xi;
        pm1 = 1.0;
      } else {
        for (std::size_t j = 2; j <= n; ++j) {
          Real jj = static_cast<Real>(j);
          Real pj = ((2.0 * jj - 1.0) * xi * p - (jj - 1.0) * pm1) / jj;
          pm1 = p;
          p = pj;
        }
      }
      dp = static_cast<Real>(n) * (xi * p - pm1) / (xi * xi - 1.0);
      Real dx = p / dp;
      xi -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    x[i] = xi;
    w[i] = 2.0 / ((1.0 - xi * xi) * dp * dp);
  }
  const Real half = 0.5 * (b - a), mid = 0.5 * (a + b);
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = mid + half * x[i];
    w[i] *= half;
  }
  return {QuadratureKind::gauss_legendre, std::move(x), std::move(w)};
}

/**
 * Fixed-level tanh-sinh rule on [a, b] with 2m+1 nodes and step h.
 * Nodes that round onto an endpoint are dropped.
 */
inline QuadratureRule tanh_sinh(Real a, Real b, std::size_t m = 60, Real h = 0.0) {
  require(b > a, "tanh_sinh: empty interval");
  require(m >= 1, "tanh_sinh: m must be positive");
  if (h <= 0.0) h = 4.0 / static_cast<Real>(m);
  const Real half = 0.5 * (b - a);
  std::vector<Real> x, w;
  x.reserve(2 * m + 1);
  w.reserve(2 * m + 1);
  for (long k = -static_cast<long>(m); k <= static_cast<long>(m); ++k) {
    Real t = h * static_cast<Real>(k);
    Real u = 0.5 * pi * std::sinh(t);
    Real ch = std::cosh(u);
    // 1 - tanh(u) evaluated without cancellation
    Real one_minus = 1.0 / (std::exp(u) * ch);
    Real xi = std::tanh(u);
    Real wi = h * 0.5 * pi * std::cosh(t) / (ch * ch);
    Real node = (xi >= 0.0) ? b - half * one_minus : a + half * (1.0 / (std::exp(-u) * ch));
    if (!(node > a && node < b) || wi * half < 1e-300) continue;
    x.push_back(node);
    w.push_back(wi * half);
  }
  return {QuadratureKind::tanh_sinh, std::move(x), std::move(w)};
}

/// Σ w_k f(x_k), compensated, left to right.
template <typename F>
Complex integrate_1d(F&& f, const QuadratureRule& rule) {
  KahanSum<Complex> acc;
  for (std::size_t k = 0; k < rule.size(); ++k) {
    Complex v = Complex(f(rule.nodes[k]));
    if (!std::isfinite(v.real()) || !std::isfinite(v.imag())) {
      std::ostringstream os;
      os << "integrate_1d: non-finite integrand at node " << k << " (x = " << rule.nodes[k] << ")";
      throw NumericalError(os.str());
    }
    acc += rule.weights[k] * v;
  }
  return acc.value();
}

// -----------------------------------------------------------------------------
// Finite differences
// -----------------------------------------------------------------------------

inline Real default_fd_step(Real coordinate) { return 1e-4 * (1.0 + std::abs(coordinate)); }

/**
 * Central difference of order 1 or 2 along axis `dir`.
 * Steps below 1e3·eps·max(1,|x_dir|) are rejected as "step too small".
 */
template <typename F>
Complex fd_derivative(F&& f, std::span<const Real> point, std::size_t dir, Real h, int order) {
  require(dir < point.size(), "fd_derivative: direction out of range");
  require(order == 1 || order == 2, "fd_derivative: order must be 1 or 2");
  require(h > 0.0, "fd_derivative: h must be positive");
  const Real scale = std::max(1.0, std::abs(point[dir]));
  if (h < 1e3 * std::numeric_limits<Real>::epsilon() * scale)
    throw ValidationError("fd_derivative: step too small");
  std::vector<Real> zp(point.begin(), point.end()), zm(point.begin(), point.end());
  zp[dir] += h;
  zm[dir] -= h;
  const Complex fp = Complex(f(std::span<const Real>(zp)));
  const Complex fm = Complex(f(std::span<const Real>(zm)));
  if (order == 1) return (fp - fm) / (2.0 * h);
  const Complex f0 = Complex(f(point));
  return (fp - 2.0 * f0 + fm) / (h * h);
}

/// Least-squares slope of y against x.
inline Real least_squares_slope(std::span<const Real> x, std::span<const Real> y) {
  require(x.size() == y.size() && x.size() >= 2, "least_squares_slope: need >= 2 paired samples");
  const Real n = static_cast<Real>(x.size());
  Real mx = compensated_sum(x) / n, my = compensated_sum(y) / n;
  KahanSum<Real> sxy, sxx;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  return sxy.value() / sxx.value();
}

// -----------------------------------------------------------------------------
// Randomness
// -----------------------------------------------------------------------------

struct RngSeed {
  std::uint64_t seed = 0;
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Independent engine for (seed, stream); streams are used per batch/worker.
inline std::mt19937_64 make_engine(RngSeed seed, std::uint64_t stream = 0) {
  return std::mt19937_64(splitmix64(seed.seed ^ splitmix64(stream + 0x5851f42d4c957f2dULL)));
}

using Path = std::vector<std::vector<Real>>;

/**
 * Pinned Brownian bridge from z0 (τ = 0) to z1 (τ = total_time) with
 * `steps` equal slices. Each coordinate diffuses with variance
 * `variance_rate · τ`; the bridge is built from a free walk W by
 * B_k = W_k − (k/N) W_N, which has the exact bridge covariance.
 */
template <typename Engine>
Path brownian_bridge(std::span<const Real> z0, std::span<const Real> z1, std::size_t steps,
                     Real variance_rate, Engine& eng, Real total_time = 1.0) {
  require(steps >= 1, "brownian_bridge: steps must be >= 1");
  require(variance_rate > 0.0, "brownian_bridge: variance rate must be positive");
  require(total_time > 0.0, "brownian_bridge: total time must be positive");
  require(z0.size() == z1.size(), "brownian_bridge: endpoint dimension mismatch");
  const std::size_t dim = z0.size();
  Path path(steps + 1, std::vector<Real>(dim));
  const Real sd = std::sqrt(variance_rate * total_time / static_cast<Real>(steps));
  std::normal_distribution<Real> normal(0.0, 1.0);
  std::vector<Real> w(dim, 0.0);
  for (std::size_t k = 1; k <= steps; ++k) {
    for (std::size_t d = 0; d < dim; ++d) {
      w[d] += sd * normal(eng);
      path[k][d] = w[d];
    }
  }
  const Real N = static_cast<Real>(steps);
  for (std::size_t k = 0; k <= steps; ++k) {
    const Real s = static_cast<Real>(k) / N;
    for (std::size_t d = 0; d < dim; ++d) {
      Real bridge = (k == 0 || k == steps) ? 0.0 : path[k][d] - s * w[d];
      path[k][d] = (1.0 - s) * z0[d] + s * z1[d] + bridge;
    }
  }
  return path;
}

// -----------------------------------------------------------------------------
// Deterministic batch execution
// -----------------------------------------------------------------------------

/**
 * Runs fn(b) for b in [0, nbatches) on up to `threads` workers and returns
 * the results indexed by batch, so the caller's reduction order never depends
 * on scheduling.
 */
template <typename Fn>
auto run_batches(std::size_t nbatches, unsigned threads, Fn&& fn) {
  using R = std::invoke_result_t<Fn&, std::size_t>;
  std::vector<R> out(nbatches);
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(nbatches, 1))));
  if (threads == 1) {
    for (std::size_t b = 0; b < nbatches; ++b) out[b] = fn(b);
    return out;
  }
  std::vector<std::thread> pool;
  for (unsigned t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      for (std::size_t b = t; b < nbatches; b += threads) out[b] = fn(b);
    });
  }
  for (auto& th : pool) th.join();
  return out;
}

}  // namespace csgeom
