#pragma once

/**
 * @file pullback.hpp
 * @brief Connection, metric and curvature pulled back to the chart of a
 *        StateFamily, from finite differences of the overlap kernel or from the
 *        family's closed forms.
 *
 * Conventions: iA_i = ⟨z|∂_i z⟩, g_ij = Re⟨∂_i z|∂_j z⟩ − A_i A_j and
 * Ω_ij = ∂_i A_j − ∂_j A_i = 2 Im⟨∂_i z|∂_j z⟩.
 */

#include "family.hpp"
#include "numerics.hpp"

#include <cmath>
#include <limits>
#include <sstream>
#include <vector>

namespace csgeom {

enum class GeometryMethod { analytic, finite_difference };

inline std::string to_string(GeometryMethod m) {
  return m == GeometryMethod::analytic ? "analytic" : "finite-difference";
}

struct GeometryReport {
  ChartPoint point;
  Vec A;
  Mat g;
  Mat Omega;
  GeometryMethod method = GeometryMethod::finite_difference;
  /// |Re ⟨z|∂_i z⟩| left over by the FD connection; zero for exact overlaps.
  Real imag_residue = 0.0;
};

struct ExpansionCheck {
  ChartPoint point;
  ChartPoint delta;
  Real scale = 0.0;
  Complex lhs;
  Complex rhs;
  Real residual = 0.0;
};

struct ExpansionResult {
  std::vector<ExpansionCheck> rows;
  /// least-squares slope of log residual against log scale (+inf if exact)
  Real slope = 0.0;
  /// every residual sits at the roundoff floor: the expansion is exact
  bool exact = false;
};

/// How metric_fd differentiates the kernel.
enum class MetricStencil {
  cross_kernel,  ///< 4-point mixed stencil on K(z+a, z+b), minus A_iA_j
  log_modulus    ///< Hessian of −log|K(z, z+δ)| at δ = 0
};

namespace detail {

inline ChartPoint shifted(std::span<const Real> z, std::size_t i, Real hi) {
  ChartPoint v(z.begin(), z.end());
  v[i] += hi;
  return v;
}

inline ChartPoint shifted(std::span<const Real> z, std::size_t i, Real hi, std::size_t j, Real hj) {
  ChartPoint v(z.begin(), z.end());
  v[i] += hi;
  v[j] += hj;
  return v;
}

inline void check_point(const StateFamily& fam, std::span<const Real> z, Real h) {
  require(z.size() == fam.dim, "geometry: chart point has wrong dimension for family '" + fam.name + "'");
  require(h > 0.0 && std::isfinite(h), "geometry: FD step must be positive");
  for (Real v : z) require(std::isfinite(v), "geometry: non-finite chart point");
}

// ⟨z|∂_i z⟩ by a central difference of K(z, z ± h e_i).
inline Complex d_ket(const StateFamily& fam, std::span<const Real> z, std::size_t i, Real h) {
  const auto zp = shifted(z, i, h), zm = shifted(z, i, -h);
  return (fam(z, zp) - fam(z, zm)) / (2.0 * h);
}

// ⟨∂_i z|∂_j z⟩ by the 4-point mixed stencil.
inline Complex d_bra_d_ket(const StateFamily& fam, std::span<const Real> z, std::size_t i, std::size_t j, Real h) {
  const auto ip = shifted(z, i, h), im = shifted(z, i, -h);
  const auto jp = shifted(z, j, h), jm = shifted(z, j, -h);
  return (fam(ip, jp) - fam(ip, jm) - fam(im, jp) + fam(im, jm)) / (4.0 * h * h);
}

}  // namespace detail

/**
 * A_i = Im ∂_ε K(z, z + ε e_i) at ε = 0. The real part must vanish for a
 * normalized family up to the O(h²) truncation of the stencil; a residue above
 * (`noise_tol` + h²)·max(1,|A|) signals a non-smooth or noisy overlap and is
 * reported as NumericalError.
 */
inline Vec connection_fd(const StateFamily& fam, std::span<const Real> z, Real h, Real* residue = nullptr,
                         Real noise_tol = 1e-6) {
  detail::check_point(fam, z, h);
  Vec A(static_cast<Eigen::Index>(fam.dim));
  Real worst = 0.0;
  for (std::size_t i = 0; i < fam.dim; ++i) {
    const Complex d = detail::d_ket(fam, z, i, h);
    A(static_cast<Eigen::Index>(i)) = d.imag();
    worst = std::max(worst, std::abs(d.real()) / std::max(1.0, std::abs(d.imag())));
  }
  if (residue) *residue = worst;
  if (worst > noise_tol + h * h) {
    std::ostringstream os;
    os << "connection_fd: overlap of family '" << fam.name << "' is not smooth at step h = " << h
       << " (normalization-derivative residue " << worst << ")";
    throw NumericalError(os.str());
  }
  return A;
}

/// Metric from finite differences of the overlap, symmetrized.
inline Mat metric_fd(const StateFamily& fam, std::span<const Real> z, Real h,
                     MetricStencil stencil = MetricStencil::cross_kernel) {
  detail::check_point(fam, z, h);
  const auto n = static_cast<Eigen::Index>(fam.dim);
  Mat g(n, n);
  if (stencil == MetricStencil::cross_kernel) {
    const Vec A = connection_fd(fam, z, h, nullptr, std::numeric_limits<Real>::infinity());
    for (std::size_t i = 0; i < fam.dim; ++i)
      for (std::size_t j = i; j < fam.dim; ++j) {
        const Real gij = detail::d_bra_d_ket(fam, z, i, j, h).real() -
                         A(static_cast<Eigen::Index>(i)) * A(static_cast<Eigen::Index>(j));
        g(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = gij;
        g(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = gij;
      }
    return g;
  }
  const ChartPoint base(z.begin(), z.end());
  auto f = [&](const ChartPoint& w) { return -std::log(std::abs(fam(base, w))); };
  const Real f0 = f(base);
  for (std::size_t i = 0; i < fam.dim; ++i) {
    const Real gii = (f(detail::shifted(z, i, h)) - 2.0 * f0 + f(detail::shifted(z, i, -h))) / (h * h);
    g(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) = gii;
    for (std::size_t j = i + 1; j < fam.dim; ++j) {
      const Real gij = (f(detail::shifted(z, i, h, j, h)) - f(detail::shifted(z, i, h, j, -h)) -
                        f(detail::shifted(z, i, -h, j, h)) + f(detail::shifted(z, i, -h, j, -h))) /
                       (4.0 * h * h);
      g(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = gij;
      g(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = gij;
    }
  }
  return g;
}

/// Ω_ij = ∂_i A_j − ∂_j A_i by nested central differences of connection_fd.
inline Mat curvature_fd(const StateFamily& fam, std::span<const Real> z, Real h) {
  detail::check_point(fam, z, h);
  const auto n = static_cast<Eigen::Index>(fam.dim);
  const Real inf = std::numeric_limits<Real>::infinity();
  std::vector<Vec> Ap(fam.dim), Am(fam.dim);
  for (std::size_t i = 0; i < fam.dim; ++i) {
    Ap[i] = connection_fd(fam, detail::shifted(z, i, h), h, nullptr, inf);
    Am[i] = connection_fd(fam, detail::shifted(z, i, -h), h, nullptr, inf);
  }
  Mat O = Mat::Zero(n, n);
  for (std::size_t i = 0; i < fam.dim; ++i)
    for (std::size_t j = i + 1; j < fam.dim; ++j) {
      const auto ii = static_cast<Eigen::Index>(i), jj = static_cast<Eigen::Index>(j);
      const Real dAj_di = (Ap[i](jj) - Am[i](jj)) / (2.0 * h);
      const Real dAi_dj = (Ap[j](ii) - Am[j](ii)) / (2.0 * h);
      O(ii, jj) = dAj_di - dAi_dj;
      O(jj, ii) = -O(ii, jj);
    }
  return O;
}

/// Ω_ij = 2 Im⟨∂_i z|∂_j z⟩ from the mixed stencil (one derivative level).
inline Mat curvature_fd_kernel(const StateFamily& fam, std::span<const Real> z, Real h) {
  detail::check_point(fam, z, h);
  const auto n = static_cast<Eigen::Index>(fam.dim);
  Mat O = Mat::Zero(n, n);
  for (std::size_t i = 0; i < fam.dim; ++i)
    for (std::size_t j = i + 1; j < fam.dim; ++j) {
      const Real v = 2.0 * detail::d_bra_d_ket(fam, z, i, j, h).imag();
      O(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v;
      O(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = -v;
    }
  return O;
}

/// Largest |∂_i Ω_jk + ∂_j Ω_ki + ∂_k Ω_ij| over i<j<k; 0 when n < 3.
inline Real curvature_closedness_fd(const StateFamily& fam, std::span<const Real> z, Real h) {
  if (fam.dim < 3) return 0.0;
  std::vector<Mat> Op(fam.dim), Om(fam.dim);
  for (std::size_t i = 0; i < fam.dim; ++i) {
    Op[i] = curvature_fd_kernel(fam, detail::shifted(z, i, h), h);
    Om[i] = curvature_fd_kernel(fam, detail::shifted(z, i, -h), h);
  }
  auto d = [&](std::size_t i, std::size_t j, std::size_t k) {
    return (Op[i](static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k)) -
            Om[i](static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k))) /
           (2.0 * h);
  };
  Real worst = 0.0;
  for (std::size_t i = 0; i < fam.dim; ++i)
    for (std::size_t j = i + 1; j < fam.dim; ++j)
      for (std::size_t k = j + 1; k < fam.dim; ++k)
        worst = std::max(worst, std::abs(d(i, j, k) + d(j, k, i) + d(k, i, j)));
  return worst;
}

/// Full report at z, analytic when the family provides closed forms.
inline GeometryReport geometry(const StateFamily& fam, std::span<const Real> z,
                               GeometryMethod method = GeometryMethod::finite_difference, Real h = 0.0) {
  GeometryReport r;
  r.point.assign(z.begin(), z.end());
  if (method == GeometryMethod::analytic) {
    if (!fam.analytic) throw ValidationError("geometry: family '" + fam.name + "' has no closed forms");
    r.A = fam.analytic->connection(z);
    r.g = fam.analytic->metric(z);
    r.Omega = fam.analytic->curvature(z);
    r.method = GeometryMethod::analytic;
    return r;
  }
  if (h <= 0.0) h = fam.fd_step;
  r.A = connection_fd(fam, z, h, &r.imag_residue, std::numeric_limits<Real>::infinity());
  r.g = metric_fd(fam, z, h);
  r.Omega = curvature_fd(fam, z, h);
  r.method = GeometryMethod::finite_difference;
  return r;
}

/**
 * Compares ⟨z|z+sδ⟩ with exp(i A_i(z+sδ/2) sδ^i − ½ g_ij(z+sδ/2) s²δ^iδ^j)
 * for each scale s. Geometry comes from the family's closed forms when
 * present, from finite differences otherwise.
 */
inline ExpansionResult expansion_check(const StateFamily& fam, std::span<const Real> z, std::span<const Real> delta,
                                       std::span<const Real> scales, Real h = 0.0) {
  require(delta.size() == fam.dim && z.size() == fam.dim, "expansion_check: dimension mismatch");
  require(!scales.empty(), "expansion_check: need at least one scale");
  for (std::size_t k = 0; k < scales.size(); ++k) {
    require(scales[k] > 0.0, "expansion_check: scales must be positive");
    if (k > 0) require(scales[k] < scales[k - 1], "expansion_check: scales must be descending");
  }
  if (h <= 0.0) h = fam.fd_step;
  ExpansionResult out;
  const ChartPoint base(z.begin(), z.end());
  const Eigen::Index n = static_cast<Eigen::Index>(fam.dim);
  for (Real s : scales) {
    ExpansionCheck row;
    row.point = base;
    row.scale = s;
    row.delta.resize(fam.dim);
    ChartPoint mid(fam.dim), end(fam.dim);
    Vec d(n);
    for (std::size_t i = 0; i < fam.dim; ++i) {
      row.delta[i] = s * delta[i];
      mid[i] = base[i] + 0.5 * row.delta[i];
      end[i] = base[i] + row.delta[i];
      d(static_cast<Eigen::Index>(i)) = row.delta[i];
    }
    Vec A;
    Mat g;
    if (fam.analytic) {
      A = fam.analytic->connection(mid);
      g = fam.analytic->metric(mid);
    } else {
      A = connection_fd(fam, mid, h, nullptr, std::numeric_limits<Real>::infinity());
      g = metric_fd(fam, mid, h, MetricStencil::log_modulus);
    }
    row.lhs = fam(base, end);
    row.rhs = std::exp(I_unit * A.dot(d) - 0.5 * d.dot(g * d));
    row.residual = std::abs(row.lhs - row.rhs);
    out.rows.push_back(row);
  }
  // residuals at the roundoff floor carry no scaling information
  const Real floor = 64.0 * std::numeric_limits<Real>::epsilon();
  std::vector<Real> ls, lr;
  bool all_floor = true;
  for (const auto& r : out.rows) {
    if (r.residual > floor) {
      all_floor = false;
      ls.push_back(std::log(r.scale));
      lr.push_back(std::log(r.residual));
    }
  }
  if (all_floor) {
    out.exact = true;
    out.slope = std::numeric_limits<Real>::infinity();
  } else if (ls.size() >= 2) {
    out.slope = least_squares_slope(ls, lr);
  } else {
    out.slope = std::numeric_limits<Real>::quiet_NaN();
  }
  return out;
}

}  // namespace csgeom
