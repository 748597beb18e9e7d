#pragma once

#include "numerics.hpp"

#include <Eigen/Dense>

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace csgeom {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using ChartPoint = std::vector<Real>;

/// Closed-form geometry supplied by families that have one.
struct AnalyticGeometry {
  std::function<Vec(std::span<const Real>)> connection;
  std::function<Mat(std::span<const Real>)> metric;
  std::function<Mat(std::span<const Real>)> curvature;
};

/**
 * Chart-parameterized family z -> |z>, seen only through its overlap kernel
 * K(zA, zB) = <zA|zB>.
 */
struct StateFamily {
  std::string name;
  std::size_t dim = 0;
  std::function<Complex(std::span<const Real>, std::span<const Real>)> overlap;
  std::optional<AnalyticGeometry> analytic;
  /// FD step suited to the overlap's noise floor.
  Real fd_step = 1e-3;

  [[nodiscard]] Complex operator()(std::span<const Real> a, std::span<const Real> b) const {
    return overlap(a, b);
  }
};

/**
 * Rephases every state by e^{iθ(z)}. The connection shifts by dθ while the
 * metric, curvature and every closed-loop product stay put. Closed forms are
 * carried over only when the gradient of θ is supplied.
 */
inline StateFamily rephase(const StateFamily& fam, std::function<Real(std::span<const Real>)> theta,
                           std::function<Vec(std::span<const Real>)> grad_theta = {},
                           std::string suffix = "+phase") {
  StateFamily out = fam;
  out.name = fam.name + suffix;
  auto base = fam.overlap;
  out.overlap = [base, theta](std::span<const Real> a, std::span<const Real> b) {
    return std::exp(I_unit * (theta(b) - theta(a))) * base(a, b);
  };
  if (fam.analytic && grad_theta) {
    auto conn = fam.analytic->connection;
    out.analytic->connection = [conn, grad_theta](std::span<const Real> z) { return Vec(conn(z) + grad_theta(z)); };
  } else {
    out.analytic.reset();
  }
  return out;
}

}  // namespace csgeom
