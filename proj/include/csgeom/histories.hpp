#pragma once

/**
 * @file histories.hpp
 * @brief Fine-grained coherent-state histories: decoherence functionals as
 *        finite overlap products, probabilities, Bargmann phases and their
 *        continuum (Berry) limit, Zeno bounds and non-additivity.
 *
 * Only the H = 0 case is treated here: every factor is a plain overlap.
 */

#include "family.hpp"
#include "numerics.hpp"
#include "pullback.hpp"

#include <cmath>
#include <istream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

namespace csgeom {

using FamilyRef = std::shared_ptr<const StateFamily>;

inline FamilyRef share(StateFamily f) { return std::make_shared<const StateFamily>(std::move(f)); }

/// Time-ordered chart points. Times default to 0 (degenerate when H = 0).
struct History {
  FamilyRef family;
  std::vector<ChartPoint> points;
  std::vector<Real> times;

  History() = default;
  History(FamilyRef fam, std::vector<ChartPoint> pts, std::vector<Real> ts = {})
      : family(std::move(fam)), points(std::move(pts)), times(std::move(ts)) {
    validate();
  }

  void validate() {
    require(family != nullptr, "History: no family");
    require(!points.empty(), "History: empty history");
    for (const auto& z : points) require(z.size() == family->dim, "History: point dimension does not match family");
    if (times.empty()) times.assign(points.size(), 0.0);
    require(times.size() == points.size(), "History: times and points differ in length");
    for (std::size_t k = 1; k < times.size(); ++k)
      require(times[k] >= times[k - 1], "History: times must be nondecreasing (index " + std::to_string(k) + ")");
  }

  [[nodiscard]] std::size_t size() const { return points.size(); }
};

/// d(α, β) = r e^{iθ}; θ is accumulated factor by factor, so it may leave (−π, π].
struct DecoherenceValue {
  Complex value;
  Real modulus = 0.0;
  Real phase = 0.0;
  /// some factor had |arg| > π/2, so the unwrapped phase may be off by 2π
  bool phase_ambiguous = false;
};

/// Forward branch α, backward branch β, shared initial point and shared final point.
struct LoopSpec {
  History forward;
  History backward;
  ChartPoint initial;
};

namespace detail {

struct PhaseAccumulator {
  Complex product{1.0, 0.0};
  Real phase = 0.0;
  bool ambiguous = false;

  void mul(Complex f) {
    product *= f;
    const Real a = std::arg(f);
    phase += a;
    if (std::abs(a) > 0.5 * pi) ambiguous = true;
  }
};

inline bool same_point(const ChartPoint& a, const ChartPoint& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (std::abs(a[i] - b[i]) > 1e-12 * std::max(1.0, std::abs(a[i]))) return false;
  return true;
}

}  // namespace detail

/**
 * d(α, β) = ⟨z_n|z_{n−1}⟩…⟨z_1|z_0⟩ ⟨z_0|z′_1⟩…⟨z′_{m−1}|z′_m⟩, z_0 the initial
 * point. Both branches are accumulated in increasing slot order so that
 * d(β, α) is bitwise the conjugate of d(α, β) for Hermitian kernels.
 */
inline DecoherenceValue decoherence(const LoopSpec& loop) {
  const auto& a = loop.forward;
  const auto& b = loop.backward;
  require(a.family && b.family, "decoherence: histories without a family");
  require(a.size() >= 1 && b.size() >= 1, "decoherence: empty history");
  require(a.family == b.family || a.family->name == b.family->name, "decoherence: branches use different families");
  require(loop.initial.size() == a.family->dim, "decoherence: initial point has wrong dimension");
  if (!detail::same_point(a.points.back(), b.points.back()))
    throw ValidationError("decoherence: branches must end at the same chart point");
  const StateFamily& K = *a.family;

  detail::PhaseAccumulator fwd, bwd;
  const ChartPoint* prev = &loop.initial;
  for (const auto& z : a.points) {
    fwd.mul(K(z, *prev));
    prev = &z;
  }
  prev = &loop.initial;
  for (const auto& z : b.points) {
    bwd.mul(K(*prev, z));
    prev = &z;
  }
  DecoherenceValue d;
  d.value = fwd.product * bwd.product;
  d.modulus = std::abs(d.value);
  d.phase = fwd.phase + bwd.phase;
  d.phase_ambiguous = fwd.ambiguous || bwd.ambiguous;
  return d;
}

/// Bargmann invariant ⟨z_0|z_1⟩⟨z_1|z_2⟩…⟨z_{N−1}|z_0⟩ of a closed polygon.
inline DecoherenceValue bargmann(const StateFamily& K, const std::vector<ChartPoint>& pts) {
  require(pts.size() >= 1, "bargmann: empty polygon");
  detail::PhaseAccumulator acc;
  for (std::size_t k = 0; k < pts.size(); ++k) acc.mul(K(pts[k], pts[(k + 1) % pts.size()]));
  return {acc.product, std::abs(acc.product), acc.phase, acc.ambiguous};
}

struct ProbabilityReport {
  Real p = 1.0;
  Real neg_log_p = 0.0;
  /// Σ δs_i² with δs_i² = g_jk(midpoint) δz^j δz^k
  Real sum_ds2 = 0.0;
  std::vector<Real> ds2;
};

namespace detail {
inline Real step_ds2(const StateFamily& K, const ChartPoint& a, const ChartPoint& b) {
  ChartPoint mid(a.size());
  Vec d(static_cast<Eigen::Index>(a.size()));
  for (std::size_t i = 0; i < a.size(); ++i) {
    mid[i] = 0.5 * (a[i] + b[i]);
    d(static_cast<Eigen::Index>(i)) = b[i] - a[i];
  }
  const Mat g = K.analytic ? K.analytic->metric(mid) : metric_fd(K, mid, K.fd_step);
  return d.dot(g * d);
}
}  // namespace detail

/// p(α) = ∏|⟨z_{i+1}|z_i⟩|² with the metric line elements alongside.
inline ProbabilityReport probability(const History& h) {
  require(h.family != nullptr, "probability: history without family");
  const StateFamily& K = *h.family;
  ProbabilityReport r;
  KahanSum<Real> nlp, s2;
  for (std::size_t i = 0; i + 1 < h.size(); ++i) {
    const Real m = std::abs(K(h.points[i + 1], h.points[i]));
    nlp += -2.0 * std::log(m);
    const Real ds2 = detail::step_ds2(K, h.points[i], h.points[i + 1]);
    r.ds2.push_back(ds2);
    s2 += ds2;
  }
  r.neg_log_p = nlp.value();
  r.p = std::exp(-r.neg_log_p);
  r.sum_ds2 = s2.value();
  return r;
}

// -----------------------------------------------------------------------------
// Closed curves and the Berry limit
// -----------------------------------------------------------------------------

/// Piecewise-smooth closed curve s ∈ [0, 1) -> chart, smooth between breaks.
struct ClosedCurve {
  std::function<ChartPoint(Real)> point;
  std::function<ChartPoint(Real)> tangent;
  std::vector<Real> breaks{0.0, 1.0};
};

/// Counter-clockwise rectangle [q0, q0+a] × [p0, p0+b] in the (q, p) chart.
inline ClosedCurve rectangle(Real q0, Real p0, Real a, Real b) {
  ClosedCurve c;
  c.point = [=](Real s) -> ChartPoint {
    s -= std::floor(s);
    const Real u = 4.0 * s;
    if (u < 1.0) return {q0 + a * u, p0};
    if (u < 2.0) return {q0 + a, p0 + b * (u - 1.0)};
    if (u < 3.0) return {q0 + a * (3.0 - u), p0 + b};
    return {q0, p0 + b * (4.0 - u)};
  };
  c.tangent = [=](Real s) -> ChartPoint {
    s -= std::floor(s);
    const Real u = 4.0 * s;
    if (u < 1.0) return {4.0 * a, 0.0};
    if (u < 2.0) return {0.0, 4.0 * b};
    if (u < 3.0) return {-4.0 * a, 0.0};
    return {0.0, -4.0 * b};
  };
  c.breaks = {0.0, 0.25, 0.5, 0.75, 1.0};
  return c;
}

/// Counter-clockwise ellipse with semi-axes (rq, rp).
inline ClosedCurve ellipse(Real qc, Real pc, Real rq, Real rp) {
  ClosedCurve c;
  c.point = [=](Real s) -> ChartPoint {
    return {qc + rq * std::cos(2 * pi * s), pc + rp * std::sin(2 * pi * s)};
  };
  c.tangent = [=](Real s) -> ChartPoint {
    return {-2 * pi * rq * std::sin(2 * pi * s), 2 * pi * rp * std::cos(2 * pi * s)};
  };
  return c;
}

/// ∮ A by Gauss–Legendre on each smooth piece.
inline Real line_integral_A(const StateFamily& K, const ClosedCurve& c, std::size_t order = 48) {
  KahanSum<Real> acc;
  for (std::size_t piece = 0; piece + 1 < c.breaks.size(); ++piece) {
    const auto rule = gauss_legendre(order, c.breaks[piece], c.breaks[piece + 1]);
    for (std::size_t k = 0; k < rule.size(); ++k) {
      const ChartPoint z = c.point(rule.nodes[k]);
      const ChartPoint t = c.tangent(rule.nodes[k]);
      const Vec A = K.analytic ? K.analytic->connection(z) : connection_fd(K, z, K.fd_step);
      Real dot = 0.0;
      for (std::size_t i = 0; i < z.size(); ++i) dot += A(static_cast<Eigen::Index>(i)) * t[i];
      acc += rule.weights[k] * dot;
    }
  }
  return acc.value();
}

struct BerryRow {
  std::size_t points = 0;
  Real phase = 0.0;
  Real difference = 0.0;
  bool ambiguous = false;
};

struct BerryLimit {
  std::vector<BerryRow> rows;
  Real line_integral = 0.0;
  /// |difference| non-increasing under refinement (floor-level ties allowed)
  bool converging = true;
};

/**
 * Discrete Bargmann phase of the curve sampled at N equally spaced parameter
 * values, for each N in `refinements`, against the dense line integral ∮A.
 */
inline BerryLimit berry_limit(const StateFamily& K, const ClosedCurve& c, const std::vector<std::size_t>& refinements) {
  require(!refinements.empty(), "berry_limit: no refinements");
  for (std::size_t k = 0; k < refinements.size(); ++k) {
    require(refinements[k] >= 3, "berry_limit: need at least 3 points");
    if (k > 0) require(refinements[k] > refinements[k - 1], "berry_limit: refinements must increase");
  }
  BerryLimit out;
  out.line_integral = line_integral_A(K, c);
  for (std::size_t N : refinements) {
    std::vector<ChartPoint> pts(N);
    for (std::size_t k = 0; k < N; ++k) pts[k] = c.point(static_cast<Real>(k) / static_cast<Real>(N));
    const auto b = bargmann(K, pts);
    out.rows.push_back({N, b.phase, std::abs(b.phase - out.line_integral), b.phase_ambiguous});
  }
  const Real floor = 1e-12 * std::max(1.0, std::abs(out.line_integral));
  for (std::size_t k = 1; k < out.rows.size(); ++k)
    if (out.rows[k].difference > std::max(out.rows[k - 1].difference, floor)) out.converging = false;
  return out;
}

// -----------------------------------------------------------------------------
// Zeno bound and non-additivity
// -----------------------------------------------------------------------------

struct ZenoReport {
  Real p = 1.0;
  std::size_t steps = 0;
  Real bound = 1.0;  ///< e^{−N}
  std::vector<Real> ds2;
  std::vector<std::size_t> below_floor;  ///< steps with δs² < 1
  bool all_steps_resolved = true;
  /// p ≤ e^{−N}(1 + tol); only asserted when every step is resolved
  bool bound_holds = true;
  std::string verdict;
};

inline ZenoReport zeno_report(const History& h, Real tol = 1e-6) {
  const auto pr = probability(h);
  ZenoReport z;
  z.p = pr.p;
  z.steps = pr.ds2.size();
  z.bound = std::exp(-static_cast<Real>(z.steps));
  z.ds2 = pr.ds2;
  for (std::size_t i = 0; i < pr.ds2.size(); ++i)
    if (pr.ds2[i] < 1.0 - 1e-12) z.below_floor.push_back(i);
  z.all_steps_resolved = z.below_floor.empty();
  z.bound_holds = z.p <= z.bound * (1.0 + tol);
  if (!z.all_steps_resolved) {
    z.verdict = "below Heisenberg floor: " + std::to_string(z.below_floor.size()) + " step(s) with ds2 < 1";
  } else {
    z.verdict = z.bound_holds ? "bound holds: p <= exp(-N)" : "bound violated";
  }
  return z;
}

struct NonadditivityResult {
  Real p_alpha = 0.0;
  Real p_alpha_bar = 0.0;
  Real p_union = 0.0;
  Real defect = 0.0;
  Complex interference;  ///< d(α, ᾱ)
};

/**
 * Two-slot coarse graining: ψ₀ → {a or b} → f. The union's class operator is
 * the sum of the two branches, so defect = p(α∨ᾱ) − p(α) − p(ᾱ) = 2 Re d(α, ᾱ).
 * `inner(x, y)` must return ⟨x|y⟩.
 */
template <typename State, typename Inner>
NonadditivityResult nonadditivity(Inner&& inner, const State& psi0, const State& a, const State& b, const State& f) {
  const Complex amp_a = inner(f, a) * inner(a, psi0);
  const Complex amp_b = inner(f, b) * inner(b, psi0);
  NonadditivityResult r;
  r.p_alpha = std::norm(amp_a);
  r.p_alpha_bar = std::norm(amp_b);
  r.p_union = std::norm(amp_a + amp_b);
  r.interference = amp_a * std::conj(amp_b);
  r.defect = 2.0 * r.interference.real();
  return r;
}

inline NonadditivityResult nonadditivity_demo(const StateFamily& K, const ChartPoint& psi0, const ChartPoint& a,
                                              const ChartPoint& b, const ChartPoint& f) {
  for (const auto* z : {&psi0, &a, &b, &f})
    require(z->size() == K.dim, "nonadditivity_demo: point dimension does not match family");
  return nonadditivity([&K](const ChartPoint& x, const ChartPoint& y) { return K(x, y); }, psi0, a, b, f);
}

// -----------------------------------------------------------------------------
// History files
// -----------------------------------------------------------------------------

/**
 * Reads `q,p[,t]` records, one per line. Blank lines and lines starting with
 * '#' are skipped; a first line that does not parse as numbers is a header.
 */
inline History read_history_csv(std::istream& in, FamilyRef fam) {
  std::vector<ChartPoint> pts;
  std::vector<Real> ts;
  std::string line;
  std::size_t lineno = 0;
  bool any_time = false, any_no_time = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos || line[line.find_first_not_of(" \t")] == '#') continue;
    std::vector<Real> vals;
    std::stringstream ss(line);
    std::string cell;
    bool ok = true;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t used = 0;
        vals.push_back(std::stod(cell, &used));
        if (cell.find_first_not_of(" \t", used) != std::string::npos) ok = false;
      } catch (const std::exception&) {
        ok = false;
      }
    }
    if (!ok) {
      if (pts.empty() && lineno == 1) continue;  // header
      throw ValidationError("history file: line " + std::to_string(lineno) + " is not numeric");
    }
    if (vals.size() != 2 && vals.size() != 3)
      throw ValidationError("history file: line " + std::to_string(lineno) + " needs q,p or q,p,t");
    pts.push_back({vals[0], vals[1]});
    if (vals.size() == 3) {
      ts.push_back(vals[2]);
      any_time = true;
    } else {
      ts.push_back(0.0);
      any_no_time = true;
    }
  }
  if (any_time && any_no_time) throw ValidationError("history file: time column present on some lines only");
  return History(std::move(fam), std::move(pts), std::move(ts));
}

}  // namespace csgeom
