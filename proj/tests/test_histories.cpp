#include <catch_amalgamated.hpp>

#include <csgeom/histories.hpp>
#include <csgeom/weyl.hpp>

#include <Eigen/Dense>

#include <random>
#include <sstream>

using namespace csgeom;
using Catch::Approx;

namespace {
FamilyRef weyl1(Gauge g = Gauge::position_phase) { return share(weyl_family(GaussianReference(1.0), g)); }

Complex ov(PhasePoint a, PhasePoint b) {
  GaussianReference r(1.0);
  return overlap(WeylState{r, a}, WeylState{r, b});
}
}  // namespace

TEST_CASE("diagonal decoherence is the probability", "[histories]") {
  auto fam = weyl1();
  History a(fam, {{0.5, 0.1}, {1.0, -0.4}, {0.2, 0.3}});
  LoopSpec l{a, a, {0.0, 0.0}};
  auto d = decoherence(l);
  CHECK(d.value.imag() == 0.0);
  CHECK(d.value.real() >= 0.0);
  CHECK(d.value.real() <= 1.0);
  const double expect = std::norm(ov({0.2, 0.3}, {1.0, -0.4})) * std::norm(ov({1.0, -0.4}, {0.5, 0.1})) *
                        std::norm(ov({0.5, 0.1}, {0, 0}));
  CHECK(d.value.real() == Approx(expect).epsilon(1e-14));
}

TEST_CASE("constant history decoheres to one", "[histories]") {
  auto fam = weyl1();
  History a(fam, {{0.3, 0.3}, {0.3, 0.3}, {0.3, 0.3}});
  auto d = decoherence({a, a, {0.3, 0.3}});
  CHECK(d.value == Complex(1.0, 0.0));
}

TEST_CASE("three-state Weyl loop", "[histories][bargmann]") {
  auto fam = weyl1();
  PhasePoint z1{0, 0}, z2{1, 0}, z3{0, 1};
  History fwd(fam, {{1, 0}, {0, 1}}), bwd(fam, {{0, 1}});
  auto d = decoherence({fwd, bwd, {0, 0}});
  const Complex direct = ov(z3, z2) * ov(z2, z1) * ov(z1, z3);
  CHECK(std::abs(d.value - direct) < 1e-15);
  // polygon z1 -> z3 -> z2 has signed (q,p) area −1/2
  CHECK(d.phase == Approx(-0.5).margin(1e-12));
  CHECK(std::abs(d.phase) > 0.1);
}

TEST_CASE("decoherence validation", "[histories]") {
  auto fam = weyl1();
  History a(fam, {{1, 0}}), b(fam, {{0, 1}});
  CHECK_THROWS_AS(decoherence({a, b, {0, 0}}), ValidationError);
  CHECK_THROWS_AS(History(fam, {}), ValidationError);
  CHECK_THROWS_AS(History(fam, {{0, 0}, {1, 1}}, {1.0, 0.5}), ValidationError);
  CHECK_THROWS_AS(History(fam, {{0, 0, 0}}), ValidationError);
}

TEST_CASE("hermiticity and reversal", "[histories][property]") {
  auto fam = weyl1();
  std::mt19937_64 eng(9);
  std::normal_distribution<double> nd(0, 1);
  for (int t = 0; t < 25; ++t) {
    ChartPoint end{nd(eng), nd(eng)}, init{nd(eng), nd(eng)};
    std::vector<ChartPoint> pa, pb;
    for (int k = 0; k < 4; ++k) pa.push_back({nd(eng), nd(eng)});
    for (int k = 0; k < 2; ++k) pb.push_back({nd(eng), nd(eng)});
    pa.push_back(end);
    pb.push_back(end);
    History a(fam, pa), b(fam, pb);
    auto dab = decoherence({a, b, init});
    auto dba = decoherence({b, a, init});
    CHECK(dab.value == std::conj(dba.value));

    // reversed closed polygon conjugates the Bargmann invariant
    std::vector<ChartPoint> poly = pa, rev(pa.rbegin(), pa.rend());
    auto f = bargmann(*fam, poly), r = bargmann(*fam, rev);
    CHECK(std::abs(f.value - std::conj(r.value)) < 1e-14);
  }
}

TEST_CASE("probability and line elements", "[histories][probability]") {
  auto fam = weyl1();
  CHECK(probability(History(fam, {{1, 2}})).p == 1.0);

  const double step = std::sqrt(2.0);  // δs² = ½ δq² = 1
  std::vector<ChartPoint> pts;
  for (int k = 0; k <= 10; ++k) pts.push_back({step * k, 0.0});
  auto pr = probability(History(fam, pts));
  for (double d : pr.ds2) CHECK(d == Approx(1.0).epsilon(1e-12));
  CHECK(pr.p <= std::exp(-10.0) * (1 + 1e-6));

  // −log p against Σ δs² for shrinking steps
  for (double h : {0.2, 0.05, 0.0125}) {
    std::vector<ChartPoint> fine;
    for (int k = 0; k <= 20; ++k) fine.push_back({h * k, 0.5 * h * k * k / 20});
    auto f = rephase(*fam, [](std::span<const Real> z) { return 0.2 * z[0] * z[0] * z[1]; });
    auto q = probability(History(share(f), fine));
    CHECK(q.neg_log_p / q.sum_ds2 == Approx(1.0).margin(2 * h));
  }
}

TEST_CASE("extending a history never raises the probability", "[histories][property]") {
  auto fam = weyl1();
  std::mt19937_64 eng(17);
  std::normal_distribution<double> nd(0, 1);
  for (int t = 0; t < 20; ++t) {
    std::vector<ChartPoint> pts;
    for (int k = 0; k < 5; ++k) pts.push_back({nd(eng), nd(eng)});
    auto p0 = probability(History(fam, pts)).p;
    auto extended = pts;
    extended.push_back({nd(eng), nd(eng)});
    CHECK(probability(History(fam, extended)).p <= p0);
    CHECK(p0 <= 1.0);
  }
}

TEST_CASE("an intermediate projector can drag the state (anti-Zeno)", "[histories]") {
  auto fam = weyl1();
  auto direct = probability(History(fam, {{0, 0}, {4, 0}})).p;
  auto dragged = probability(History(fam, {{0, 0}, {2, 0}, {4, 0}})).p;
  CHECK(dragged > direct);
  CHECK(direct == Approx(std::exp(-8.0)).epsilon(1e-12));
  CHECK(dragged == Approx(std::exp(-4.0)).epsilon(1e-12));
}

TEST_CASE("Berry limit on rectangles and ellipses", "[histories][berry]") {
  auto fam = weyl1();
  auto sq = berry_limit(*fam, rectangle(0, 0, 1, 1), {8, 40, 200, 1000});
  CHECK(sq.line_integral == Approx(1.0).margin(1e-12));
  CHECK(sq.rows.back().phase == Approx(1.0).margin(1e-3));
  CHECK(sq.converging);

  auto flat = berry_limit(*fam, rectangle(0.5, 0.5, 1.0, 0.0), {8, 64});
  CHECK(std::abs(flat.rows.back().phase) < 1e-12);

  // gauge transformations leave the limiting phase unchanged
  auto lin = share(rephase(*fam, [](std::span<const Real> z) { return 0.3 * z[0]; }));
  auto sym = weyl1(Gauge::symmetric);
  for (const auto& f : {lin, sym}) {
    auto b = berry_limit(*f, rectangle(0, 0, 1, 1), {1000});
    CHECK(b.rows.back().phase == Approx(sq.rows.back().phase).margin(1e-6));
  }

  // curved loop: discrete phase converges to the enclosed area
  auto el = berry_limit(*fam, ellipse(0.3, -0.2, 1.2, 0.7), {16, 32, 64, 128, 256});
  CHECK(el.line_integral == Approx(pi * 1.2 * 0.7).epsilon(1e-12));
  CHECK(el.converging);
  CHECK(el.rows.back().difference < el.rows.front().difference / 100);
  for (const auto& r : el.rows) CHECK_FALSE(r.ambiguous);

  // a coarse large loop takes per-step phases beyond π/2
  auto big = berry_limit(*fam, rectangle(-6, -6, 12, 12), {4, 8});
  CHECK(big.rows.front().ambiguous);
}

TEST_CASE("Zeno report", "[histories][zeno]") {
  auto fam = weyl1();
  const double step = std::sqrt(2.0);
  std::vector<ChartPoint> pts;
  for (int k = 0; k <= 10; ++k) pts.push_back({0.0, step * k});
  auto z = zeno_report(History(fam, pts));
  CHECK(z.steps == 10);
  CHECK(z.all_steps_resolved);
  CHECK(z.bound_holds);
  CHECK(z.p == Approx(std::exp(-10.0)).epsilon(0.2));

  std::vector<ChartPoint> wide;
  for (int k = 0; k <= 6; ++k) wide.push_back({2 * step * k, 0.0});
  auto w = zeno_report(History(fam, wide));
  CHECK(w.p <= std::exp(-4.0 * 6) * (1 + 1e-9));

  auto rep = zeno_report(History(fam, {{1, 1}, {1, 1}, {1, 1}}));
  CHECK(rep.p == 1.0);
  CHECK(rep.below_floor.size() == 2);
  CHECK_FALSE(rep.all_steps_resolved);
  CHECK(rep.verdict.find("below Heisenberg floor") != std::string::npos);
}

TEST_CASE("non-additivity", "[histories][nonadditivity]") {
  // exact PVM on a two-level system, final projector diagonal in the same basis
  using V = Eigen::Vector2cd;
  V psi0(Complex(0.6, 0.1), Complex(0.3, -0.73));
  psi0.normalize();
  V e0(1, 0), e1(0, 1);
  auto inner = [](const V& x, const V& y) { return x.dot(y); };
  auto orth = nonadditivity(inner, psi0, e0, e1, e0);
  CHECK(std::abs(orth.defect) <= 1e-12);
  CHECK(orth.p_union == Approx(orth.p_alpha + orth.p_alpha_bar).margin(1e-12));

  auto fam = weyl1();
  auto w = nonadditivity_demo(*fam, {0, 0}, {1, 0}, {-1, 0}, {0, 0.5});
  CHECK(std::abs(w.defect) > 0.01);
  CHECK(w.defect == Approx(w.p_union - w.p_alpha - w.p_alpha_bar).margin(1e-14));

  double prev = std::abs(w.defect);
  for (double sep : {2.0, 4.0, 8.0}) {
    auto r = nonadditivity_demo(*fam, {0, 0}, {sep, 0}, {-sep, 0}, {0, 0.5});
    CHECK(std::abs(r.defect) < prev);
    prev = std::abs(r.defect);
  }
  CHECK(prev < 1e-10);
}

TEST_CASE("history CSV input", "[histories][io]") {
  auto fam = weyl1();
  std::istringstream in("q,p,t\n0,0,0\n# comment\n1.5,-2,0.5\n\n2,1,1.0\n");
  auto h = read_history_csv(in, fam);
  REQUIRE(h.size() == 3);
  CHECK(h.points[1] == ChartPoint{1.5, -2.0});
  CHECK(h.times[2] == 1.0);

  std::istringstream bad_order("0,0,1\n1,1,0\n");
  CHECK_THROWS_AS(read_history_csv(bad_order, fam), ValidationError);
  std::istringstream junk("0,0\n1,x\n");
  CHECK_THROWS_AS(read_history_csv(junk, fam), ValidationError);
  std::istringstream mixed("0,0\n1,1,2\n");
  CHECK_THROWS_AS(read_history_csv(mixed, fam), ValidationError);
}
