// Two small experiments with Weyl coherent states (hbar = 1, sigma = 1):
//  1. the Bargmann phase of a sampled loop tends to the enclosed phase-space area;
//  2. a history of N resolvable steps has probability at most e^{-N}.

#include <csgeom/histories.hpp>
#include <csgeom/weyl.hpp>

#include <cmath>
#include <cstdio>

using namespace csgeom;

int main() {
  const auto fam = share(weyl_family(GaussianReference(1.0)));

  std::puts("Bargmann phase of an ellipse, semi-axes 1.5 and 0.8 (area 1.2 pi)");
  std::puts("  points        phase     |phase - line integral|");
  const auto loop = berry_limit(*fam, ellipse(0.3, -0.2, 1.5, 0.8), {4, 8, 16, 32, 64, 128, 256});
  for (const auto& r : loop.rows) std::printf("  %6zu  %11.8f  %.3e%s\n", r.points, r.phase, r.difference, r.ambiguous ? "  (branch ambiguous)" : "");
  std::printf("  line integral of A: %.10f, area: %.10f\n\n", loop.line_integral, 1.2 * pi);

  std::puts("Histories along p with fixed metric step length ds2 (10 steps)");
  std::puts("     ds2          p(alpha)      e^{-N}     verdict");
  for (Real ds2 : {0.25, 1.0, 2.0}) {
    std::vector<ChartPoint> pts;
    for (int k = 0; k <= 10; ++k) pts.push_back({0.0, std::sqrt(2.0 * ds2) * k});  // g_pp = 1/2
    const auto z = zeno_report(History(fam, pts));
    std::printf("  %6.2f  %14.6e  %11.4e  %s\n", ds2, z.p, z.bound, z.verdict.c_str());
  }
  return 0;
}
