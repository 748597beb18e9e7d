#include <catch_amalgamated.hpp>

#include <csgeom/report.hpp>

using namespace csgeom;
using Catch::Approx;

TEST_CASE("required entries carry computed values", "[report]") {
  const auto r = full_report(std::nullopt);
  for (const char* k : {"zeno-bound-direction", "cpq-definition-factor", "reference-normalization", "kappa-series",
                        "alpha-leading-order"}) {
    const auto* e = r.find(k);
    REQUIRE(e != nullptr);
    CHECK_FALSE(e->values.empty());
    CHECK_FALSE(e->printed.empty());
    CHECK_FALSE(e->computed.empty());
    CHECK(e->verdict == Verdict::corrected);
  }
  CHECK(r.entries.size() >= 10);
  CHECK(std::is_sorted(r.entries.begin(), r.entries.end(), [](const auto& a, const auto& b) { return a.key < b.key; }));
  // sampling skipped: only that entry is left open
  CHECK(r.find("resolution-constant")->verdict == Verdict::inconclusive);
  CHECK(r.count(Verdict::inconclusive) == 1);
}

TEST_CASE("entry values", "[report]") {
  const auto z = zeno_bound_direction(10);
  CHECK(z.values["ratio_on_floor"].get<double>() == Approx(1.0).epsilon(1e-6));
  CHECK(z.values["ratio_above_floor"].get<double>() == Approx(std::exp(-5.0)).epsilon(1e-6));

  const auto c = cpq_definition_factor(1.0, 0.3, {1.3, -0.7});
  CHECK(c.values["cpq_standard"].get<double>() == Approx(0.3).margin(1e-8));
  CHECK(c.values["cpq_printed"].get<double>() == Approx(0.3 + 1.3 * 0.7).margin(1e-6));
  // at the origin both forms agree, so there is nothing to correct
  CHECK(cpq_definition_factor(1.0, 0.3, {0.0, 0.0}).verdict == Verdict::confirmed);

  const auto n = reference_normalization_entry(0.1);
  CHECK(n.values["printed_norm2"].get<double>() == Approx(std::pow(pi * 0.01, -1.5)).epsilon(1e-10));

  const auto d = degenerate_branch_entry();
  CHECK(d.values["ratio_corrected_model"].get<double>() == Approx(4.0).epsilon(1e-12));
  CHECK(d.values["ratio_printed_model"].get<double>() == Approx(64.0).epsilon(1e-12));
  CHECK(d.values["corrected_min_m1"].get<double>() == Approx(std::cbrt(3.0) / 4).epsilon(1e-12));

  const auto k = kappa_series_entry({0.1});
  CHECK(k.values[0]["printed_error"].get<double>() == Approx(4.96e-3).epsilon(0.01));

  CHECK(chain_intermediate_step(0.5).values["intermediate"].get<double>() == Approx(0.5));
  CHECK_THROWS_AS(chain_intermediate_step(0.4), ValidationError);
}

TEST_CASE("sampled resolution constant", "[report][sampling]") {
  SliceSampling s;
  s.points = 1024;
  const auto e = resolution_constant_entry(0.2, s);
  CHECK(e.verdict == Verdict::corrected);
  CHECK(e.values["rel_error"].get<double>() < 0.03);
  // seeded: a second run reproduces the numbers
  CHECK(resolution_constant_entry(0.2, s).values == e.values);
}

TEST_CASE("JSON round trip, merge and idempotence", "[report]") {
  const auto a = full_report(std::nullopt);
  const auto j = a.to_json();
  CHECK(ConsistencyReport::from_json(j).to_json() == j);
  CHECK(full_report(std::nullopt).to_json().dump() == j.dump());
  CHECK(j["summary"]["entries"].get<std::size_t>() == a.entries.size());

  ConsistencyReport first, second;
  first.add({"b", "x", "1", "2", {}, Verdict::confirmed, ""});
  first.add({"a", "x", "1", "2", {}, Verdict::confirmed, ""});
  second.add({"b", "y", "1", "3", {}, Verdict::corrected, ""});
  const auto m = merge({first, second});
  REQUIRE(m.entries.size() == 2);
  CHECK(m.entries[0].key == "a");
  CHECK(m.find("b")->verdict == Verdict::corrected);
  CHECK(m.find("b")->computed == "3");

  const auto empty = merge({});
  CHECK(empty.entries.empty());
  CHECK(empty.to_json()["summary"]["entries"].get<std::size_t>() == 0);
  CHECK(ConsistencyReport::from_json(nlohmann::json::object()).entries.empty());

  for (auto v : {Verdict::confirmed, Verdict::corrected, Verdict::inconclusive}) CHECK(verdict_from_string(to_string(v)) == v);
  CHECK_THROWS_AS(verdict_from_string("maybe"), ValidationError);
}
