#include <cmath>
#include <filesystem>

#include "doctest.h"

#include "atune/error.hpp"
#include "atune/rng.hpp"
#include "atune/saia_map.hpp"
#include "atune/scheme.hpp"

using namespace atune;

TEST_CASE("adaptive node is the minimax kick") {
  Rng rng(3, 0);
  for (double h : {1.0, 2.0772, 2.5, 3.0}) {
    const SaiaNode node = solve_saia_node(3, h);
    REQUIRE_FALSE(node.flagged);
    const double best = worst_case_bound(3, node.b, h);
    for (int i = 0; i < 50; ++i) {
      const double b = rng.uniform(0.0, 1.0 / 3.0);
      CHECK(best <= worst_case_bound(3, b, h) * (1 + 1e-9));
    }
    CHECK(node.a == doctest::Approx(three_stage_family_drift(node.b)));
  }
}

TEST_CASE("adaptive kick is stable as h goes to zero") {
  CHECK(std::abs(solve_saia_node(3, 0.05).b - solve_saia_node(3, 0.01).b) < 0.02);
}

TEST_CASE("adaptive integrator beats fixed schemes at h = 2.5") {
  const auto& map = SaiaMap::default_map();
  const double h = 2.5;
  const double saia = expected_energy_error(harmonic_propagator(map.scheme_at(h), h));
  CHECK(saia <= expected_energy_error(harmonic_propagator(build_scheme("BCSS3"), h)));
  CHECK(saia <= expected_energy_error(harmonic_propagator(build_scheme("ME3"), h)));
}

TEST_CASE("map construction, lookup and cache") {
  CHECK_THROWS_AS(SaiaMap::build(50), ConfigError);
  const SaiaMap map = SaiaMap::build(120);
  CHECK(map.resolution() == 120);
  CHECK(map.stages() == 3);
  CHECK(map.nodes().back().h == doctest::Approx(6.0));
  const auto& n = map.nodes()[40];
  CHECK(map.kick_at(n.h) == doctest::Approx(n.b));
  const double mid = 0.5 * (map.nodes()[40].h + map.nodes()[41].h);
  CHECK(map.kick_at(mid) == doctest::Approx(0.5 * (map.nodes()[40].b + map.nodes()[41].b)));
  CHECK_THROWS_AS(map.scheme_at(6.5), StabilityError);
  CHECK_THROWS_AS(map.scheme_at(0.0), StabilityError);
  for (double h = 2.0772; h <= 3.0; h += 0.05) {
    const auto s = map.scheme_at(h);
    const auto [rk, rd] = s.constraint_residuals();
    CHECK(std::abs(rk) < 1e-12);
    CHECK(std::abs(rd) < 1e-12);
  }

  const auto path = std::filesystem::temp_directory_path() / "atune_test_map.txt";
  std::filesystem::remove(path);
  map.save(path);
  const SaiaMap back = SaiaMap::load(path);
  REQUIRE(back.resolution() == map.resolution());
  for (std::size_t i = 0; i < map.resolution(); ++i) {
    CHECK(back.nodes()[i].b == map.nodes()[i].b);
    CHECK(back.nodes()[i].flagged == map.nodes()[i].flagged);
  }
  const SaiaMap cached = SaiaMap::load_or_build(path, 120);
  CHECK(cached.kick_at(2.5) == map.kick_at(2.5));
  std::filesystem::remove(path);
}

TEST_CASE("two-stage map") {
  const SaiaMap map = SaiaMap::build(100, 2);
  CHECK(map.stages() == 2);
  CHECK(map.scheme_at(2.0).stages() == 2);
  CHECK(map.drift_at(2.0) == doctest::Approx(0.5));
}
