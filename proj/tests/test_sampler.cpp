#include <cmath>
#include <numbers>

#include "doctest.h"

#include "atune/error.hpp"
#include "atune/model.hpp"
#include "atune/sampler.hpp"
#include "atune/scheme.hpp"

using namespace atune;

namespace {

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

SamplerConfig vv_config(double dt, int steps) {
  SamplerConfig c;
  c.mode = SamplerMode::ghmc;
  c.step_size = StepSizeRule::fixed(dt);
  c.trajectory = TrajectoryRule::fixed(steps);
  c.noise = NoiseRule::fixed(0.5);
  c.integrator = IntegratorRule::fixed(build_scheme("VV"));
  c.seed = 17;
  return c;
}

}  // namespace

TEST_CASE("partial momentum update") {
  Rng a(1, 0), b(1, 0);
  const Vector p = Vector::Constant(3, 2.0);
  const Vector mass = Vector::Ones(3);
  const Vector full = partial_momentum_update(p, 1.0, mass, a);
  Vector u(3);
  for (auto& x : u) {
    x = b.normal();
  }
  CHECK(full.isApprox(u));
  Rng c(1, 0);
  const Vector tiny = partial_momentum_update(p, 1e-12, mass, c);
  CHECK((tiny - p).cwiseAbs().maxCoeff() < 1e-5);
  CHECK_THROWS_AS(partial_momentum_update(p, 0.0, mass, c), ConfigError);
  CHECK_THROWS_AS(partial_momentum_update(p, 1.5, mass, c), ConfigError);

  // Stationarity of N(0, M) under the update.
  Vector m(2);
  m << 1.0, 4.0;
  Rng r(2, 0);
  Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
  Vector q(2);
  q << r.normal(), 2.0 * r.normal();
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    q = partial_momentum_update(q, 0.3, m, r);
    cov += q * q.transpose();
  }
  cov /= n;
  CHECK(cov(0, 0) == doctest::Approx(1.0).epsilon(0.03));
  CHECK(cov(1, 1) == doctest::Approx(4.0).epsilon(0.03));
  CHECK(std::abs(cov(0, 1)) < 0.06);
}

TEST_CASE("metropolis test") {
  Rng rng(3, 0);
  int accepted = 0;
  for (int i = 0; i < 1000; ++i) {
    accepted += metropolis_accept(0.0, rng);
    CHECK_FALSE(metropolis_accept(std::numeric_limits<double>::infinity(), rng));
    CHECK_FALSE(metropolis_accept(std::nan(""), rng));
  }
  CHECK(accepted == 1000);
  accepted = 0;
  for (int i = 0; i < 100000; ++i) {
    accepted += metropolis_accept(std::log(2.0), rng);
  }
  CHECK(accepted / 1e5 == doctest::Approx(0.5).epsilon(0.02));
}

TEST_CASE("rules") {
  Rng rng(4, 0);
  const auto choice = TrajectoryRule::choice({2, 5, 7});
  CHECK(choice.mean() == doctest::Approx(14.0 / 3.0));
  const auto uni = TrajectoryRule::uniform(1, 66);
  CHECK(uni.mean() == doctest::Approx(33.5));
  for (int i = 0; i < 1000; ++i) {
    const int l = uni.draw(rng);
    CHECK((l >= 1 && l <= 66));
    const double dt = StepSizeRule::uniform(0.1, 0.2).draw(rng);
    CHECK((dt >= 0.1 && dt <= 0.2));
  }
  CHECK(optimal_noise(3.0, 1e-3, 1) == 1.0);
  const double k = (1 + 2 * 9 * 0.01) / (2 * 81 * 0.0001);
  CHECK(optimal_noise(3.0, 0.01, 1000000) == doctest::Approx(-std::log(0.999) * k / 1e6));
}

TEST_CASE("config validation") {
  SamplerConfig c = vv_config(0.1, 0);
  CHECK_THROWS_AS(c.validate(1), ConfigError);
  c = vv_config(-0.1, 1);
  CHECK_THROWS_AS(c.validate(1), ConfigError);
  c = vv_config(0.1, 1);
  c.noise = NoiseRule::fixed(0.0);
  CHECK_THROWS_AS(c.validate(1), ConfigError);
  c = vv_config(0.1, 1);
  c.mass = Vector::Ones(3);
  CHECK_THROWS_AS(c.validate(2), ConfigError);
  GaussianModel g({Matrix::Identity(1, 1)});
  CHECK_THROWS_AS(run_chain(vv_config(0.1, 0), g, 0, 1), ConfigError);
}

TEST_CASE("iteration bookkeeping") {
  GaussianModel g(gen_wishart_precision(3, 4));
  SamplerConfig c = vv_config(0.05, 1);
  c.trajectory = TrajectoryRule::uniform(1, 9);
  c.integrator = IntegratorRule::fixed(build_scheme("BCSS3"));
  const ChainResult r = run_chain(c, g, 0, 500);
  CHECK(r.samples.rows() == 500);
  std::size_t expected = 0;
  for (const auto& rec : r.records) {
    CHECK(rec.stages == 3);
    expected += static_cast<std::size_t>(rec.steps * rec.stages);
    CHECK(rec.gradient_evaluations == static_cast<std::size_t>(rec.steps * rec.stages));
  }
  CHECK(r.gradient_evaluations() == expected);
  CHECK((r.acceptance_rate() >= 0.0 && r.acceptance_rate() <= 1.0));
}

TEST_CASE("momentum flip on rejection") {
  GaussianModel g({Matrix::Identity(1, 1)});
  SamplerConfig c = vv_config(1.9, 7);
  c.noise = NoiseRule::fixed(1e-12);
  Rng rng(8, 0);
  PhaseState s = initial_state(g, c, 0);
  s.momentum = Vector::Constant(1, 1.0);
  for (int i = 0; i < 200; ++i) {
    const Vector theta = s.theta;
    const Vector p = s.momentum;
    const auto rec = ghmc_iteration(s, c, g, rng);
    if (!rec.accepted) {
      CHECK(s.theta == theta);
      CHECK(s.momentum(0) == doctest::Approx(-p(0)).epsilon(1e-5));
      break;
    }
  }
}

TEST_CASE("HMC and GHMC agree when phi is 1") {
  GaussianModel g(gen_wishart_precision(4, 2));
  SamplerConfig c = vv_config(0.05, 3);
  c.noise = NoiseRule::fixed(1.0);
  SamplerConfig h = c;
  h.mode = SamplerMode::hmc;
  const auto a = run_chain(c, g, 1, 300);
  const auto b = run_chain(h, g, 1, 300);
  CHECK(a.samples == b.samples);
}

TEST_CASE("exact flow is always accepted") {
  // One VV step of dt on a harmonic model with frequency w conserves the
  // modified energy; a tiny step makes dH negligible.
  GaussianModel g({Matrix::Identity(2, 2)});
  const auto r = run_chain(vv_config(1e-4, 1), g, 0, 200);
  CHECK(r.acceptance_rate() == 1.0);
  for (const auto& rec : r.records) {
    CHECK(std::abs(rec.delta_h) < 1e-7);
  }
}

TEST_CASE("harmonic acceptance rate matches the energy-error prediction") {
  // E[AR] = 2 Phi(-sqrt(mu / 2)) with mu the expected energy error of L steps.
  GaussianModel g({Matrix::Identity(1, 1)});
  SamplerConfig c = vv_config(1.9, 5);
  c.mode = SamplerMode::hmc;
  c.noise = NoiseRule::fixed(1.0);
  const auto r = run_chain(c, g, 0, 10000, Vector::Zero(1));
  const double mu = expected_energy_error(harmonic_propagator(build_scheme("VV"), 1.9).power(5));
  CHECK(std::abs(r.acceptance_rate() - 2 * normal_cdf(-std::sqrt(mu / 2))) < 0.03);
}

TEST_CASE("small steps give high acceptance") {
  GaussianModel g({Matrix::Identity(1, 1)});
  SamplerConfig c = vv_config(0.5, 3);
  CHECK(run_chain(c, g, 0, 2000).acceptance_rate() > 0.95);
}

TEST_CASE("determinism and moments") {
  GaussianModel g({Matrix::Identity(2, 2)});
  SamplerConfig c = vv_config(0.8, 3);
  c.noise = NoiseRule::uniform(0.3, 1.0);
  c.step_size = StepSizeRule::uniform(0.6, 1.0);
  const auto a = run_chain(c, g, 0, 100000);
  const auto b = run_chain(c, g, 0, 100000);
  CHECK(a.samples == b.samples);
  const Eigen::RowVector2d mean = a.samples.colwise().mean();
  CHECK(mean.cwiseAbs().maxCoeff() < 0.03);
  const Matrix centered = a.samples.rowwise() - mean;
  const Eigen::Vector2d var = centered.colwise().squaredNorm() / (a.samples.rows() - 1.0);
  CHECK(var(0) == doctest::Approx(1.0).epsilon(0.05));
  CHECK(var(1) == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("worker count does not change chains") {
  GaussianModel g(gen_wishart_precision(5, 6));
  SamplerConfig c = vv_config(0.05, 2);
  const auto one = run_chains(c, g, 6, 200, 1);
  const auto four = run_chains(c, g, 6, 200, 4);
  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(one[i].samples == four[i].samples);
  }
  CHECK(one[0].samples != one[1].samples);
}

TEST_CASE("chains started in the target stay there from the first iteration") {
  // Small phi keeps the initial momentum for many iterations, so it must be N(0, M).
  GaussianModel g({Matrix::Identity(1, 1)});
  SamplerConfig c = vv_config(1.0, 1);
  c.noise = NoiseRule::fixed(0.01);
  Rng init(3, 0);
  std::vector<Vector> starts(4096);
  for (auto& s : starts) {
    s = Vector::Constant(1, init.normal());
  }
  const auto chains = run_chains(c, g, starts.size(), 3, 4, starts);
  for (Eigen::Index it = 0; it < 3; ++it) {
    double var = 0.0;
    for (const auto& ch : chains) {
      var += ch.samples(it, 0) * ch.samples(it, 0) / static_cast<double>(chains.size());
    }
    CHECK(var == doctest::Approx(1.0).epsilon(0.08));
  }
}
