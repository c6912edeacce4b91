#include <atomic>
#include <cmath>
#include <numbers>

#include "doctest.h"

#include "atune/error.hpp"
#include "atune/model.hpp"
#include "atune/rng.hpp"
#include "atune/saia_map.hpp"
#include "atune/scheme.hpp"

using namespace atune;

namespace {

const char* kNames[] = {"VV", "VV2", "VV3", "BCSS2", "BCSS3", "ME2", "ME3"};

// Counts gradient calls of a wrapped model.
class CountingModel final : public TargetModel {
 public:
  explicit CountingModel(const TargetModel& inner) : inner_(inner) {}
  std::size_t dimension() const override { return inner_.dimension(); }
  std::string name() const override { return "counting"; }
  double potential(const Vector& t) const override { return inner_.potential(t); }
  Vector gradient(const Vector& t) const override {
    ++calls;
    return inner_.gradient(t);
  }
  double potential_and_gradient(const Vector& t, Vector& g) const override {
    ++calls;
    return inner_.potential_and_gradient(t, g);
  }
  mutable std::size_t calls = 0;

 private:
  const TargetModel& inner_;
};

PhaseState make_state(const TargetModel& model, Rng& rng) {
  PhaseState s;
  s.theta = Vector(model.dimension());
  s.momentum = Vector(model.dimension());
  for (Eigen::Index i = 0; i < s.theta.size(); ++i) {
    s.theta(i) = 0.5 * rng.normal();
    s.momentum(i) = rng.normal();
  }
  refresh_forces(model, s);
  return s;
}

// The derivative of rho3 with respect to h as printed in the closed form
// (quotient rule on the numerator and the doubled denominator product).
double printed_rho3_derivative(double h, double b) {
  const double q = b * b * b - 5.0 / 4.0 * b * b + b / 2.0 - 1.0 / 16.0;
  const double e = -3 * std::pow(b, 4) + 8 * std::pow(b, 3) - 19.0 / 4.0 * b * b + b + b * b * h * h * q - 1.0 / 16.0;
  const double d1 = 3 * b - b * h * h * (b - 0.25) - 1;
  const double d2 = 1 - 3 * b - b * h * h * (b - 0.5) * (b - 0.5);
  const double d3 = -9 * b * b + 6 * b - h * h * q - 1;
  const double f = (4 * std::pow(h, 3) * e * e + 2 * std::pow(h, 4) * e * 2 * b * b * h * q) * (2 * d1 * d2 * d3) -
                   (std::pow(h, 4) * e * e) *
                       (2 * (-2 * b * h * (b - 0.25) * d2 * d3 + d1 * (-2 * b * h) * (b - 0.5) * (b - 0.5) * d3 +
                             d1 * d2 * (-2 * h) * q));
  const double g = (2 * d1 * d2 * d3) * (2 * d1 * d2 * d3);
  return f / g;
}

}  // namespace

TEST_CASE("scheme coefficients") {
  const auto vv = build_scheme("VV");
  CHECK(vv.kicks() == std::vector<double>{0.5});
  CHECK(vv.drifts() == std::vector<double>{1.0});
  const auto vv3 = build_scheme("vv3");
  CHECK(vv3.b() == doctest::Approx(1.0 / 6.0));
  CHECK(vv3.a() == doctest::Approx(1.0 / 3.0));
  CHECK(build_scheme("BCSS3").b() == 0.11888010966548);
  for (const char* name : kNames) {
    const auto s = build_scheme(name);
    const auto [rk, rd] = s.constraint_residuals();
    CHECK(std::abs(rk) < 1e-12);
    CHECK(std::abs(rd) < 1e-12);
  }
  CHECK_THROWS_AS(build_scheme("RK4"), ConfigError);
  CHECK_THROWS_AS(SplittingScheme("bad", 1, {0.4}, {1.0}), ConfigError);
  CHECK_THROWS_AS(SplittingScheme("bad", 3, {-0.1, 0.6}, {0.3}), ConfigError);
}

TEST_CASE("apply_step drifts freely in a flat potential") {
  FunctionModel flat(2, [](const Vector&) { return 1.0; });
  for (const char* name : kNames) {
    PhaseState s;
    s.theta = Vector::Zero(2);
    s.momentum = Vector::Ones(2);
    refresh_forces(flat, s);
    Vector inv(2);
    inv << 1.0, 0.5;
    apply_step(build_scheme(name), flat, s, 0.3, inv);
    CHECK(s.theta(0) == doctest::Approx(0.3));
    CHECK(s.theta(1) == doctest::Approx(0.15));
    CHECK(s.momentum.isApprox(Vector::Ones(2)));
  }
}

TEST_CASE("apply_step matches the harmonic propagator") {
  GaussianModel osc({Matrix::Identity(1, 1)});
  for (const char* name : kNames) {
    const auto scheme = build_scheme(name);
    PhaseState s;
    s.theta = Vector::Constant(1, 0.7);
    s.momentum = Vector::Constant(1, -0.4);
    refresh_forces(osc, s);
    const double h = 0.9;
    const auto m = harmonic_propagator(scheme, h);
    apply_step(scheme, osc, s, h, Vector::Ones(1));
    CHECK(s.theta(0) == doctest::Approx(m.a * 0.7 + m.b * -0.4).epsilon(1e-12));
    CHECK(s.momentum(0) == doctest::Approx(m.c * 0.7 + m.d * -0.4).epsilon(1e-12));
  }
}

TEST_CASE("palindromic reversibility and gradient count") {
  GaussianModel gauss(gen_wishart_precision(4, 1));
  BlrModel blr(standardize(generate_synthetic_blr(3, 40, 2)), 5.0);
  BananaModel banana(make_banana_spec(20, 3));
  const TargetModel* models[] = {&gauss, &blr, &banana};
  Rng rng(5, 0);
  for (const TargetModel* model : models) {
    CountingModel counted(*model);
    for (const char* name : kNames) {
      const auto scheme = build_scheme(name);
      PhaseState s = make_state(*model, rng);
      const PhaseState start = s;
      const Vector inv = Vector::Ones(model->dimension());
      counted.calls = 0;
      const auto leg = integrate(scheme, counted, s, 0.01, 4, inv);
      CHECK(leg.status == StepStatus::ok);
      CHECK(leg.gradient_evaluations == static_cast<std::size_t>(4 * scheme.stages()));
      CHECK(counted.calls == leg.gradient_evaluations);
      s.momentum = -s.momentum;
      integrate(scheme, *model, s, 0.01, 4, inv);
      s.momentum = -s.momentum;
      CHECK((s.theta - start.theta).cwiseAbs().maxCoeff() < 1e-10);
      CHECK((s.momentum - start.momentum).cwiseAbs().maxCoeff() < 1e-10);
    }
  }
}

TEST_CASE("divergence is reported") {
  FunctionModel steep(1, [](const Vector& t) { return std::exp(t(0) * t(0)); });
  PhaseState s;
  s.theta = Vector::Constant(1, 3.0);
  s.momentum = Vector::Zero(1);
  refresh_forces(steep, s);
  const auto leg = integrate(build_scheme("VV"), steep, s, 1.0, 20, Vector::Ones(1));
  CHECK(leg.status == StepStatus::diverged);
}

TEST_CASE("harmonic propagator closed forms") {
  const double h = 0.8;
  const auto vv = harmonic_propagator(build_scheme("VV"), h);
  // Kick-first ordering: the h^3 term sits in C rather than B.
  CHECK(vv.a == doctest::Approx(1 - h * h / 2).epsilon(1e-14));
  CHECK(vv.d == doctest::Approx(1 - h * h / 2).epsilon(1e-14));
  CHECK(vv.b == doctest::Approx(h).epsilon(1e-14));
  CHECK(vv.c == doctest::Approx(-(h - h * h * h / 4)).epsilon(1e-14));
  const auto vv2 = harmonic_propagator(build_scheme("VV2"), h);
  CHECK(vv2.b == doctest::Approx(h - std::pow(h, 3) / 8).epsilon(1e-14));
  CHECK(vv2.c == doctest::Approx(-h + 3 * std::pow(h, 3) / 16 - std::pow(h, 5) / 128).epsilon(1e-14));
  for (const char* name : kNames) {
    const auto scheme = build_scheme(name);
    const double limit = stability_limit(scheme);
    for (int i = 1; i < 100; ++i) {
      CHECK(std::abs(harmonic_propagator(scheme, limit * i / 100).determinant() - 1.0) < 1e-12);
    }
  }
}

TEST_CASE("VV energy error closed forms") {
  CHECK(expected_energy_error_vv(1, 1.0) == doctest::Approx(1.0 / 32.0).epsilon(1e-14));
  CHECK(std::abs(expected_energy_error_vv(2, 2 * std::sqrt(2.0))) < 1e-12);
  const char* names[] = {"VV", "VV2", "VV3"};
  for (int k = 1; k <= 3; ++k) {
    const auto scheme = build_scheme(names[k - 1]);
    for (int i = 1; i <= 100; ++i) {
      const double h = 2.0 * k * i / 101.0;
      const double closed = expected_energy_error_vv(k, h);
      const double prop = expected_energy_error(harmonic_propagator(scheme, h));
      CHECK(closed == doctest::Approx(prop).epsilon(1e-10));
    }
  }
  CHECK_THROWS_AS(expected_energy_error_vv(1, 2.5), StabilityError);
}

TEST_CASE("rho3 bound") {
  const double b = kBcss3Kick;
  CHECK(rho3_bound(1e-3, b) < 1e-11);
  const double hl = find_h_lower();
  CHECK(rho3_bound(1.0, b) < rho3_bound(hl, b));
  CHECK(rho3_bound(hl, b) > rho3_bound(2.4, b));
  for (int i = 1; i < 100; ++i) {
    const double v = rho3_bound_or_inf(5.0 * i / 100, b);
    CHECK((v >= 0.0 || std::isinf(v)));
  }
  CHECK_THROWS_AS(rho3_bound(6.5, b), StabilityError);
  CHECK(std::isinf(rho3_bound_or_inf(6.5, b)));
}

TEST_CASE("rho3 derivative: numeric versus printed closed form") {
  const double b = kBcss3Kick;
  for (double h : {1.0, 1.8, 2.5}) {
    const double numeric = (rho3_bound(h + 1e-6, b) - rho3_bound(h - 1e-6, b)) / 2e-6;
    CHECK(numeric == doctest::Approx(printed_rho3_derivative(h, b)).epsilon(1e-6));
  }
}

TEST_CASE("h_lower") {
  const double hl = find_h_lower();
  CHECK(hl == doctest::Approx(2.0772).epsilon(1e-4 / 2.0772));
  const double b = kBcss3Kick;
  CHECK(rho3_bound(hl, b) >= rho3_bound(hl - 1e-3, b));
  CHECK(rho3_bound(hl, b) >= rho3_bound(hl + 1e-3, b));
  CHECK(std::abs((rho3_bound(hl + 1e-6, b) - rho3_bound(hl - 1e-6, b)) / 2e-6) < 1e-6);
}

TEST_CASE("rotation angle") {
  const auto vv = build_scheme("VV");
  CHECK(rotation_angle(vv, std::sqrt(2.0)) == doctest::Approx(std::numbers::pi / 2));
  double prev = 0.0;
  for (int i = 1; i < 200; ++i) {
    const double eta = rotation_angle(vv, 2.0 * i / 200);
    CHECK(eta > prev);
    prev = eta;
  }
  CHECK_THROWS_AS(rotation_angle(vv, 2.5), StabilityError);
  const auto& map = SaiaMap::default_map();
  const double mid = (find_h_lower() + 3.0) / 2.0;
  CHECK(rotation_angle(map.scheme_at(mid), mid) == doctest::Approx(2.637354).epsilon(1e-3 / 2.637354));
}

TEST_CASE("lambda") {
  CHECK(lambda_k(two_stage_scheme(0.25)) == doctest::Approx(1.0 / 48.0));
  CHECK(lambda3(0.5, 0.5) == doctest::Approx(1.0 / 12.0));
  // Exact rational evaluation of 1 - 6a(1-a)(1-2b) with the BCSS3 literals.
  const long double b = 0.11888010966548L, a = 0.29619504261126L;
  const long double expected = (1.0L - 6.0L * a * (1.0L - a) * (1.0L - 2.0L * b)) / 12.0L;
  CHECK(lambda_k(build_scheme("BCSS3")) == doctest::Approx(static_cast<double>(expected)).epsilon(1e-14));
}

TEST_CASE("stability limits") {
  CHECK(stability_limit(build_scheme("VV")) == doctest::Approx(2.0).epsilon(1e-6));
  CHECK(stability_limit(build_scheme("VV2")) == doctest::Approx(4.0).epsilon(1e-6));
  CHECK(stability_limit(build_scheme("VV3")) == doctest::Approx(6.0).epsilon(1e-6));
  const double bcss3 = stability_limit(build_scheme("BCSS3"));
  CHECK(bcss3 > 0.0);
  CHECK(bcss3 <= 6.0);
  // The rho3 domain ends where the propagator loses stability.
  CHECK(std::isfinite(rho3_bound_or_inf(bcss3 - 1e-4, kBcss3Kick)));
  CHECK(std::isinf(rho3_bound_or_inf(bcss3 + 1e-4, kBcss3Kick)));
}

TEST_CASE("VV ratio roots") {
  const auto r2 = vv_ratio_roots(2);
  REQUIRE(r2.size() == 2);
  CHECK(std::abs(r2[0] - 1.0) < 1e-9);
  CHECK(std::abs(r2[1] - std::sqrt(3.0)) < 1e-9);
  const auto r3 = vv_ratio_roots(3);
  REQUIRE(r3.size() == 3);
  CHECK(std::abs(r3[0] - std::sqrt(2 - std::sqrt(2.0))) < 1e-9);
  CHECK(std::abs(r3[1] - std::sqrt(2.0)) < 1e-9);
  CHECK(std::abs(r3[2] - std::sqrt(2 + std::sqrt(2.0))) < 1e-9);
  CHECK(3 * r3[0] == doctest::Approx(2.296).epsilon(1e-3 / 2.296));
}
