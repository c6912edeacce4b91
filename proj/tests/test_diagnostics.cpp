#include <cmath>

#include "doctest.h"

#include "atune/diagnostics.hpp"
#include "atune/error.hpp"
#include "atune/rng.hpp"

using namespace atune;

namespace {

Eigen::MatrixXd iid(std::size_t n, std::size_t d, std::uint64_t seed) {
  Rng rng(seed, 0);
  Eigen::MatrixXd m(n, d);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      m(i, j) = rng.normal();
    }
  }
  return m;
}

Eigen::MatrixXd ar1(std::size_t n, std::size_t d, double rho, std::uint64_t seed) {
  Rng rng(seed, 0);
  Eigen::MatrixXd m(n, d);
  const double s = std::sqrt(1 - rho * rho);
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    double x = rng.normal();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      x = rho * x + s * rng.normal();
      m(i, j) = x;
    }
  }
  return m;
}

}  // namespace

TEST_CASE("univariate ESS") {
  const double n = 100000;
  const Eigen::VectorXd x = iid(100000, 1, 1).col(0);
  for (auto method : {EssMethod::geyer, EssMethod::ar_spectral}) {
    const double e = ess_univariate(x, method);
    CHECK((e > 0.9 * n && e < 1.1 * n));
    const double a = ess_univariate(ar1(100000, 1, 0.5, 2).col(0), method);
    CHECK(a == doctest::Approx(n / 3).epsilon(0.1));
  }
  CHECK_THROWS_AS(ess_univariate(Eigen::VectorXd::Constant(100, 2.0)), NumericError);
  CHECK_THROWS_AS(ess_univariate(Eigen::VectorXd::Zero(5)), ConfigError);
}

TEST_CASE("ESS flavors on i.i.d. input across seeds") {
  const std::size_t n = 100000;
  int pass = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const std::vector<Eigen::MatrixXd> chains{iid(n, 3, 100 + seed)};
    const EssSummary s = ess_summary(chains, n);
    const auto ok = [&](double e) { return e >= 0.85 * n && e <= 1.15 * n; };
    pass += ok(s.min) && ok(s.mean) && ok(s.multi);
  }
  CHECK(pass >= 18);
}

TEST_CASE("multivariate ESS") {
  const Eigen::MatrixXd x = iid(10000, 3, 5);
  CHECK(multi_ess(x) == doctest::Approx(10000).epsilon(0.15));
  Eigen::MatrixXd dup(10000, 3);
  dup << x.col(0), x.col(1), x.col(0);
  CHECK_THROWS_AS(multi_ess(dup), NumericError);
  CHECK_THROWS_AS(multi_ess(iid(3, 5, 1)), NumericError);

  const Eigen::MatrixXd a = ar1(100000, 3, 0.5, 7);
  double log_geo = 0;
  for (Eigen::Index j = 0; j < 3; ++j) {
    log_geo += std::log(ess_univariate(a.col(j))) / 3;
  }
  CHECK(multi_ess(a) == doctest::Approx(std::exp(log_geo)).epsilon(0.15));

  // Multi-chain form of a single chain equals the single-chain estimate.
  CHECK(multi_ess(std::vector<Eigen::MatrixXd>{a}) == doctest::Approx(multi_ess(a)).epsilon(1e-10));
}

TEST_CASE("PSRF") {
  const Eigen::MatrixXd x = iid(1000, 2, 3);
  const PsrfResult same = psrf({x, x, x});
  CHECK(same.max <= 1.0);
  CHECK(same.max == doctest::Approx(std::sqrt(999.0 / 1000.0)));

  std::vector<Eigen::MatrixXd> chains;
  for (std::uint64_t c = 0; c < 4; ++c) {
    chains.push_back(iid(10000, 3, 10 + c));
  }
  CHECK(psrf(chains).max < 1.01);

  auto shifted = chains;
  shifted[1].array() += 5.0;
  CHECK(psrf(shifted).max > 1.1);

  CHECK_THROWS_AS(psrf({x}), ConfigError);
  CHECK_THROWS_AS(psrf({x, iid(500, 2, 4)}), ConfigError);
}

TEST_CASE("convergence scan") {
  const auto points = convergence_checkpoints(100);
  CHECK(points.front() == 10);
  CHECK(points[1] == 12);
  CHECK(points.back() == 100);

  std::vector<Eigen::MatrixXd> chains;
  for (std::uint64_t c = 0; c < 4; ++c) {
    chains.push_back(iid(5000, 2, 20 + c));
  }
  // i.i.d. chains pass the relaxed threshold at the first checkpoint.
  const auto relaxed = find_n_conv(chains, {1.5, false});
  REQUIRE(relaxed.converged_at);
  CHECK(*relaxed.converged_at == 10);

  const auto strict = find_n_conv(chains);
  REQUIRE(strict.converged_at);
  CHECK(psrf(chains, *strict.converged_at).max < 1.01);
  const auto avg = find_n_conv(chains, {1.01, true});
  REQUIRE(avg.converged_at);
  CHECK(*avg.converged_at <= *strict.converged_at);

  // Diverging trends never converge.
  auto trend = chains;
  for (std::size_t c = 0; c < trend.size(); ++c) {
    for (Eigen::Index i = 0; i < trend[c].rows(); ++i) {
      trend[c].row(i).array() += (c % 2 == 0 ? 1.0 : -1.0) * 0.01 * static_cast<double>(i);
    }
  }
  CHECK_FALSE(find_n_conv(trend).converged_at);

  // A stuck chain counts as not converged instead of aborting the scan.
  auto stuck = chains;
  for (std::size_t c = 0; c < stuck.size(); ++c) {
    stuck[c].setConstant(static_cast<double>(c));
  }
  const auto scan = find_n_conv(stuck);
  CHECK_FALSE(scan.converged_at);
  CHECK(std::isinf(scan.trajectory.front().max));
}

TEST_CASE("grad per ESS and REF") {
  const EssSummary ess{100, 200, 400};
  const GradPerEss g = grad_per_ess(200, 1000, 1.0, 3, 1, ess);
  CHECK(g.grad == 3600);
  CHECK(g.per_min == doctest::Approx(36));
  CHECK(g.per_mean == doctest::Approx(18));
  CHECK(g.per_multi == doctest::Approx(9));
  const GradPerEss twice = grad_per_ess(200, 1000, 2.0, 3, 1, ess);
  CHECK(twice.per_min == doctest::Approx(2 * g.per_min));
  CHECK(twice.per_multi == doctest::Approx(2 * g.per_multi));
  CHECK(ref_metric(5, 5) == 1.0);
  CHECK(ref_metric(10, 20) == 2.0);
  CHECK(ref_metric(3, 7) * ref_metric(7, 3) == doctest::Approx(1.0));
}

TEST_CASE("diagnose report") {
  std::vector<Eigen::MatrixXd> chains;
  for (std::uint64_t c = 0; c < 4; ++c) {
    chains.push_back(iid(3000, 3, 40 + c));
  }
  DiagnosticsOptions o;
  o.window = 1000;
  const DiagnosticsReport r = diagnose(chains, o);
  CHECK(r.converged);
  CHECK(r.metric_length == *r.convergence.converged_at + 1000);
  CHECK(r.ess.mean == doctest::Approx(4.0 * r.metric_length).epsilon(0.15));
}
