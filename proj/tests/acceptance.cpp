// Acceptance checks: one PASS/FAIL line per criterion, exit status 1 if any fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <memory>
#include <numbers>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "atune/bench/artifacts.hpp"
#include "atune/bench/commands.hpp"
#include "atune/bench/run_config.hpp"
#include "atune/diagnostics.hpp"
#include "atune/model.hpp"
#include "atune/saia_map.hpp"
#include "atune/sampler.hpp"
#include "atune/scheme.hpp"
#include "atune/tuning.hpp"

using namespace atune;
using namespace atune::bench;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << "[failed: " << what << "] ";
    }
  }
};

int failures = 0;

void report(int id, const std::string& title, const std::function<void(Outcome&)>& body) {
  Outcome o;
  const auto start = Clock::now();
  try {
    body(o);
  } catch (const std::exception& e) {
    o.pass = false;
    o.detail << "[exception: " << e.what() << "] ";
  }
  failures += o.pass ? 0 : 1;
  std::printf("%s criterion %d: %s | %s(%.1f s)\n", o.pass ? "PASS" : "FAIL", id, title.c_str(),
              o.detail.str().c_str(), seconds_since(start));
  std::fflush(stdout);
}

std::shared_ptr<const SaiaMap> default_map() {
  return std::shared_ptr<const SaiaMap>(&SaiaMap::default_map(), [](const SaiaMap*) {});
}

Matrix iid(std::size_t n, std::size_t d, std::uint64_t seed) {
  Rng rng(seed, 0, StreamPurpose::data);
  Matrix m(n, d);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      m(i, j) = rng.normal();
    }
  }
  return m;
}

// Kolmogorov-Smirnov statistic of `x` against the standard normal CDF.
double ks_statistic(std::vector<double> x) {
  std::sort(x.begin(), x.end());
  const double n = static_cast<double>(x.size());
  double d = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double f = normal_cdf(x[i]);
    d = std::max({d, (i + 1) / n - f, f - i / n});
  }
  return d;
}

// 1% critical value with Stephens' small-sample correction.
double ks_critical_1pct(std::size_t n) {
  const double s = std::sqrt(static_cast<double>(n));
  return 1.628 / (s + 0.12 + 0.11 / s);
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

int main() {
  report(1, "h_lower = 2.0772 +- 1e-3 in under 1 s", [](Outcome& o) {
    const auto start = Clock::now();
    const double h = find_h_lower();
    const double t = seconds_since(start);
    o.detail << "h_lower=" << format_double(h) << " time=" << t << "s ";
    o.require(std::abs(h - 2.0772) <= 1e-3, "value");
    o.require(t < 1.0, "runtime");
  });

  report(2, "phi*D constants and D = 2 clipping", [](Outcome& o) {
    const auto& map = SaiaMap::default_map();
    for (std::size_t d : {25, 167, 500, 1000, 2000}) {
      const NoiseInterval n = phi_interval(d, map);
      const double lo = n.lower * d, hi = n.upper * d;
      o.detail << "D=" << d << ":(" << lo << "," << hi << ") ";
      o.require(lo >= 0.42 && lo <= 0.46, "phi_lower*D at D=" + std::to_string(d));
      o.require(hi >= 2.55 && hi <= 2.75, "phi_upper*D at D=" + std::to_string(d));
    }
    const NoiseInterval two = phi_interval(2, map);
    o.detail << "D=2:(" << two.lower << "," << two.upper << ") ";
    o.require(two.upper == 1.0, "D=2 upper clip");
    o.require(std::abs(two.lower / 0.21904 - 1.0) <= 0.05, "D=2 lower");
  });

  report(3, "step interval ratio 3/h_lower and CF = 57.7 inverse check", [](Outcome& o) {
    const double hl = find_h_lower();
    double worst = 0.0;
    for (const char* id : {"gauss-100", "german", "banana", "gauss-identity-50"}) {
      for (SamplerMode mode : {SamplerMode::ghmc, SamplerMode::hmc}) {
        RunConfig c;
        c.benchmark = id;
        c.mode = mode;
        c.burnin = 600;
        const TuningReport r = cmd_tune(c, false);
        worst = std::max(worst, std::abs(r.step_size.upper / r.step_size.lower - 3.0 / hl));
      }
    }
    o.detail << "max |ratio - 3/h_lower|=" << worst << " ";
    o.require(worst <= 1e-9, "ratio");
    const Interval iv = stepsize_interval(57.7);
    const double cf_from_lower = hl / 0.036, cf_from_upper = 3.0 / 0.052;
    o.detail << "CF=57.7 -> (" << iv.lower << "," << iv.upper << "), implied CF " << cf_from_lower << "/"
             << cf_from_upper << " ";
    o.require(std::abs(cf_from_lower / 57.7 - 1) <= 0.01 && std::abs(cf_from_upper / 57.7 - 1) <= 0.01,
              "implied CF");
    o.require(std::round(iv.lower * 1000) == 36 && std::round(iv.upper * 1000) == 52, "interval");
  });

  report(4, "VV ratio roots and h^6/32 identity", [](Outcome& o) {
    const auto r2 = vv_ratio_roots(2);
    const auto r3 = vv_ratio_roots(3);
    o.require(r2.size() == 2 && std::abs(r2[0] - 1) <= 1e-9 && std::abs(r2[1] - std::sqrt(3.0)) <= 1e-9, "k=2 roots");
    o.require(std::any_of(r3.begin(), r3.end(), [](double r) { return std::abs(r - std::sqrt(2.0)) <= 1e-9; }),
              "sqrt(2) root");
    o.require(!r3.empty() && std::abs(3 * r3.front() - 2.296) <= 1e-3, "3 h'_3");
    double worst = 0.0;
    const auto vv = build_scheme("VV");
    for (int i = 1; i < 200; ++i) {
      const double h = 2.0 * i / 200;
      const double closed = std::pow(h, 6) / 32;
      worst = std::max({worst, std::abs(expected_energy_error_vv(1, h) - closed),
                        std::abs(expected_energy_error(harmonic_propagator(vv, h)) - closed)});
    }
    o.detail << "k=3 roots " << r3.front() << "," << r3[1] << "," << r3.back() << " 3h'=" << 3 * r3.front()
             << " max|E-h^6/32|=" << worst << " ";
    o.require(worst <= 1e-12, "h^6/32");
  });

  report(5, "rotation angle anchor and L candidates {2,5,7}", [](Outcome& o) {
    const auto& map = SaiaMap::default_map();
    const double h = 2.5386;
    const double eta = rotation_angle(map.scheme_at(h), h);
    o.detail << "eta(2.5386)=" << eta << " ";
    o.require(std::abs(eta - 2.637354) <= 1e-3, "eta");
    const double eta_mid = eta_at_midpoint(map);
    for (double sf : {1.5, 2.0, 5.0, 1e6}) {
      const auto l = l_candidates_from_eta(sf, eta_mid);
      const std::set<long> rounded{std::lround(l[0]), std::lround(l[1]), std::lround(l[2])};
      o.require(rounded == std::set<long>{2, 5, 7}, "rounding at S_f=" + std::to_string(sf));
      if (sf == 1e6) {
        o.detail << "L=(" << l[0] << "," << l[1] << "," << l[2] << ") ";
      }
    }
  });

  report(6, "sampler exactness: KS stationarity, Metropolis at ln 2, harmonic AR", [](Outcome& o) {
    // 64 chains started from the exact target with the tuned settings for a 1-D Gaussian.
    GaussianModel g({Matrix::Identity(1, 1)}, "gauss-1");
    BurninOptions bo;
    bo.seed = 11;
    const TuningReport rep = tune(g, bo, {}, SaiaMap::default_map());
    const SamplerConfig cfg = production_config(rep, default_map(), 11);
    Rng init(11, 0, StreamPurpose::initial_state);
    std::vector<Vector> starts(64);
    for (auto& s : starts) {
      s = Vector::Constant(1, init.normal());
    }
    const auto chains = run_chains(cfg, g, 64, 200, 4, starts);
    std::vector<double> pooled;
    for (const auto& c : chains) {
      for (Eigen::Index i = 0; i < c.samples.rows(); ++i) {
        pooled.push_back(c.samples(i, 0));
      }
    }
    const double ks = ks_statistic(pooled);
    const double crit = ks_critical_1pct(pooled.size());
    o.detail << "KS=" << ks << " crit=" << crit << " (n=" << pooled.size() << ") ";
    o.require(ks < crit, "KS");

    Rng rng(12, 0);
    int accepted = 0;
    for (int i = 0; i < 100000; ++i) {
      accepted += metropolis_accept(std::log(2.0), rng);
    }
    o.detail << "AR(ln2)=" << accepted / 1e5 << " ";
    o.require(std::abs(accepted / 1e5 - 0.5) <= 0.01, "Metropolis");

    SamplerConfig hmc;
    hmc.mode = SamplerMode::hmc;
    hmc.step_size = StepSizeRule::fixed(1.9);
    hmc.trajectory = TrajectoryRule::fixed(5);
    hmc.noise = NoiseRule::fixed(1.0);
    hmc.integrator = IntegratorRule::fixed(build_scheme("VV"));
    hmc.seed = 13;
    const double ar = run_chain(hmc, g, 0, 10000, Vector::Zero(1)).acceptance_rate();
    const double mu = expected_energy_error(harmonic_propagator(build_scheme("VV"), 1.9).power(5));
    const double predicted = 2 * normal_cdf(-std::sqrt(mu / 2));
    o.detail << "harmonic AR=" << ar << " predicted=" << predicted << " ";
    o.require(std::abs(ar - predicted) <= 0.03, "harmonic AR");
  });

  report(7, "diagnostics calibration", [](Outcome& o) {
    std::vector<Matrix> chains;
    for (std::uint64_t c = 0; c < 4; ++c) {
      chains.push_back(iid(10000, 5, 70 + c));
    }
    const double n = 40000;
    for (EssMethod m : {EssMethod::geyer, EssMethod::ar_spectral}) {
      const EssSummary s = ess_summary(chains, 10000, {m, false});
      o.detail << (m == EssMethod::geyer ? "geyer" : "ar") << " ESS/N=" << s.min / n << "," << s.mean / n << ","
               << s.multi / n << " ";
      for (double e : {s.min, s.mean, s.multi}) {
        o.require(std::abs(e / n - 1) <= 0.15, "i.i.d. ESS");
      }
    }
    const double max_psrf = psrf(chains).max;
    const double same = psrf({chains[0], chains[0], chains[0]}).max;
    o.detail << "maxPSRF=" << max_psrf << " identical=" << same << " ";
    o.require(max_psrf < 1.01, "i.i.d. PSRF");
    o.require(same <= 1.0, "identical PSRF");
    Rng rng(71, 0);
    Eigen::VectorXd x(100000);
    double v = rng.normal();
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      v = 0.5 * v + std::sqrt(0.75) * rng.normal();
      x(i) = v;
    }
    const double ar = ess_univariate(x);
    o.detail << "AR(1) ESS/(N/3)=" << ar / (1e5 / 3) << " ";
    o.require(std::abs(ar / (1e5 / 3) - 1) <= 0.1, "AR(1)");
  });

  report(8, "gauss-100: AT-GHMC at least 2x better than HMC in >= 4 of 5 seeds", [](Outcome& o) {
    const auto start = Clock::now();
    int mean_wins = 0, multi_wins = 0;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      RunConfig c;
      c.benchmark = "gauss-100";
      c.seed = seed;
      c.data.data_seed = seed;
      c.chains = 4;
      c.burnin = 2000;
      c.production = 5000;
      c.workers = 4;
      const Benchmark bench = make_benchmark(c.benchmark, c.data);
      const TuningReport rep = cmd_tune(c, false);
      const SamplerConfig at = sampler_config(c, rep);
      // HMC with full refresh and L ~ U{1, 2D/3} over the same step interval and integrator.
      SamplerConfig hmc = at;
      hmc.mode = SamplerMode::hmc;
      hmc.noise = NoiseRule::fixed(1.0);
      hmc.trajectory = TrajectoryRule::uniform(1, 67);
      BurninOptions bo = c.burnin_options();
      const auto starts = warm_starts(*bench.model, bo, SaiaMap::default_map(), c.chains, c.workers);
      const auto a = diagnose(run_chains(at, *bench.model, c.chains, c.production, c.workers, starts),
                              c.diagnostics_options(at.trajectory));
      const auto h = diagnose(run_chains(hmc, *bench.model, c.chains, c.production, c.workers, starts),
                              c.diagnostics_options(hmc.trajectory));
      const double r_mean = ref_metric(a.per_ess.per_mean, h.per_ess.per_mean);
      const double r_multi = ref_metric(a.per_ess.per_multi, h.per_ess.per_multi);
      mean_wins += r_mean >= 2.0;
      multi_wins += r_multi >= 2.0;
      o.detail << "seed " << seed << ": REF mean=" << r_mean << " multi=" << r_multi << "; ";
    }
    const double t = seconds_since(start);
    o.detail << "wins mean " << mean_wins << "/5 multi " << multi_wins << "/5 ";
    o.require(mean_wins >= 4, "grad/meanESS");
    o.require(multi_wins >= 4, "grad/multiESS");
    o.require(t < 600, "runtime");
  });

  report(9, "+-5% h_lower changes grad/meanESS by < 25%", [](Outcome& o) {
    // Seed-averaged metric per perturbation and sampler.
    double sums[2][3] = {};
    const std::vector<double> deltas{-0.05, 0.0, 0.05};
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      RunConfig c;
      c.benchmark = "gauss-100";
      c.seed = seed;
      c.workers = 4;
      const auto rows = cmd_sensitivity(c, deltas, {SamplerMode::ghmc, SamplerMode::hmc});
      for (std::size_t i = 0; i < rows.size(); ++i) {
        sums[i / 3][i % 3] += rows[i].diagnostics.per_ess.per_mean / 5.0;
      }
    }
    const char* names[] = {"AT-GHMC", "AT-HMC"};
    for (int m = 0; m < 2; ++m) {
      const double lo = sums[m][0] / sums[m][1] - 1, hi = sums[m][2] / sums[m][1] - 1;
      o.detail << names[m] << " change " << lo * 100 << "%/" << hi * 100 << "% ";
      o.require(std::abs(lo) < 0.25 && std::abs(hi) < 0.25, names[m]);
    }
  });

  report(10, "bit-identical chain files across 1, 4 and 8 workers", [](Outcome& o) {
    const auto root = std::filesystem::temp_directory_path() / "atune_acceptance_repro";
    std::filesystem::remove_all(root);
    std::vector<std::filesystem::path> dirs;
    for (std::size_t w : {1, 4, 8}) {
      RunConfig c;
      c.benchmark = "german";
      c.chains = 8;
      c.burnin = 1000;
      c.production = 1000;
      c.seed = 21;
      c.workers = w;
      c.output = root / ("w" + std::to_string(w));
      cmd_sample(c);
      dirs.push_back(c.output);
    }
    const auto files = chain_files(dirs[0]);
    std::size_t identical = 0;
    for (const auto& f : files) {
      const std::string ref = slurp(f);
      bool same = true;
      for (std::size_t k = 1; k < dirs.size(); ++k) {
        same = same && slurp(dirs[k] / "chains" / f.filename()) == ref;
      }
      identical += same;
    }
    o.detail << identical << "/" << files.size() << " files identical ";
    o.require(files.size() == 8 && identical == files.size(), "chain files");
    std::filesystem::remove_all(root);
  });

  std::printf("%d of 10 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
