#include "atune/tuning.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numbers>
#include <mutex>
#include <sstream>
#include <thread>

#include <Eigen/Eigenvalues>

#include "atune/error.hpp"

namespace atune {

namespace {

double resolve_h_lower(double h_lower) {
  if (h_lower == 0.0) {
    return find_h_lower();
  }
  if (!(h_lower > 0.0) || !(h_lower < kColsi3)) {
    throw ConfigError("h_lower must lie in (0, 3)");
  }
  return h_lower;
}

double sum_sixth_powers(const std::vector<double>& omegas) {
  double sum = 0.0;
  for (double w : omegas) {
    sum += std::pow(w, 6.0);
  }
  return sum;
}

void check_fitting_inputs(double acceptance, double dt) {
  if (!(acceptance >= 0.0 && acceptance <= 1.0)) {
    throw ConfigError("fitting factor: acceptance rate must lie in [0, 1]");
  }
  if (!(dt > 0.0)) {
    throw ConfigError("fitting factor: burn-in step size must be positive");
  }
}

// One Velocity Verlet step from `state` with fresh momenta; returns min(1, exp(-dH)).
double trial_acceptance(const TargetModel& model, const PhaseState& state, double dt, Rng& rng) {
  static const SplittingScheme vv = build_scheme("VV");
  PhaseState trial = state;
  for (Eigen::Index i = 0; i < trial.momentum.size(); ++i) {
    trial.momentum[i] = rng.normal();
  }
  const Vector ones = Vector::Ones(trial.theta.size());
  const double h0 = trial.potential + 0.5 * trial.momentum.squaredNorm();
  if (apply_step(vv, model, trial, dt, ones) != StepStatus::ok) {
    return 0.0;
  }
  const double dh = trial.potential + 0.5 * trial.momentum.squaredNorm() - h0;
  return std::isfinite(dh) ? std::min(1.0, std::exp(-dh)) : 0.0;
}

// Double or halve until the one-step acceptance crosses 1/2.
double initial_step_heuristic(const TargetModel& model, const PhaseState& state, Rng& rng) {
  double dt = 1.0;
  const bool grow = trial_acceptance(model, state, dt, rng) > 0.5;
  for (int i = 0; i < 60; ++i) {
    const double next = grow ? dt * 2.0 : dt * 0.5;
    const bool above = trial_acceptance(model, state, next, rng) > 0.5;
    if (grow && !above) {
      break;
    }
    dt = next;
    if (!grow && above) {
      break;
    }
    if (dt > 1e3) {
      break;
    }
  }
  return dt;
}

double sample_sd(const std::vector<double>& values) {
  if (values.size() < 2) {
    return 0.0;
  }
  double mean = 0.0;
  for (double v : values) {
    mean += v;
  }
  mean /= static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) {
    ss += (v - mean) * (v - mean);
  }
  return std::sqrt(ss / static_cast<double>(values.size() - 1));
}

}  // namespace

double adapt_stepsize(double window_acceptance, double dt, double target, double gain, std::size_t t) {
  if (!(dt > 0.0)) {
    throw ConfigError("step-size adaptation: step size must be positive");
  }
  if (!(target > 0.0 && target < 1.0)) {
    throw ConfigError("step-size adaptation: target acceptance must lie in (0, 1)");
  }
  const double rate = gain / std::sqrt(static_cast<double>(std::max<std::size_t>(t, 1)));
  return dt * std::exp(rate * (window_acceptance - target));
}

FrequencyEstimate collect_frequencies(const TargetModel& model, const std::vector<Vector>& samples) {
  if (!model.has_hessian()) {
    throw UnsupportedError(model.name() + ": frequencies need a Hessian");
  }
  if (samples.empty()) {
    throw ConfigError("frequencies: no samples");
  }
  const std::size_t d = model.dimension();
  FrequencyEstimate estimate;
  std::vector<double> sum(d, 0.0);
  for (const auto& theta : samples) {
    Eigen::SelfAdjointEigenSolver<Matrix> solver(hessian(model, theta), Eigen::EigenvaluesOnly);
    if (solver.info() != Eigen::Success) {
      throw NumericError(model.name() + ": Hessian eigendecomposition failed");
    }
    const Vector& eigenvalues = solver.eigenvalues();  // ascending
    for (std::size_t j = 0; j < d; ++j) {
      const double lambda = eigenvalues[static_cast<Eigen::Index>(j)];
      if (lambda < 0.0) {
        ++estimate.clamped;
      }
      sum[j] += std::sqrt(std::max(lambda, 0.0));
    }
  }
  estimate.omegas.resize(d);
  for (std::size_t j = 0; j < d; ++j) {
    estimate.omegas[j] = sum[j] / static_cast<double>(samples.size());
  }
  estimate.max = estimate.omegas.back();
  estimate.sd = sample_sd(estimate.omegas);
  return estimate;
}

double max_frequency_power(const TargetModel& model, const Vector& theta, Rng& rng, int iterations) {
  const Eigen::Index d = theta.size();
  const double eps = 1e-5 * std::max(1.0, theta.norm());
  auto hv = [&](const Vector& v) {
    const Vector up = model.gradient(theta + eps * v);
    const Vector down = model.gradient(theta - eps * v);
    return Vector((up - down) / (2.0 * eps));
  };
  Vector v(d);
  for (Eigen::Index i = 0; i < d; ++i) {
    v[i] = rng.normal();
  }
  v.normalize();
  double lambda = 0.0;
  for (int k = 0; k < iterations; ++k) {
    const Vector w = hv(v);
    const double next = v.dot(w);
    const double norm = w.norm();
    if (!(norm > 0.0) || !std::isfinite(norm)) {
      break;
    }
    v = w / norm;
    const bool settled = k > 5 && std::abs(next - lambda) <= 1e-8 * std::abs(next);
    lambda = next;
    if (settled) {
      break;
    }
  }
  return std::sqrt(std::max(lambda, 0.0));
}

BurninStats run_burnin(const TargetModel& model, const BurninOptions& options, const SaiaMap& map) {
  if (options.iterations < 100) {
    throw ConfigError("burn-in: at least 100 iterations are required");
  }
  if (!(options.target_acceptance > 0.0 && options.target_acceptance < 1.0)) {
    throw ConfigError("burn-in: target acceptance must lie in (0, 1)");
  }
  if (options.window < 1 || !(options.gain > 0.0)) {
    throw ConfigError("burn-in: adaptation window and gain must be positive");
  }
  const std::size_t d = model.dimension();
  const double h_lower = resolve_h_lower(options.h_lower);
  BurninStats stats;
  stats.iterations = options.iterations;

  SamplerConfig config;
  config.mode = options.mode;
  config.trajectory = TrajectoryRule::fixed(1);
  config.integrator = IntegratorRule::fixed(build_scheme("VV"));
  config.seed = options.seed;
  if (options.mode == SamplerMode::ghmc) {
    const NoiseInterval noise = phi_interval(d, map, h_lower);
    stats.noise_lower = noise.lower;
    stats.noise_upper = noise.upper;
    config.noise = NoiseRule::uniform(noise.lower, noise.upper);
  } else {
    config.noise = NoiseRule::fixed(1.0);
  }

  PhaseState state = initial_state(model, config, options.chain, options.initial);
  Rng rng(options.seed, options.chain, StreamPurpose::burnin);
  double dt = options.initial_step > 0.0 ? options.initial_step : initial_step_heuristic(model, state, rng);
  config.step_size = StepSizeRule::fixed(dt);
  config.validate(d);

  // Adaptation phase.
  const std::size_t adapt_end = options.iterations / 2;
  const std::size_t windows = adapt_end / options.window;
  std::size_t t = 0;
  std::size_t accepted_in_window = 0;
  std::size_t in_window = 0;
  double log_sum = 0.0;
  std::size_t log_count = 0;
  for (std::size_t i = 0; i < adapt_end; ++i) {
    const IterationRecord r = ghmc_iteration(state, config, model, rng);
    if (r.divergent) {
      ++stats.divergences;
      dt *= 0.5;
      config.step_size = StepSizeRule::fixed(dt);
    }
    accepted_in_window += r.accepted ? 1 : 0;
    if (++in_window == options.window) {
      ++t;
      const double rate = static_cast<double>(accepted_in_window) / static_cast<double>(in_window);
      dt = adapt_stepsize(rate, dt, options.target_acceptance, options.gain, t);
      config.step_size = StepSizeRule::fixed(dt);
      if (2 * t > windows) {
        log_sum += std::log(dt);
        ++log_count;
      }
      accepted_in_window = 0;
      in_window = 0;
    }
  }
  if (log_count > 0) {
    dt = std::exp(log_sum / static_cast<double>(log_count));
  }
  stats.step_size = dt;
  config.step_size = StepSizeRule::fixed(dt);

  // Collection phase at the frozen step size.
  const std::size_t collect = options.iterations - adapt_end;
  const std::size_t thinned = std::min(options.frequency_samples, collect);
  std::vector<std::size_t> keep;
  for (std::size_t j = 0; j < thinned; ++j) {
    keep.push_back((j + 1) * collect / thinned - 1);
  }
  std::vector<Vector> samples;
  std::size_t accepted = 0;
  double energy_sum = 0.0;
  std::size_t energy_count = 0;
  for (std::size_t i = 0, next = 0; i < collect; ++i) {
    const IterationRecord r = ghmc_iteration(state, config, model, rng);
    if (r.divergent) {
      ++stats.divergences;
    } else if (r.accepted || !options.accepted_only_energy) {
      energy_sum += r.delta_h;
      ++energy_count;
    }
    accepted += r.accepted ? 1 : 0;
    if (next < keep.size() && keep[next] == i) {
      samples.push_back(state.theta);
      ++next;
    }
  }
  if (accepted == 0) {
    std::ostringstream msg;
    msg << "burn-in rejected every proposal at step size " << dt
        << "; pass a smaller initial step size";
    throw NumericError(msg.str());
  }
  stats.acceptance_rate = static_cast<double>(accepted) / static_cast<double>(collect);
  stats.mean_energy_error = energy_count > 0 ? energy_sum / static_cast<double>(energy_count) : 0.0;
  stats.final_theta = state.theta;
  if (!options.analyze) {
    return stats;
  }

  if (options.frequencies && model.has_hessian()) {
    const FrequencyEstimate f = collect_frequencies(model, samples);
    stats.has_spectrum = true;
    stats.frequencies = f.omegas;
    stats.max_frequency = f.max;
    stats.frequency_sd = f.sd;
    stats.clamped_eigenvalues = f.clamped;
    if (f.clamped > 0) {
      stats.warnings.push_back(std::to_string(f.clamped) +
                               " negative Hessian eigenvalues were clamped to zero");
    }
  } else {
    if (options.frequencies) {
      stats.warnings.push_back(model.name() +
                               " has no Hessian; only the maximum frequency was estimated");
    }
    Rng power_rng(options.seed, options.chain, StreamPurpose::tuning);
    double sum = 0.0;
    for (const auto& theta : samples) {
      sum += max_frequency_power(model, theta, power_rng);
    }
    stats.max_frequency = sum / static_cast<double>(samples.size());
  }
  if (!(stats.max_frequency > 0.0)) {
    throw NumericError("burn-in: estimated maximum frequency is zero");
  }
  return stats;
}

double fitting_factor_s(double acceptance, double dt, double max_frequency, std::size_t dimension) {
  check_fitting_inputs(acceptance, dt);
  if (!(max_frequency > 0.0) || dimension == 0) {
    throw ConfigError("fitting factor: maximum frequency and dimension must be positive");
  }
  const double miss = 1.0 - acceptance;
  const double root = std::pow(2.0 * std::numbers::pi * miss * miss / static_cast<double>(dimension), 1.0 / 6.0);
  return std::max(1.0, 2.0 / (max_frequency * dt) * root);
}

double fitting_factor_s_omega(double acceptance, double dt, const std::vector<double>& omegas) {
  check_fitting_inputs(acceptance, dt);
  const double sum6 = sum_sixth_powers(omegas);
  if (!(sum6 > 0.0)) {
    throw ConfigError("fitting factor: frequencies must not all be zero");
  }
  const double miss = 1.0 - acceptance;
  return std::max(1.0, 2.0 / dt * std::pow(2.0 * std::numbers::pi * miss * miss / sum6, 1.0 / 6.0));
}

double fitting_factor_s_energy(double energy_error, double dt, double max_frequency, std::size_t dimension) {
  return std::max(1.0, 1.0 / (max_frequency * dt) *
                           std::pow(32.0 * energy_error / static_cast<double>(dimension), 1.0 / 6.0));
}

double fitting_factor_s_omega_energy(double energy_error, double dt, const std::vector<double>& omegas) {
  return std::max(1.0, 1.0 / dt * std::pow(32.0 * energy_error / sum_sixth_powers(omegas), 1.0 / 6.0));
}

double dimensionalization_factor(double fitting_factor, double max_frequency, double frequency_sd) {
  if (!(max_frequency > 0.0) || !(frequency_sd >= 0.0)) {
    throw ConfigError("CF: maximum frequency must be positive and the spread nonnegative");
  }
  if (frequency_sd > 1.0) {
    if (!(max_frequency - frequency_sd > 0.0)) {
      throw ConfigError("CF: frequency spread exceeds the maximum frequency; use the S fitting mode");
    }
    return fitting_factor * (max_frequency - frequency_sd);
  }
  return fitting_factor * max_frequency;
}

Interval stepsize_interval(double cf, double h_lower) {
  if (!(cf > 0.0)) {
    throw ConfigError("step-size interval: CF must be positive");
  }
  return {resolve_h_lower(h_lower) / cf, kColsi3 / cf};
}

NoiseInterval phi_interval(std::size_t dimension, const SaiaMap& map, double h_lower) {
  const double lo_h = resolve_h_lower(h_lower);
  auto phi = [&](double h) { return optimal_noise(h, lambda3(map.kick_at(h), map.drift_at(h)), dimension); };
  NoiseInterval interval;
  interval.lower = phi(kColsi3);
  interval.upper = phi(lo_h);
  interval.lower_clipped = interval.lower >= 1.0;
  interval.upper_clipped = interval.upper >= 1.0;
  return interval;
}

TrajectoryRule l_scheme(double fitting_factor) {
  if (!(fitting_factor >= 1.0)) {
    throw ConfigError("L rule: fitting factor must be at least 1");
  }
  return fitting_factor < 1.5 ? TrajectoryRule::fixed(1) : TrajectoryRule::choice({2, 5, 7});
}

std::array<double, 3> l_candidates_from_eta(double fitting_factor, double eta) {
  if (!(fitting_factor >= 1.0) || !(eta > 0.0 && eta < std::numbers::pi)) {
    throw ConfigError("L candidates: need S_f >= 1 and eta in (0, pi)");
  }
  const double x = std::asin(std::sin(eta) / std::pow(fitting_factor, 3.0));
  std::array<double, 3> out{};
  for (int n = 1; n <= 3; ++n) {
    out[static_cast<std::size_t>(n - 1)] = (x + 2.0 * std::numbers::pi * n) / eta;
  }
  return out;
}

double l_zero_branch(double fitting_factor, double eta) {
  if (!(fitting_factor >= 1.0) || !(eta > 0.0 && eta < std::numbers::pi)) {
    throw ConfigError("L candidates: need S_f >= 1 and eta in (0, pi)");
  }
  const double x = std::asin(std::sin(eta) / std::pow(fitting_factor, 3.0));
  return (eta > 0.5 * std::numbers::pi ? std::numbers::pi - x : x) / eta;
}

double eta_at_midpoint(const SaiaMap& map, double h_lower) {
  const double h = 0.5 * (resolve_h_lower(h_lower) + kColsi3);
  return rotation_angle(map.scheme_at(h), h);
}

TuningReport produce_settings(const BurninStats& stats, std::size_t dimension, const TuningOptions& options,
                              const SaiaMap& map) {
  TuningReport report;
  report.mode = options.mode;
  report.dimension = dimension;
  report.burnin = stats;
  report.warnings = stats.warnings;
  report.h_lower = resolve_h_lower(options.h_lower);

  report.fitting_mode = options.fitting.value_or(stats.has_spectrum ? FittingMode::s_omega : FittingMode::s);
  if (report.fitting_mode == FittingMode::s_omega && !stats.has_spectrum) {
    throw ConfigError("S_omega fitting needs the frequency spectrum; enable frequencies or use S");
  }
  if (stats.acceptance_rate >= 1.0) {
    report.fitting_factor = 1.0;
    report.warnings.push_back("burn-in accepted every proposal; S_f set to 1");
  } else if (report.fitting_mode == FittingMode::s_omega) {
    report.fitting_factor = fitting_factor_s_omega(stats.acceptance_rate, stats.step_size, stats.frequencies);
  } else {
    report.fitting_factor =
        fitting_factor_s(stats.acceptance_rate, stats.step_size, stats.max_frequency, dimension);
  }
  const double sd = stats.has_spectrum ? stats.frequency_sd : 0.0;
  report.cf = dimensionalization_factor(report.fitting_factor, stats.max_frequency, sd);
  report.step_size = stepsize_interval(report.cf, report.h_lower);

  if (options.mode == SamplerMode::ghmc) {
    report.noise = phi_interval(dimension, map, report.h_lower);
    report.adaptive_noise = options.adaptive_noise;
    if (report.noise->lower_clipped && report.noise->upper_clipped) {
      report.warnings.push_back("both noise endpoints clip to 1; momentum is fully refreshed");
    }
  }
  if (options.mode == SamplerMode::ghmc || options.l_opt_for_hmc) {
    report.trajectory = l_scheme(report.fitting_factor);
  } else {
    const int upper = std::max(1, static_cast<int>(std::lround(2.0 * static_cast<double>(dimension) / 3.0)));
    report.trajectory = TrajectoryRule::uniform(1, upper);
  }
  report.eta_midpoint = eta_at_midpoint(map, report.h_lower);
  report.l_candidates = l_candidates_from_eta(report.fitting_factor, report.eta_midpoint);
  return report;
}

SamplerConfig production_config(const TuningReport& report, std::shared_ptr<const SaiaMap> map,
                                std::uint64_t seed) {
  SamplerConfig config;
  config.mode = report.mode;
  config.step_size = StepSizeRule::uniform(report.step_size.lower, report.step_size.upper);
  config.trajectory = report.trajectory;
  if (report.mode == SamplerMode::ghmc && report.noise) {
    if (report.adaptive_noise) {
      config.noise = NoiseRule::adaptive();
    } else {
      config.noise = NoiseRule::uniform(std::min(report.noise->lower, 1.0), std::min(report.noise->upper, 1.0));
    }
  } else {
    config.noise = NoiseRule::fixed(1.0);
  }
  config.integrator = IntegratorRule::adaptive(std::move(map), report.cf);
  config.seed = seed;
  return config;
}

std::vector<Vector> warm_starts(const TargetModel& model, BurninOptions options, const SaiaMap& map,
                                std::size_t chains, std::size_t workers) {
  options.analyze = false;
  std::vector<Vector> out(chains);
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_lock;
  auto work = [&] {
    for (std::size_t c = next++; c < chains; c = next++) {
      try {
        BurninOptions mine = options;
        mine.chain = c;
        out[c] = run_burnin(model, mine, map).final_theta;
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_lock);
        if (!failure) {
          failure = std::current_exception();
        }
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < std::min(std::max<std::size_t>(workers, 1), chains); ++w) {
    pool.emplace_back(work);
  }
  work();
  for (auto& t : pool) {
    t.join();
  }
  if (failure) {
    std::rethrow_exception(failure);
  }
  return out;
}

TuningReport tune(const TargetModel& model, BurninOptions burnin, const TuningOptions& options,
                  const SaiaMap& map) {
  burnin.mode = options.mode;
  burnin.h_lower = options.h_lower;
  const BurninStats stats = run_burnin(model, burnin, map);
  return produce_settings(stats, model.dimension(), options, map);
}

}  // namespace atune
