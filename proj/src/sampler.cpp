#include "atune/sampler.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#include "atune/error.hpp"

namespace atune {

double StepSizeRule::draw(Rng& rng) const { return is_fixed() ? lower : rng.uniform(lower, upper); }

TrajectoryRule TrajectoryRule::fixed(int steps) { return {Kind::fixed, steps, steps, {}}; }

TrajectoryRule TrajectoryRule::uniform(int lower, int upper) {
  return {Kind::uniform, lower, upper, {}};
}

TrajectoryRule TrajectoryRule::choice(std::vector<int> values) {
  TrajectoryRule rule{Kind::choice, 0, 0, std::move(values)};
  if (!rule.values.empty()) {
    rule.lower = *std::min_element(rule.values.begin(), rule.values.end());
    rule.upper = *std::max_element(rule.values.begin(), rule.values.end());
  }
  return rule;
}

int TrajectoryRule::draw(Rng& rng) const {
  switch (kind) {
    case Kind::fixed:
      return lower;
    case Kind::uniform:
      return rng.uniform_int(lower, upper);
    default:
      return values[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(values.size()) - 1))];
  }
}

double TrajectoryRule::mean() const {
  switch (kind) {
    case Kind::fixed:
      return lower;
    case Kind::uniform:
      return 0.5 * (lower + upper);
    default:
      return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  }
}

IntegratorRule IntegratorRule::fixed(SplittingScheme scheme, double factor) {
  IntegratorRule rule;
  rule.scheme = std::move(scheme);
  rule.factor = factor;
  return rule;
}

IntegratorRule IntegratorRule::adaptive(std::shared_ptr<const SaiaMap> map, double factor) {
  IntegratorRule rule;
  rule.map = std::move(map);
  rule.factor = factor;
  return rule;
}

SplittingScheme IntegratorRule::select(double dt) const {
  if (scheme) {
    return *scheme;
  }
  return map->scheme_at(factor * dt);
}

int IntegratorRule::stages() const { return scheme ? scheme->stages() : map->stages(); }

std::string IntegratorRule::name() const {
  return scheme ? scheme->name() : "s-AIA" + std::to_string(map->stages());
}

void SamplerConfig::validate(std::size_t dimension) const {
  if (!(step_size.lower > 0.0) || !(step_size.upper >= step_size.lower) ||
      !std::isfinite(step_size.upper)) {
    throw ConfigError("sampler: step size interval must be nonempty with positive endpoints");
  }
  switch (trajectory.kind) {
    case TrajectoryRule::Kind::fixed:
    case TrajectoryRule::Kind::uniform:
      if (trajectory.lower < 1 || trajectory.upper < trajectory.lower) {
        throw ConfigError("sampler: trajectory length must be at least 1");
      }
      break;
    case TrajectoryRule::Kind::choice:
      if (trajectory.values.empty() ||
          *std::min_element(trajectory.values.begin(), trajectory.values.end()) < 1) {
        throw ConfigError("sampler: trajectory length set must be nonempty with values >= 1");
      }
      break;
  }
  if (mode == SamplerMode::hmc &&
      !(noise.kind == NoiseRule::Kind::fixed && noise.lower == 1.0)) {
    throw ConfigError("sampler: HMC refreshes the momentum fully; the noise rule must be fixed at 1");
  }
  if (noise.kind != NoiseRule::Kind::adaptive &&
      (!(noise.lower > 0.0) || !(noise.upper <= 1.0) || noise.upper < noise.lower)) {
    throw ConfigError("sampler: noise interval must lie in (0, 1]");
  }
  if (integrator.is_adaptive()) {
    if (!integrator.map || !(integrator.factor > 0.0)) {
      throw ConfigError("sampler: the adaptive integrator needs a map and a positive factor");
    }
  }
  if (noise.kind == NoiseRule::Kind::adaptive) {
    if (!(integrator.factor > 0.0) || integrator.stages() < 2) {
      throw ConfigError(
          "sampler: adaptive noise needs a multi-stage integrator and a positive factor");
    }
  }
  if (mass.size() != 0) {
    if (static_cast<std::size_t>(mass.size()) != dimension || !(mass.array() > 0.0).all()) {
      throw ConfigError("sampler: mass diagonal must have one positive entry per dimension");
    }
  }
  if (!(divergence_threshold > 0.0)) {
    throw ConfigError("sampler: divergence threshold must be positive");
  }
}

double optimal_noise(double h, double lambda, std::size_t dimension) {
  if (lambda == 0.0) {
    throw NumericError("optimal noise: lambda is zero, K(h) is singular");
  }
  if (dimension == 0) {
    throw ConfigError("optimal noise: dimension must be positive");
  }
  const double h2 = h * h;
  const double k = (1.0 + 2.0 * h2 * lambda) / (2.0 * h2 * h2 * lambda * lambda);
  return std::min(1.0, -std::log(0.999) * k / static_cast<double>(dimension));
}

Vector partial_momentum_update(const Vector& momentum, double phi, const Vector& mass, Rng& rng) {
  if (!(phi > 0.0) || phi > 1.0) {
    throw ConfigError("momentum update: phi must lie in (0, 1]");
  }
  const Eigen::Index d = momentum.size();
  Vector u(d);
  for (Eigen::Index i = 0; i < d; ++i) {
    u[i] = rng.normal();
  }
  if (mass.size() != 0) {
    u.array() *= mass.array().sqrt();
  }
  if (phi == 1.0) {
    return u;
  }
  return std::sqrt(1.0 - phi) * momentum + std::sqrt(phi) * u;
}

bool metropolis_accept(double delta_h, Rng& rng) {
  const double u = rng.uniform();
  if (std::isnan(delta_h) || delta_h == std::numeric_limits<double>::infinity()) {
    return false;
  }
  return delta_h <= 0.0 || u < std::exp(-delta_h);
}

namespace {

double kinetic(const Vector& p, const Vector& inverse_mass) {
  return 0.5 * (p.array().square() * inverse_mass.array()).sum();
}

}  // namespace

IterationRecord ghmc_iteration(PhaseState& state, const SamplerConfig& config,
                               const TargetModel& model, Rng& rng) {
  IterationRecord record;
  const Eigen::Index d = state.theta.size();
  const Vector mass = config.mass.size() != 0 ? config.mass : Vector::Ones(d);
  const Vector inverse_mass = mass.cwiseInverse();

  // Hyperparameter draws: phi, dt, L (independent).
  double phi = 1.0;
  if (config.noise.kind == NoiseRule::Kind::uniform) {
    phi = config.noise.lower == config.noise.upper ? config.noise.lower
                                                   : rng.uniform(config.noise.lower, config.noise.upper);
  } else if (config.noise.kind == NoiseRule::Kind::fixed) {
    phi = config.noise.lower;
  }
  const double dt = config.step_size.draw(rng);
  const int steps = config.trajectory.draw(rng);
  const SplittingScheme scheme = config.integrator.select(dt);
  if (config.noise.kind == NoiseRule::Kind::adaptive) {
    phi = optimal_noise(config.integrator.factor * dt, lambda_k(scheme), static_cast<std::size_t>(d));
  }
  record.noise = phi;
  record.step_size = dt;
  record.steps = steps;
  record.stages = scheme.stages();

  state.momentum = partial_momentum_update(state.momentum, phi, mass, rng);
  const double h_start = state.potential + kinetic(state.momentum, inverse_mass);

  PhaseState proposal = state;
  const LegResult leg = integrate(scheme, model, proposal, dt, steps, inverse_mass);
  // Rejected and divergent proposals are charged the full leg.
  record.gradient_evaluations = static_cast<std::size_t>(steps) * static_cast<std::size_t>(scheme.stages());
  double delta_h = std::numeric_limits<double>::infinity();
  if (leg.status == StepStatus::ok) {
    delta_h = proposal.potential + kinetic(proposal.momentum, inverse_mass) - h_start;
  }
  if (!std::isfinite(delta_h) || std::abs(delta_h) > config.divergence_threshold) {
    record.divergent = true;
    if (!std::isfinite(delta_h) || delta_h > 0.0) {
      delta_h = std::numeric_limits<double>::infinity();
    }
  }
  record.delta_h = delta_h;
  const bool accepted = metropolis_accept(delta_h, rng) && !record.divergent;
  record.accepted = accepted;
  if (accepted) {
    state = std::move(proposal);
  } else if (config.mode == SamplerMode::ghmc) {
    state.momentum = -state.momentum;
  }
  return record;
}

double ChainResult::acceptance_rate() const {
  if (records.empty()) {
    return 0.0;
  }
  const auto n = std::count_if(records.begin(), records.end(), [](const auto& r) { return r.accepted; });
  return static_cast<double>(n) / static_cast<double>(records.size());
}

std::size_t ChainResult::gradient_evaluations() const {
  std::size_t total = 0;
  for (const auto& r : records) {
    total += r.gradient_evaluations;
  }
  return total;
}

PhaseState initial_state(const TargetModel& model, const SamplerConfig& config, std::size_t chain,
                         const std::optional<Vector>& initial) {
  const auto d = static_cast<Eigen::Index>(model.dimension());
  PhaseState state;
  Rng rng(config.seed, chain, StreamPurpose::initial_state);
  if (initial) {
    if (initial->size() != d) {
      throw ConfigError("sampler: warm start vector has the wrong length");
    }
    state.theta = *initial;
  } else {
    state.theta.resize(d);
    for (Eigen::Index i = 0; i < d; ++i) {
      state.theta[i] = rng.normal();
    }
  }
  // Partial refresh only keeps N(0, M) invariant, so the chain must start there.
  state.momentum.resize(d);
  for (Eigen::Index i = 0; i < d; ++i) {
    state.momentum[i] = rng.normal();
  }
  if (config.mass.size() != 0) {
    state.momentum.array() *= config.mass.array().sqrt();
  }
  refresh_forces(model, state);
  if (!std::isfinite(state.potential) || !state.grad.allFinite()) {
    throw NumericError(model.name() + ": potential or gradient not finite at the initial state");
  }
  return state;
}

ChainResult run_chain(const SamplerConfig& config, const TargetModel& model, std::size_t chain,
                      std::size_t iterations, const std::optional<Vector>& initial) {
  if (iterations < 1) {
    throw ConfigError("sampler: at least one iteration is required");
  }
  config.validate(model.dimension());
  ChainResult result;
  PhaseState state = initial_state(model, config, chain, initial);
  Rng rng(config.seed, chain, StreamPurpose::production);
  result.samples.resize(static_cast<Eigen::Index>(iterations), state.theta.size());
  result.records.reserve(iterations);
  for (std::size_t i = 0; i < iterations; ++i) {
    try {
      result.records.push_back(ghmc_iteration(state, config, model, rng));
    } catch (const StabilityError& e) {
      throw StabilityError("chain " + std::to_string(chain) + ", iteration " + std::to_string(i) +
                           ": " + e.what());
    } catch (const NumericError& e) {
      throw NumericError("chain " + std::to_string(chain) + ", iteration " + std::to_string(i) +
                         ": " + e.what());
    }
    result.samples.row(static_cast<Eigen::Index>(i)) = state.theta.transpose();
  }
  result.final_state = std::move(state);
  return result;
}

std::vector<ChainResult> run_chains(const SamplerConfig& config, const TargetModel& model,
                                    std::size_t chains, std::size_t iterations, std::size_t workers,
                                    const std::vector<Vector>& initial) {
  if (chains < 1) {
    throw ConfigError("sampler: at least one chain is required");
  }
  if (!initial.empty() && initial.size() != chains) {
    throw ConfigError("sampler: need one warm start per chain");
  }
  config.validate(model.dimension());
  std::vector<ChainResult> results(chains);
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t c = next++; c < chains; c = next++) {
      try {
        const auto start = initial.empty() ? std::nullopt : std::optional<Vector>(initial[c]);
        results[c] = run_chain(config, model, c, iterations, start);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) {
          failure = std::current_exception();
        }
      }
    }
  };
  const std::size_t threads = std::clamp<std::size_t>(workers, 1, chains);
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) {
      pool.emplace_back(worker);
    }
    for (auto& thread : pool) {
      thread.join();
    }
  }
  if (failure) {
    std::rethrow_exception(failure);
  }
  return results;
}

}  // namespace atune
