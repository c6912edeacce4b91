#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

#include "atune/model.hpp"
#include "atune/rng.hpp"
#include "atune/saia_map.hpp"
#include "atune/scheme.hpp"

namespace atune {

enum class SamplerMode { hmc, ghmc };

/// Step size: fixed when lower == upper, otherwise U(lower, upper).
struct StepSizeRule {
  double lower = 0.1;
  double upper = 0.1;

  static StepSizeRule fixed(double dt) { return {dt, dt}; }
  static StepSizeRule uniform(double lower, double upper) { return {lower, upper}; }
  bool is_fixed() const { return lower == upper; }
  double draw(Rng& rng) const;
};

/// Number of integration steps per proposal.
struct TrajectoryRule {
  enum class Kind { fixed, uniform, choice };
  Kind kind = Kind::fixed;
  int lower = 1;            // fixed value, or inclusive range for uniform
  int upper = 1;
  std::vector<int> values;  // equally likely values for choice

  static TrajectoryRule fixed(int steps);
  static TrajectoryRule uniform(int lower, int upper);
  static TrajectoryRule choice(std::vector<int> values);
  int draw(Rng& rng) const;
  double mean() const;
};

/// Momentum refresh parameter phi in (0, 1]. The adaptive rule evaluates
/// optimal_noise at the dimensionless step of each draw.
struct NoiseRule {
  enum class Kind { fixed, uniform, adaptive };
  Kind kind = Kind::fixed;
  double lower = 1.0;
  double upper = 1.0;

  static NoiseRule fixed(double phi) { return {Kind::fixed, phi, phi}; }
  static NoiseRule uniform(double lower, double upper) { return {Kind::uniform, lower, upper}; }
  static NoiseRule adaptive() { return {Kind::adaptive, 0.0, 1.0}; }
};

/// Fixed integrator, or the adaptive scheme looked up at h = factor * dt.
struct IntegratorRule {
  std::optional<SplittingScheme> scheme;
  std::shared_ptr<const SaiaMap> map;
  /// Dimensionalization factor: h = factor * dt. Needed by the adaptive
  /// integrator and the adaptive noise rule.
  double factor = 0.0;

  static IntegratorRule fixed(SplittingScheme scheme, double factor = 0.0);
  static IntegratorRule adaptive(std::shared_ptr<const SaiaMap> map, double factor);
  bool is_adaptive() const { return !scheme.has_value(); }
  SplittingScheme select(double dt) const;
  int stages() const;
  std::string name() const;
};

struct SamplerConfig {
  SamplerMode mode = SamplerMode::ghmc;
  StepSizeRule step_size;
  TrajectoryRule trajectory;
  NoiseRule noise;
  IntegratorRule integrator = IntegratorRule::fixed(build_scheme("VV"));
  /// Diagonal of the mass matrix; empty means identity.
  Vector mass;
  std::uint64_t seed = 0;
  /// |dH| above this marks the trajectory as divergent.
  double divergence_threshold = 1000.0;

  /// Throws ConfigError on inconsistent settings.
  void validate(std::size_t dimension) const;
};

/// phi_opt(h) = min(1, -ln(0.999) K(h) / D), K(h) = (1 + 2 h^2 lambda) / (2 h^4 lambda^2).
double optimal_noise(double h, double lambda, std::size_t dimension);

struct IterationRecord {
  bool accepted = false;
  bool divergent = false;
  double delta_h = 0.0;
  int steps = 0;
  int stages = 0;
  double step_size = 0.0;
  double noise = 1.0;
  std::size_t gradient_evaluations = 0;
};

/// p' = sqrt(1 - phi) p + sqrt(phi) u, u ~ N(0, M). Throws ConfigError for phi outside (0, 1].
Vector partial_momentum_update(const Vector& momentum, double phi, const Vector& mass, Rng& rng);

/// Accepts with probability min(1, exp(-dH)); always consumes one uniform.
/// Non-finite dH is rejected.
bool metropolis_accept(double delta_h, Rng& rng);

/// One HMC/GHMC iteration: draw (phi, dt, L), refresh momentum, integrate,
/// Metropolis test, then on rejection restore the position (GHMC also negates
/// the momentum). `state` must carry the potential and gradient of its position.
IterationRecord ghmc_iteration(PhaseState& state, const SamplerConfig& config,
                               const TargetModel& model, Rng& rng);

struct ChainResult {
  Matrix samples;  // N x D, one row per iteration
  std::vector<IterationRecord> records;
  PhaseState final_state;

  double acceptance_rate() const;
  std::size_t gradient_evaluations() const;
};

/// Starting state for chain `chain`: `initial` if given (warm start), otherwise
/// a standard normal draw from the chain's initial-state stream.
PhaseState initial_state(const TargetModel& model, const SamplerConfig& config, std::size_t chain,
                         const std::optional<Vector>& initial = std::nullopt);

/// Runs `iterations` iterations of chain `chain` with RNG stream (seed, chain, production).
ChainResult run_chain(const SamplerConfig& config, const TargetModel& model, std::size_t chain,
                      std::size_t iterations, const std::optional<Vector>& initial = std::nullopt);

/// Runs chains 0..chains-1 on `workers` threads. Results depend only on the
/// chain index, not on the number of workers.
std::vector<ChainResult> run_chains(const SamplerConfig& config, const TargetModel& model,
                                    std::size_t chains, std::size_t iterations, std::size_t workers,
                                    const std::vector<Vector>& initial = {});

}  // namespace atune
