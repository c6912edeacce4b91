#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "atune/model.hpp"
#include "atune/saia_map.hpp"
#include "atune/sampler.hpp"

namespace atune {

/// Multiplicative step-size update after adaptation window t (t >= 1):
///   dt * exp(gain / sqrt(t) * (window_acceptance - target))
double adapt_stepsize(double window_acceptance, double dt, double target, double gain, std::size_t t);

struct FrequencyEstimate {
  /// Sorted ascending, averaged position-wise over the evaluated samples.
  std::vector<double> omegas;
  double max = 0.0;
  /// Sample standard deviation of `omegas` (0 for a single frequency).
  double sd = 0.0;
  /// Negative Hessian eigenvalues clamped to zero, summed over samples.
  std::size_t clamped = 0;
};

/// omega_j = sqrt(max(eigenvalue_j, 0)) of the Hessian at each sample, averaged
/// on the sorted spectrum. Throws UnsupportedError without a Hessian.
FrequencyEstimate collect_frequencies(const TargetModel& model, const std::vector<Vector>& samples);

/// Largest frequency at theta by power iteration on finite-difference
/// Hessian-vector products (gradient only).
double max_frequency_power(const TargetModel& model, const Vector& theta, Rng& rng,
                           int iterations = 200);

struct BurninOptions {
  std::size_t iterations = 2000;
  double target_acceptance = 0.95;
  SamplerMode mode = SamplerMode::ghmc;
  /// Collect the full frequency spectrum (needs a Hessian); otherwise only the
  /// maximum frequency is estimated.
  bool frequencies = true;
  std::size_t frequency_samples = 10;
  /// 0 selects the doubling/halving heuristic.
  double initial_step = 0.0;
  double gain = 5.0;
  std::size_t window = 10;
  /// Energy error averaged over accepted proposals only.
  bool accepted_only_energy = false;
  std::uint64_t seed = 0;
  std::size_t chain = 0;
  std::optional<Vector> initial;
  /// h_lower used for the burn-in noise interval (0 = find_h_lower()).
  double h_lower = 0.0;
  /// Skip the frequency estimate (warm-up runs that only need the final state).
  bool analyze = true;
};

struct BurninStats {
  std::size_t iterations = 0;
  /// Acceptance rate over the frozen second half.
  double acceptance_rate = 0.0;
  double step_size = 0.0;
  double mean_energy_error = 0.0;
  bool has_spectrum = false;
  std::vector<double> frequencies;
  double max_frequency = 0.0;
  double frequency_sd = 0.0;
  std::size_t clamped_eigenvalues = 0;
  std::size_t divergences = 0;
  double noise_lower = 1.0;
  double noise_upper = 1.0;
  Vector final_theta;
  std::vector<std::string> warnings;
};

/// Burn-in with Velocity Verlet and L = 1: the step size adapts over the first
/// half and is frozen at the geometric mean of the late adaptation windows for
/// the second half, where the statistics are collected.
BurninStats run_burnin(const TargetModel& model, const BurninOptions& options, const SaiaMap& map);

enum class FittingMode { s, s_omega };

/// S = max(1, 2 / (w dt) (2 pi (1 - AR)^2 / D)^(1/6))
double fitting_factor_s(double acceptance, double dt, double max_frequency, std::size_t dimension);
/// S_w = max(1, 2 / dt (2 pi (1 - AR)^2 / sum w^6)^(1/6))
double fitting_factor_s_omega(double acceptance, double dt, const std::vector<double>& omegas);
/// Energy-error forms: S = max(1, 1 / (w dt) (32 E / D)^(1/6)), S_w = max(1, 1 / dt (32 E / sum w^6)^(1/6)).
double fitting_factor_s_energy(double energy_error, double dt, double max_frequency, std::size_t dimension);
double fitting_factor_s_omega_energy(double energy_error, double dt, const std::vector<double>& omegas);

/// CF = S_f (w - sd) when sd > 1, S_f w otherwise. Throws ConfigError when w - sd <= 0
/// in the dispersed branch.
double dimensionalization_factor(double fitting_factor, double max_frequency, double frequency_sd);

struct Interval {
  double lower = 0.0;
  double upper = 0.0;
};

/// (h_lower / CF, 3 / CF).
Interval stepsize_interval(double cf, double h_lower = 0.0);

struct NoiseInterval {
  double lower = 1.0;
  double upper = 1.0;
  bool lower_clipped = false;
  bool upper_clipped = false;
};

/// (phi_opt(3), phi_opt(h_lower)) with lambda_3 of the adaptive integrator at each h,
/// each endpoint clipped at 1.
NoiseInterval phi_interval(std::size_t dimension, const SaiaMap& map, double h_lower = 0.0);

/// L = 1 for S_f < 1.5, otherwise equally likely {2, 5, 7}.
TrajectoryRule l_scheme(double fitting_factor);

/// L_n = (arcsin(sin(eta) / S_f^3) + 2 pi n) / eta for n = 1, 2, 3.
std::array<double, 3> l_candidates_from_eta(double fitting_factor, double eta);
/// n = 0 solution taken on the arcsin branch through eta; equals 1 at S_f = 1.
double l_zero_branch(double fitting_factor, double eta);

/// Rotation angle of the adaptive integrator at (h_lower + 3) / 2.
double eta_at_midpoint(const SaiaMap& map, double h_lower = 0.0);

struct TuningOptions {
  SamplerMode mode = SamplerMode::ghmc;
  /// Force a fitting mode; by default S_w when a spectrum is available.
  std::optional<FittingMode> fitting;
  /// Apply the L_opt rule in HMC mode too (it is always applied for GHMC).
  bool l_opt_for_hmc = true;
  /// Per-draw phi_opt(h) instead of the phi interval (GHMC).
  bool adaptive_noise = false;
  /// 0 = find_h_lower().
  double h_lower = 0.0;
};

struct TuningReport {
  SamplerMode mode = SamplerMode::ghmc;
  std::size_t dimension = 0;
  FittingMode fitting_mode = FittingMode::s;
  double fitting_factor = 1.0;
  double cf = 0.0;
  double h_lower = 0.0;
  double h_upper = kColsi3;
  Interval step_size;
  /// GHMC only.
  std::optional<NoiseInterval> noise;
  bool adaptive_noise = false;
  TrajectoryRule trajectory;
  double eta_midpoint = 0.0;
  std::array<double, 3> l_candidates{};
  BurninStats burnin;
  std::vector<std::string> warnings;
};

TuningReport produce_settings(const BurninStats& stats, std::size_t dimension,
                              const TuningOptions& options, const SaiaMap& map);

/// Production sampler settings from a report: Delta t ~ U(interval), phi rule,
/// L rule and the adaptive 3-stage integrator at h = CF * Delta t.
SamplerConfig production_config(const TuningReport& report, std::shared_ptr<const SaiaMap> map,
                                std::uint64_t seed);

/// Final burn-in states of chains 0..chains-1, each from its own burn-in run
/// (options.chain is replaced by the chain index). Runs on `workers` threads.
std::vector<Vector> warm_starts(const TargetModel& model, BurninOptions options, const SaiaMap& map,
                                std::size_t chains, std::size_t workers = 1);

/// Burn-in followed by produce_settings.
TuningReport tune(const TargetModel& model, BurninOptions burnin, const TuningOptions& options,
                  const SaiaMap& map);

}  // namespace atune
