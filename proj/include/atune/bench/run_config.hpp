#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "json.hpp"

#include "atune/bench/registry.hpp"
#include "atune/diagnostics.hpp"
#include "atune/sampler.hpp"
#include "atune/tuning.hpp"

namespace atune::bench {

/// Environment variable naming the default output root.
inline constexpr const char* kOutputRootEnv = "ATUNE_OUTPUT_ROOT";

struct RunConfig {
  std::string benchmark = "gauss-100";
  BenchmarkOptions data;

  SamplerMode mode = SamplerMode::ghmc;
  std::size_t chains = 4;
  std::size_t burnin = 2000;
  std::size_t production = 5000;
  std::uint64_t seed = 1;
  /// Start each production chain from the end of its own burn-in run.
  bool warm_start = true;

  // Tuning knobs.
  double target_acceptance = 0.95;
  std::optional<FittingMode> fitting;
  bool frequencies = true;
  double h_lower = 0.0;
  bool adaptive_noise = false;
  bool l_opt_for_hmc = true;
  bool accepted_only_energy = false;

  // Production overrides.
  std::optional<double> step_size;
  std::optional<int> steps;
  std::optional<double> noise;
  std::optional<std::string> integrator;

  // Diagnostics.
  EssMethod ess_method = EssMethod::geyer;
  bool pool_ess = false;
  std::size_t window = 0;
  /// Convergence rule: "max", "average", or "auto" (average for L = 1 runs).
  std::string psrf_rule = "auto";

  bool binary_chains = false;
  std::filesystem::path output;
  /// Thread count; does not affect results and is not hashed.
  std::size_t workers = 1;

  /// Throws ConfigError on inconsistent settings (e.g. a noise override in HMC mode).
  void validate() const;

  /// Canonical key set; `output` and `workers` are excluded.
  nlohmann::ordered_json to_json() const;
  /// Keys present in `j` override `base`; unknown keys are rejected.
  static RunConfig from_json(const nlohmann::json& j, RunConfig base);
  static RunConfig from_json(const nlohmann::json& j);
  /// Reads a JSON config file and applies it on top of `base`.
  static RunConfig from_file(const std::filesystem::path& path, RunConfig base);
  static RunConfig from_file(const std::filesystem::path& path);

  /// 16 hex digits of FNV-1a over to_json().dump().
  std::string hash() const;

  BurninOptions burnin_options() const;
  TuningOptions tuning_options() const;
  DiagnosticsOptions diagnostics_options(const TrajectoryRule& trajectory) const;
};

/// `output` if set, else $ATUNE_OUTPUT_ROOT/<benchmark>-<hash>, else ./runs/<benchmark>-<hash>.
std::filesystem::path resolve_output(const RunConfig& config);

std::string to_string(SamplerMode mode);
SamplerMode parse_mode(const std::string& text);
std::string to_string(FittingMode mode);
FittingMode parse_fitting(const std::string& text);
std::string to_string(EssMethod method);
EssMethod parse_ess_method(const std::string& text);

}  // namespace atune::bench
