#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "atune/bench/registry.hpp"
#include "atune/bench/run_config.hpp"
#include "atune/diagnostics.hpp"
#include "atune/sampler.hpp"
#include "atune/tuning.hpp"

namespace atune::bench {

inline constexpr const char* kVersion = "atune 1.0.0";

/// Wall-clock seconds per phase.
struct RunTimers {
  double tuning = 0.0;
  double warmup = 0.0;
  double production = 0.0;
  double diagnostics = 0.0;
};

/// Process-wide adaptive-integrator map shared by all runs.
std::shared_ptr<const SaiaMap> shared_map();

/// Production sampler settings: the tuned settings with the config overrides applied.
SamplerConfig sampler_config(const RunConfig& config, const TuningReport& report);

/// Burn-in and analysis only. Writes tuning_report.json when `write` is set.
TuningReport cmd_tune(const RunConfig& config, bool write = true);

struct SampleRun {
  RunConfig config;
  Benchmark benchmark;
  TuningReport report;
  SamplerConfig sampler;
  std::vector<ChainResult> chains;
  /// Present when at least 2 chains were run.
  std::optional<DiagnosticsReport> diagnostics;
  RunTimers timers;
  std::filesystem::path output;
};

/// Tunes (or loads `report_path`), runs the chains and, with `write`, persists
/// chains/, tuning_report.json, diagnostics.json and manifest.json.
SampleRun cmd_sample(const RunConfig& config, const std::optional<std::filesystem::path>& report_path = {},
                     bool write = true);

/// Diagnostics over chain files or run directories. With `output`, writes
/// diagnostics.json plus plot data (psrf_trajectory.tsv, ess_per_dimension.tsv,
/// acceptance_vs_step.tsv).
DiagnosticsReport cmd_diagnose(const std::vector<std::filesystem::path>& paths, const DiagnosticsOptions& options,
                               const std::optional<std::filesystem::path>& output = {});

struct CompareRow {
  std::string flavor;  // min, mean, multi
  double grad_per_ess_a = 0.0;
  double grad_per_ess_b = 0.0;
  /// REF = (grad/ESS of B) / (grad/ESS of A): how much A outperforms B.
  double ref = 0.0;
  /// ESS per production second, A over B, with B's time scaled by the overhead factor.
  double ess_per_time_ratio = 0.0;
};

std::vector<CompareRow> compare_reports(const DiagnosticsReport& a, double seconds_a, const DiagnosticsReport& b,
                                        double seconds_b, double overhead_b = 1.0);
/// Reads diagnostics.json and manifest.json from two run directories.
std::vector<CompareRow> cmd_compare(const std::filesystem::path& a, const std::filesystem::path& b,
                                    double overhead_b = 1.0,
                                    const std::optional<std::filesystem::path>& output = {});

struct SensitivityRow {
  SamplerMode mode = SamplerMode::ghmc;
  double delta = 0.0;
  double h_lower = 0.0;
  TuningReport report;
  DiagnosticsReport diagnostics;
};

/// tune + sample + diagnose at h_lower * (1 + delta) for every mode and delta.
std::vector<SensitivityRow> cmd_sensitivity(const RunConfig& config, const std::vector<double>& deltas,
                                            const std::vector<SamplerMode>& modes,
                                            const std::optional<std::filesystem::path>& output = {});

/// Noise rule of a sweep cell: "opt" (tuned interval), a constant "0.3", or "U(a,b)".
struct NoiseSpec {
  std::string label;
  std::optional<NoiseRule> rule;  // empty = tuned
};
NoiseSpec parse_noise_spec(const std::string& text);

/// Trajectory rule of a sweep cell: "opt", a constant "5", "U{a,b}" or "{2,5,7}".
/// Inside braces "D" stands for the dimension, e.g. "U{1,2D/3}".
struct StepsSpec {
  std::string label;
  std::string text;
};
StepsSpec parse_steps_spec(const std::string& text);
/// Resolves a spec against the dimension and the tuned rule.
TrajectoryRule resolve_steps(const StepsSpec& spec, std::size_t dimension, const TrajectoryRule& tuned);

struct SweepCell {
  std::string noise;
  std::string steps;
  DiagnosticsReport diagnostics;
};

/// Full factorial grid over one tuning run; every cell uses the same warm starts.
std::vector<SweepCell> cmd_sweep(const RunConfig& config, const std::vector<NoiseSpec>& noise,
                                 const std::vector<StepsSpec>& steps,
                                 const std::optional<std::filesystem::path>& output = {});

struct IntegratorAnalysisOptions {
  double h_max = 6.0;
  std::size_t points = 600;
};

/// Writes energy-error and stability data for the built-in integrators:
///   rho_curves.tsv       h, rho3/rho2 bounds of BCSS3, ME3, s-AIA3 (and 2-stage)
///   vv_energy_error.tsv  h, expected energy error of 1/2/3-stage Velocity Verlet
///   saia_map.tsv         the adaptive-integrator map
///   constants.json       h_lower, stability limits, ratio roots, eta at the midpoint
void cmd_analyze_integrators(const std::filesystem::path& output, const IntegratorAnalysisOptions& options = {});

}  // namespace atune::bench
