// Command-line front end: tune, sample, diagnose, compare, sensitivity, sweep,
// analyze-integrators. Exit codes: 0 ok, 2 config, 3 numeric, 4 I/O.
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "atune/bench/artifacts.hpp"
#include "atune/bench/commands.hpp"
#include "atune/error.hpp"

using namespace atune;
using namespace atune::bench;

namespace {

// Flag values are staged as optionals; keys present in a config file are
// applied last and win over flags.
struct Flags {
  std::optional<std::string> config_file;
  std::optional<std::string> benchmark, dataset, mode, fitting, integrator, ess_method, psrf_rule, output;
  std::optional<std::size_t> chains, burnin, production, window, workers;
  std::optional<std::uint64_t> seed, data_seed;
  std::optional<double> prior_sd, target_acceptance, h_lower, step_size, noise;
  std::optional<int> steps;
  std::optional<bool> standardize, header, warm_start, frequencies, adaptive_noise, l_opt_for_hmc,
      accepted_only_energy, pool_ess, binary_chains;
};

void add_run_flags(CLI::App* app, Flags& f) {
  app->add_option("--config", f.config_file, "JSON config file (or a run manifest)");
  app->add_option("-b,--benchmark", f.benchmark, "Benchmark id (gauss-<D>, blr-synthetic-<D>-<K>, blr-file, banana, ...)");
  app->add_option("--dataset", f.dataset, "Dataset file for blr-file");
  app->add_option("--standardize", f.standardize, "Standardize BLR covariates (default true)");
  app->add_option("--header", f.header, "Dataset has a header row");
  app->add_option("--prior-sd", f.prior_sd, "BLR prior standard deviation");
  app->add_option("--data-seed", f.data_seed, "Seed for generated data and Wishart draws");
  app->add_option("-m,--mode", f.mode, "Sampler: ghmc or hmc");
  app->add_option("-c,--chains", f.chains, "Number of chains");
  app->add_option("--burnin", f.burnin, "Burn-in iterations");
  app->add_option("-n,--production", f.production, "Production iterations per chain");
  app->add_option("-s,--seed", f.seed, "Base seed");
  app->add_option("--warm-start", f.warm_start, "Start chains from their own burn-in (default true)");
  app->add_option("--target-ar", f.target_acceptance, "Burn-in target acceptance rate");
  app->add_option("--fitting", f.fitting, "Fitting mode: S or S_omega");
  app->add_option("--frequencies", f.frequencies, "Collect the Hessian spectrum during burn-in");
  app->add_option("--h-lower", f.h_lower, "Override h_lower (0 = computed)");
  app->add_option("--adaptive-noise", f.adaptive_noise, "Per-draw optimal noise (GHMC)");
  app->add_option("--l-opt-for-hmc", f.l_opt_for_hmc, "Use the L_opt rule in HMC mode");
  app->add_option("--accepted-only-energy", f.accepted_only_energy, "Energy error over accepted proposals only");
  app->add_option("--step-size", f.step_size, "Fixed step size override");
  app->add_option("--steps", f.steps, "Fixed trajectory length override");
  app->add_option("--noise", f.noise, "Fixed noise override (GHMC)");
  app->add_option("--integrator", f.integrator, "Fixed integrator override (VV, BCSS3, ME3, ...)");
  app->add_option("--ess", f.ess_method, "ESS estimator: geyer or ar_spectral");
  app->add_option("--pool-ess", f.pool_ess, "Pool chains for univariate ESS");
  app->add_option("--window", f.window, "Metric window after convergence (0 = default)");
  app->add_option("--psrf-rule", f.psrf_rule, "Convergence rule: auto, max or average");
  app->add_option("--binary", f.binary_chains, "Write binary chain files");
  app->add_option("-o,--output", f.output, "Output directory");
  app->add_option("-j,--workers", f.workers, "Worker threads");
}

RunConfig build_config(const Flags& f) {
  RunConfig c;
  if (f.benchmark) c.benchmark = *f.benchmark;
  if (f.dataset) c.data.dataset = *f.dataset;
  if (f.standardize) c.data.standardize = *f.standardize;
  if (f.header) c.data.header = *f.header;
  if (f.prior_sd) c.data.prior_sd = *f.prior_sd;
  if (f.data_seed) c.data.data_seed = *f.data_seed;
  if (f.mode) c.mode = parse_mode(*f.mode);
  if (f.chains) c.chains = *f.chains;
  if (f.burnin) c.burnin = *f.burnin;
  if (f.production) c.production = *f.production;
  if (f.seed) c.seed = *f.seed;
  if (f.warm_start) c.warm_start = *f.warm_start;
  if (f.target_acceptance) c.target_acceptance = *f.target_acceptance;
  if (f.fitting) c.fitting = parse_fitting(*f.fitting);
  if (f.frequencies) c.frequencies = *f.frequencies;
  if (f.h_lower) c.h_lower = *f.h_lower;
  if (f.adaptive_noise) c.adaptive_noise = *f.adaptive_noise;
  if (f.l_opt_for_hmc) c.l_opt_for_hmc = *f.l_opt_for_hmc;
  if (f.accepted_only_energy) c.accepted_only_energy = *f.accepted_only_energy;
  if (f.step_size) c.step_size = *f.step_size;
  if (f.steps) c.steps = *f.steps;
  if (f.noise) c.noise = *f.noise;
  if (f.integrator) c.integrator = *f.integrator;
  if (f.ess_method) c.ess_method = parse_ess_method(*f.ess_method);
  if (f.pool_ess) c.pool_ess = *f.pool_ess;
  if (f.window) c.window = *f.window;
  if (f.psrf_rule) c.psrf_rule = *f.psrf_rule;
  if (f.binary_chains) c.binary_chains = *f.binary_chains;
  if (f.output) c.output = *f.output;
  if (f.workers) c.workers = *f.workers;
  if (f.config_file) {
    const auto j = read_json(*f.config_file);
    c = RunConfig::from_json(j.contains("config") && j.contains("config_hash") ? j.at("config") : j, c);
  }
  c.validate();
  return c;
}

void print_diagnostics(const DiagnosticsReport& r) {
  std::cout << "chains " << r.chains << ", iterations " << r.iterations << ", dimension " << r.dimension << '\n';
  std::cout << "N_conv " << (r.convergence.converged_at ? std::to_string(*r.convergence.converged_at) : "not reached")
            << ", metric rows " << r.metric_length << ", acceptance " << r.acceptance_rate << '\n';
  std::cout << "ess\tvalue\tgrad/ess\n";
  std::cout << "min\t" << r.ess.min << '\t' << r.per_ess.per_min << '\n';
  std::cout << "mean\t" << r.ess.mean << '\t' << r.per_ess.per_mean << '\n';
  std::cout << "multi\t" << r.ess.multi << '\t' << r.per_ess.per_multi << '\n';
}

std::vector<double> split_doubles(const std::string& text) {
  std::vector<double> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    try {
      out.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw ConfigError("bad number '" + item + "'");
    }
  }
  return out;
}

// Rules contain commas inside brackets, so split on ';'.
std::vector<std::string> split_rules(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ';')) {
    if (!item.empty()) {
      out.push_back(item);
    }
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adaptive tuning of HMC and GHMC with splitting integrators"};
  app.require_subcommand(1);
  Flags flags;

  auto* tune_cmd = app.add_subcommand("tune", "Burn-in and tuning report");
  add_run_flags(tune_cmd, flags);

  auto* sample_cmd = app.add_subcommand("sample", "Tune (or load a report) and run production chains");
  add_run_flags(sample_cmd, flags);
  std::optional<std::string> report_path;
  sample_cmd->add_option("--report", report_path, "Existing tuning_report.json");

  auto* diag_cmd = app.add_subcommand("diagnose", "Diagnostics over chain files or run directories");
  std::vector<std::string> diag_paths;
  diag_cmd->add_option("paths", diag_paths, "Chain files or run directories")->required();
  std::string diag_ess = "geyer", diag_rule = "max";
  bool diag_pool = false;
  std::size_t diag_window = 0;
  std::optional<std::string> diag_out;
  diag_cmd->add_option("--ess", diag_ess, "geyer or ar_spectral");
  diag_cmd->add_option("--psrf-rule", diag_rule, "max or average");
  diag_cmd->add_flag("--pool-ess", diag_pool, "Pool chains for univariate ESS");
  diag_cmd->add_option("--window", diag_window, "Metric window after convergence");
  diag_cmd->add_option("-o,--output", diag_out, "Directory for the report and plot data");

  auto* cmp_cmd = app.add_subcommand("compare", "Relative efficiency of run A over run B");
  std::string cmp_a, cmp_b;
  double overhead = 1.0;
  std::optional<std::string> cmp_out;
  cmp_cmd->add_option("a", cmp_a, "Run directory A")->required();
  cmp_cmd->add_option("b", cmp_b, "Run directory B")->required();
  cmp_cmd->add_option("--overhead", overhead, "Time scale factor applied to B");
  cmp_cmd->add_option("-o,--output", cmp_out, "Directory for compare.tsv");

  auto* sens_cmd = app.add_subcommand("sensitivity", "h_lower perturbation study");
  add_run_flags(sens_cmd, flags);
  std::string deltas = "-0.05,0,0.05", sens_modes = "ghmc,hmc";
  sens_cmd->add_option("--deltas", deltas, "Relative perturbations of h_lower");
  sens_cmd->add_option("--samplers", sens_modes, "Samplers to run");

  auto* sweep_cmd = app.add_subcommand("sweep", "Noise x trajectory grid");
  add_run_flags(sweep_cmd, flags);
  std::string noise_rules = "opt;U(0,0.1);U(0,0.5);U(0,0.9);1";
  std::string steps_rules = "opt;U{1,D/3};U{1,2D/3}";
  sweep_cmd->add_option("--noise-rules", noise_rules, "';'-separated noise rules");
  sweep_cmd->add_option("--steps-rules", steps_rules, "';'-separated trajectory rules");

  auto* an_cmd = app.add_subcommand("analyze-integrators", "Energy-error curves and integrator constants");
  std::string an_out = "integrators";
  IntegratorAnalysisOptions an_opts;
  an_cmd->add_option("-o,--output", an_out, "Output directory");
  an_cmd->add_option("--h-max", an_opts.h_max, "Largest dimensionless step");
  an_cmd->add_option("--points", an_opts.points, "Grid points");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (tune_cmd->parsed()) {
      const RunConfig config = build_config(flags);
      const TuningReport r = cmd_tune(config);
      std::cout << to_json(r).dump(2) << '\n';
      std::cout << "report: " << (resolve_output(config) / "tuning_report.json").string() << '\n';
    } else if (sample_cmd->parsed()) {
      const RunConfig config = build_config(flags);
      std::optional<std::filesystem::path> report;
      if (report_path) {
        report = *report_path;
      }
      const SampleRun run = cmd_sample(config, report);
      std::cout << "wrote " << run.chains.size() << " chains to " << run.output.string() << '\n';
      if (run.diagnostics) {
        print_diagnostics(*run.diagnostics);
      }
    } else if (diag_cmd->parsed()) {
      DiagnosticsOptions o;
      o.ess.method = parse_ess_method(diag_ess);
      o.ess.pool = diag_pool;
      o.window = diag_window;
      if (diag_rule != "max" && diag_rule != "average") {
        throw ConfigError("--psrf-rule must be max or average");
      }
      o.rule.use_average = diag_rule == "average";
      std::vector<std::filesystem::path> paths(diag_paths.begin(), diag_paths.end());
      std::optional<std::filesystem::path> out;
      if (diag_out) {
        out = *diag_out;
      }
      print_diagnostics(cmd_diagnose(paths, o, out));
    } else if (cmp_cmd->parsed()) {
      std::optional<std::filesystem::path> out;
      if (cmp_out) {
        out = *cmp_out;
      }
      std::cout << "ess\tgrad/ess A\tgrad/ess B\tREF\tESS/T ratio\n";
      for (const auto& r : cmd_compare(cmp_a, cmp_b, overhead, out)) {
        std::cout << r.flavor << '\t' << r.grad_per_ess_a << '\t' << r.grad_per_ess_b << '\t' << r.ref << '\t'
                  << r.ess_per_time_ratio << '\n';
      }
    } else if (sens_cmd->parsed()) {
      const RunConfig config = build_config(flags);
      std::vector<SamplerMode> modes;
      std::stringstream in(sens_modes);
      std::string item;
      while (std::getline(in, item, ',')) {
        modes.push_back(parse_mode(item));
      }
      const auto rows = cmd_sensitivity(config, split_doubles(deltas), modes, resolve_output(config));
      std::cout << "sampler\tdelta\th_lower\tgrad/minESS\tgrad/meanESS\tgrad/multiESS\n";
      for (const auto& r : rows) {
        std::cout << to_string(r.mode) << '\t' << r.delta << '\t' << r.h_lower << '\t'
                  << r.diagnostics.per_ess.per_min << '\t' << r.diagnostics.per_ess.per_mean << '\t'
                  << r.diagnostics.per_ess.per_multi << '\n';
      }
    } else if (sweep_cmd->parsed()) {
      const RunConfig config = build_config(flags);
      std::vector<NoiseSpec> noise;
      for (const auto& t : split_rules(noise_rules)) {
        noise.push_back(parse_noise_spec(t));
      }
      std::vector<StepsSpec> steps;
      for (const auto& t : split_rules(steps_rules)) {
        steps.push_back(parse_steps_spec(t));
      }
      std::cout << "noise\tsteps\tgrad/minESS\tgrad/meanESS\tgrad/multiESS\n";
      for (const auto& c : cmd_sweep(config, noise, steps, resolve_output(config))) {
        std::cout << c.noise << '\t' << c.steps << '\t' << c.diagnostics.per_ess.per_min << '\t'
                  << c.diagnostics.per_ess.per_mean << '\t' << c.diagnostics.per_ess.per_multi << '\n';
      }
    } else if (an_cmd->parsed()) {
      cmd_analyze_integrators(an_out, an_opts);
      std::cout << "wrote integrator data to " << an_out << '\n';
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
