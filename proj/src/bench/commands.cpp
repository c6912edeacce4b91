#include "atune/bench/commands.hpp"

#include <chrono>
#include <cmath>
#include <regex>
#include <sstream>

#include "atune/bench/artifacts.hpp"
#include "atune/error.hpp"
#include "atune/saia_map.hpp"
#include "atune/scheme.hpp"

namespace atune::bench {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

void ensure_directory(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) {
    throw IoError("cannot create " + dir.string() + ": " + ec.message());
  }
}

std::string rule_label(const NoiseRule& rule) {
  if (rule.kind == NoiseRule::Kind::adaptive) {
    return "adaptive";
  }
  if (rule.lower == rule.upper) {
    return format_double(rule.lower);
  }
  return "U(" + format_double(rule.lower) + "," + format_double(rule.upper) + ")";
}

std::string fmt(double v) { return format_double(v); }

// Warm starts per chain, or empty for cold N(0, 1) starts.
std::vector<Vector> chain_starts(const RunConfig& config, const TargetModel& model) {
  if (!config.warm_start) {
    return {};
  }
  return warm_starts(model, config.burnin_options(), *shared_map(), config.chains, config.workers);
}

ordered_json manifest_json(const SampleRun& run, const std::vector<std::string>& files) {
  ordered_json m;
  m["version"] = kVersion;
  m["config"] = run.config.to_json();
  m["config_hash"] = run.config.hash();
  m["benchmark"] = run.benchmark.description;
  ordered_json streams = ordered_json::array();
  for (std::size_t c = 0; c < run.config.chains; ++c) {
    streams.push_back({{"chain", c},
                       {"production", stream_id(c, StreamPurpose::production)},
                       {"burnin", stream_id(c, StreamPurpose::burnin)},
                       {"initial_state", stream_id(c, StreamPurpose::initial_state)}});
  }
  m["seeds"] = {{"base", run.config.seed}, {"rng", "philox4x32-10"}, {"streams", streams}};
  m["sampler"] = {{"mode", to_string(run.sampler.mode)},
                  {"integrator", run.sampler.integrator.name()},
                  {"cf", run.sampler.integrator.factor},
                  {"step_size", {run.sampler.step_size.lower, run.sampler.step_size.upper}},
                  {"noise", rule_label(run.sampler.noise)},
                  {"trajectory", to_json(run.sampler.trajectory)}};
  m["chain_files"] = files;
  m["workers"] = run.config.workers;
  m["timers"] = {{"tuning", run.timers.tuning},
                 {"warmup", run.timers.warmup},
                 {"production", run.timers.production},
                 {"diagnostics", run.timers.diagnostics}};
  return m;
}

std::vector<std::vector<std::string>> diagnostics_rows(const DiagnosticsReport& r) {
  return {{"min", fmt(r.ess.min), fmt(r.per_ess.per_min)},
          {"mean", fmt(r.ess.mean), fmt(r.per_ess.per_mean)},
          {"multi", fmt(r.ess.multi), fmt(r.per_ess.per_multi)}};
}

}  // namespace

std::shared_ptr<const SaiaMap> shared_map() {
  static const std::shared_ptr<const SaiaMap> map(&SaiaMap::default_map(), [](const SaiaMap*) {});
  return map;
}

SamplerConfig sampler_config(const RunConfig& config, const TuningReport& report) {
  SamplerConfig s = production_config(report, shared_map(), config.seed);
  s.mode = config.mode;
  if (config.mode == SamplerMode::hmc) {
    s.noise = NoiseRule::fixed(1.0);
  } else if (config.noise) {
    s.noise = NoiseRule::fixed(*config.noise);
  } else if (!report.noise) {
    throw ConfigError("GHMC production needs a tuning report with a noise interval (tuned in GHMC mode)");
  }
  if (config.step_size) {
    s.step_size = StepSizeRule::fixed(*config.step_size);
  }
  if (config.steps) {
    s.trajectory = TrajectoryRule::fixed(*config.steps);
  }
  if (config.integrator) {
    s.integrator = IntegratorRule::fixed(build_scheme(*config.integrator), report.cf);
  }
  return s;
}

TuningReport cmd_tune(const RunConfig& config, bool write) {
  config.validate();
  const Benchmark bench = make_benchmark(config.benchmark, config.data);
  TuningReport report = tune(*bench.model, config.burnin_options(), config.tuning_options(), *shared_map());
  if (write) {
    const auto out = resolve_output(config);
    ensure_directory(out);
    write_json(out / "tuning_report.json", to_json(report));
  }
  return report;
}

SampleRun cmd_sample(const RunConfig& config, const std::optional<std::filesystem::path>& report_path, bool write) {
  config.validate();
  SampleRun run{config, make_benchmark(config.benchmark, config.data), {}, {}, {}, {}, {}, resolve_output(config)};
  const TargetModel& model = *run.benchmark.model;

  auto start = Clock::now();
  if (report_path) {
    run.report = tuning_report_from_json(read_json(*report_path));
    if (run.report.dimension != model.dimension()) {
      throw ConfigError("tuning report dimension " + std::to_string(run.report.dimension) +
                        " does not match the benchmark dimension " + std::to_string(model.dimension()));
    }
  } else {
    run.report = tune(model, config.burnin_options(), config.tuning_options(), *shared_map());
  }
  run.timers.tuning = seconds_since(start);
  run.sampler = sampler_config(config, run.report);

  start = Clock::now();
  const std::vector<Vector> starts = chain_starts(config, model);
  run.timers.warmup = seconds_since(start);

  start = Clock::now();
  run.chains = run_chains(run.sampler, model, config.chains, config.production, config.workers, starts);
  run.timers.production = seconds_since(start);

  if (config.chains >= 2 && config.production >= 10) {
    start = Clock::now();
    run.diagnostics = diagnose(run.chains, config.diagnostics_options(run.sampler.trajectory));
    run.timers.diagnostics = seconds_since(start);
  }

  if (write) {
    ensure_directory(run.output / "chains");
    std::vector<std::string> files;
    for (std::size_t c = 0; c < run.chains.size(); ++c) {
      const std::string name = chain_file_name(c, config.binary_chains);
      const auto path = run.output / "chains" / name;
      if (config.binary_chains) {
        write_chain_binary(path, run.chains[c]);
      } else {
        write_chain_text(path, run.chains[c]);
      }
      files.push_back("chains/" + name);
    }
    write_json(run.output / "tuning_report.json", to_json(run.report));
    if (run.diagnostics) {
      write_json(run.output / "diagnostics.json", to_json(*run.diagnostics));
    }
    write_json(run.output / "manifest.json", manifest_json(run, files));
  }
  return run;
}

DiagnosticsReport cmd_diagnose(const std::vector<std::filesystem::path>& paths, const DiagnosticsOptions& options,
                               const std::optional<std::filesystem::path>& output) {
  std::vector<std::filesystem::path> files;
  for (const auto& p : paths) {
    for (auto& f : chain_files(p)) {
      files.push_back(std::move(f));
    }
  }
  if (files.size() < 2) {
    throw ConfigError("diagnostics need at least 2 chains (PSRF)");
  }
  std::vector<ChainResult> chains;
  for (const auto& f : files) {
    chains.push_back(read_chain(f));
  }
  const DiagnosticsReport report = diagnose(chains, options);
  if (output) {
    ensure_directory(*output);
    write_json(*output / "diagnostics.json", to_json(report));
    std::vector<std::vector<std::string>> rows;
    for (const auto& c : report.convergence.trajectory) {
      rows.push_back({std::to_string(c.length), fmt(c.max), fmt(c.mean)});
    }
    write_table(*output / "psrf_trajectory.tsv", {"length", "max_psrf", "mean_psrf"}, rows);

    rows.clear();
    const auto n = static_cast<Eigen::Index>(report.metric_length);
    for (std::size_t j = 0; j < report.dimension; ++j) {
      double ess = 0.0;
      for (const auto& c : chains) {
        ess += ess_univariate(c.samples.col(static_cast<Eigen::Index>(j)).head(n), options.ess.method);
      }
      rows.push_back({std::to_string(j + 1), fmt(ess), fmt(report.final_psrf.per_dimension[static_cast<Eigen::Index>(j)])});
    }
    write_table(*output / "ess_per_dimension.tsv", {"dimension", "ess", "psrf"}, rows);

    // Acceptance against the drawn step size, 20 equal-width bins.
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (const auto& c : chains) {
      for (const auto& r : c.records) {
        lo = std::min(lo, r.step_size);
        hi = std::max(hi, r.step_size);
      }
    }
    const std::size_t bins = hi > lo ? 20 : 1;
    std::vector<std::size_t> count(bins, 0), accepted(bins, 0);
    for (const auto& c : chains) {
      for (const auto& r : c.records) {
        const auto b = hi > lo ? std::min(bins - 1, static_cast<std::size_t>((r.step_size - lo) / (hi - lo) * bins)) : 0;
        ++count[b];
        accepted[b] += r.accepted ? 1 : 0;
      }
    }
    rows.clear();
    for (std::size_t b = 0; b < bins; ++b) {
      const double center = hi > lo ? lo + (hi - lo) * (static_cast<double>(b) + 0.5) / static_cast<double>(bins) : lo;
      rows.push_back({fmt(center), std::to_string(count[b]),
                      count[b] ? fmt(static_cast<double>(accepted[b]) / static_cast<double>(count[b])) : "nan"});
    }
    write_table(*output / "acceptance_vs_step.tsv", {"step_size", "proposals", "acceptance"}, rows);
    write_table(*output / "grad_per_ess.tsv", {"ess", "value", "grad_per_ess"}, diagnostics_rows(report));
  }
  return report;
}

std::vector<CompareRow> compare_reports(const DiagnosticsReport& a, double seconds_a, const DiagnosticsReport& b,
                                        double seconds_b, double overhead_b) {
  if (!(overhead_b > 0.0)) {
    throw ConfigError("overhead factor must be positive");
  }
  auto row = [&](const std::string& flavor, double ga, double gb, double ea, double eb) {
    CompareRow r;
    r.flavor = flavor;
    r.grad_per_ess_a = ga;
    r.grad_per_ess_b = gb;
    r.ref = ref_metric(ga, gb);
    if (seconds_a > 0.0 && seconds_b > 0.0) {
      r.ess_per_time_ratio = (ea / seconds_a) / (eb / (seconds_b * overhead_b));
    } else {
      r.ess_per_time_ratio = std::numeric_limits<double>::quiet_NaN();
    }
    return r;
  };
  return {row("min", a.per_ess.per_min, b.per_ess.per_min, a.ess.min, b.ess.min),
          row("mean", a.per_ess.per_mean, b.per_ess.per_mean, a.ess.mean, b.ess.mean),
          row("multi", a.per_ess.per_multi, b.per_ess.per_multi, a.ess.multi, b.ess.multi)};
}

std::vector<CompareRow> cmd_compare(const std::filesystem::path& a, const std::filesystem::path& b, double overhead_b,
                                    const std::optional<std::filesystem::path>& output) {
  auto load = [](const std::filesystem::path& dir) {
    const auto report = diagnostics_report_from_json(read_json(dir / "diagnostics.json"));
    double seconds = 0.0;
    if (std::filesystem::exists(dir / "manifest.json")) {
      seconds = read_json(dir / "manifest.json").at("timers").at("production").get<double>();
    }
    return std::pair{report, seconds};
  };
  const auto [ra, ta] = load(a);
  const auto [rb, tb] = load(b);
  const auto rows = compare_reports(ra, ta, rb, tb, overhead_b);
  if (output) {
    ensure_directory(*output);
    std::vector<std::vector<std::string>> cells;
    for (const auto& r : rows) {
      cells.push_back({r.flavor, fmt(r.grad_per_ess_a), fmt(r.grad_per_ess_b), fmt(r.ref), fmt(r.ess_per_time_ratio)});
    }
    write_table(*output / "compare.tsv", {"ess", "grad_per_ess_a", "grad_per_ess_b", "ref", "ess_per_time_ratio"}, cells);
  }
  return rows;
}

std::vector<SensitivityRow> cmd_sensitivity(const RunConfig& config, const std::vector<double>& deltas,
                                            const std::vector<SamplerMode>& modes,
                                            const std::optional<std::filesystem::path>& output) {
  if (deltas.empty() || modes.empty()) {
    throw ConfigError("sensitivity needs at least one perturbation and one sampler");
  }
  const double base = config.h_lower == 0.0 ? find_h_lower() : config.h_lower;
  std::vector<SensitivityRow> rows;
  for (SamplerMode mode : modes) {
    for (double delta : deltas) {
      const double h = base * (1.0 + delta);
      if (!(h > 0.0 && h < kColsi3)) {
        throw ConfigError("perturbed h_lower " + fmt(h) + " is outside (0, 3)");
      }
      RunConfig c = config;
      c.mode = mode;
      c.h_lower = delta == 0.0 ? config.h_lower : h;
      if (mode == SamplerMode::hmc) {
        c.noise.reset();
        c.adaptive_noise = false;
      }
      SampleRun run = cmd_sample(c, std::nullopt, false);
      if (!run.diagnostics) {
        throw ConfigError("sensitivity needs at least 2 chains");
      }
      rows.push_back({mode, delta, h, run.report, *run.diagnostics});
    }
  }
  if (output) {
    ensure_directory(*output);
    std::vector<std::vector<std::string>> cells;
    for (const auto& r : rows) {
      const auto& d = r.diagnostics;
      cells.push_back({to_string(r.mode), fmt(r.delta), fmt(r.h_lower), fmt(r.report.step_size.lower),
                       fmt(r.report.step_size.upper),
                       d.convergence.converged_at ? std::to_string(*d.convergence.converged_at) : "none",
                       fmt(d.per_ess.per_min), fmt(d.per_ess.per_mean), fmt(d.per_ess.per_multi)});
    }
    write_table(*output / "sensitivity.tsv",
                {"sampler", "delta", "h_lower", "dt_lower", "dt_upper", "n_conv", "grad_per_min_ess",
                 "grad_per_mean_ess", "grad_per_multi_ess"},
                cells);
  }
  return rows;
}

NoiseSpec parse_noise_spec(const std::string& text) {
  static const std::regex uniform(R"(\s*U\(\s*([-+0-9.eE]+)\s*,\s*([-+0-9.eE]+)\s*\)\s*)");
  std::smatch m;
  if (text == "opt") {
    return {text, std::nullopt};
  }
  if (text == "adaptive") {
    return {text, NoiseRule::adaptive()};
  }
  try {
    if (std::regex_match(text, m, uniform)) {
      const double lo = std::stod(m[1]);
      const double hi = std::stod(m[2]);
      if (!(lo >= 0.0 && hi > lo && hi <= 1.0)) {
        throw ConfigError("noise interval must satisfy 0 <= a < b <= 1: " + text);
      }
      // U(0, b) draws exclude 0 by construction of the sampler's uniform on [a, b).
      return {text, NoiseRule::uniform(std::max(lo, 1e-12), hi)};
    }
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used == text.size() && v > 0.0 && v <= 1.0) {
      return {text, NoiseRule::fixed(v)};
    }
  } catch (const std::invalid_argument&) {
  }
  throw ConfigError("bad noise rule '" + text + "' (opt, adaptive, 0.5, U(0,0.1))");
}

StepsSpec parse_steps_spec(const std::string& text) {
  static const std::regex pattern(R"(opt|\d+|U\{[^{}]+,[^{}]+\}|\{[^{}]+\})");
  if (!std::regex_match(text, pattern)) {
    throw ConfigError("bad trajectory rule '" + text + "' (opt, 5, U{1,66}, U{1,2D/3}, {2,5,7})");
  }
  return {text, text};
}

TrajectoryRule resolve_steps(const StepsSpec& spec, std::size_t dimension, const TrajectoryRule& tuned) {
  // An integer, or a*D/b with optional a and /b.
  auto value = [&](std::string term) {
    static const std::regex dim(R"((\d*)D(?:/(\d+))?)");
    std::smatch m;
    term.erase(std::remove_if(term.begin(), term.end(), ::isspace), term.end());
    if (std::regex_match(term, m, dim)) {
      const double a = m[1].length() ? std::stod(m[1]) : 1.0;
      const double b = m[2].length() ? std::stod(m[2]) : 1.0;
      return std::max(1, static_cast<int>(std::lround(a * static_cast<double>(dimension) / b)));
    }
    try {
      return std::stoi(term);
    } catch (const std::exception&) {
      throw ConfigError("bad trajectory bound '" + term + "'");
    }
  };
  const std::string& t = spec.text;
  if (t == "opt") {
    return tuned;
  }
  if (t.front() == 'U') {
    const auto comma = t.find(',');
    return TrajectoryRule::uniform(value(t.substr(2, comma - 2)), value(t.substr(comma + 1, t.size() - comma - 2)));
  }
  if (t.front() == '{') {
    std::vector<int> values;
    std::stringstream in(t.substr(1, t.size() - 2));
    std::string item;
    while (std::getline(in, item, ',')) {
      values.push_back(value(item));
    }
    return TrajectoryRule::choice(values);
  }
  return TrajectoryRule::fixed(value(t));
}

std::vector<SweepCell> cmd_sweep(const RunConfig& config, const std::vector<NoiseSpec>& noise,
                                 const std::vector<StepsSpec>& steps, const std::optional<std::filesystem::path>& output) {
  if (noise.empty() || steps.empty()) {
    throw ConfigError("sweep needs at least one noise rule and one trajectory rule");
  }
  if (config.chains < 2) {
    throw ConfigError("sweep needs at least 2 chains");
  }
  config.validate();
  RunConfig ghmc = config;
  ghmc.mode = SamplerMode::ghmc;
  const Benchmark bench = make_benchmark(config.benchmark, config.data);
  const TargetModel& model = *bench.model;
  const TuningReport report = tune(model, ghmc.burnin_options(), ghmc.tuning_options(), *shared_map());
  const std::vector<Vector> starts = chain_starts(ghmc, model);

  std::vector<SweepCell> cells;
  for (const auto& n : noise) {
    for (const auto& s : steps) {
      SamplerConfig sc = sampler_config(ghmc, report);
      if (n.rule) {
        sc.noise = *n.rule;
      }
      sc.trajectory = resolve_steps(s, model.dimension(), report.trajectory);
      const auto chains = run_chains(sc, model, config.chains, config.production, config.workers, starts);
      cells.push_back({n.label, s.label, diagnose(chains, config.diagnostics_options(sc.trajectory))});
    }
  }
  if (output) {
    ensure_directory(*output);
    write_json(*output / "tuning_report.json", to_json(report));
    std::vector<std::vector<std::string>> rows;
    for (const auto& c : cells) {
      const auto& d = c.diagnostics;
      for (const auto& flavor : diagnostics_rows(d)) {
        rows.push_back({config.benchmark, c.noise, c.steps, flavor[0], flavor[2],
                        d.convergence.converged_at ? std::to_string(*d.convergence.converged_at) : "none"});
      }
    }
    write_table(*output / "sweep.tsv", {"benchmark", "noise", "steps", "ess", "grad_per_ess", "n_conv"}, rows);
  }
  return cells;
}

void cmd_analyze_integrators(const std::filesystem::path& output, const IntegratorAnalysisOptions& options) {
  if (!(options.h_max > 0.0) || options.points < 2) {
    throw ConfigError("analysis grid needs h_max > 0 and at least 2 points");
  }
  ensure_directory(output);
  const SaiaMap& map = *shared_map();
  const std::vector<SplittingScheme> schemes = {build_scheme("BCSS3"), build_scheme("ME3"), build_scheme("BCSS2"),
                                                build_scheme("ME2")};
  auto energy = [](const SplittingScheme& s, double h) {
    try {
      return expected_energy_error(harmonic_propagator(s, h));
    } catch (const Error&) {
      return std::numeric_limits<double>::quiet_NaN();
    }
  };
  std::vector<std::vector<std::string>> rho_rows, vv_rows;
  for (std::size_t i = 1; i <= options.points; ++i) {
    const double h = options.h_max * static_cast<double>(i) / static_cast<double>(options.points);
    std::vector<std::string> row{fmt(h), fmt(rho3_bound_or_inf(h, kBcss3Kick)), fmt(rho3_bound_or_inf(h, kMe3Kick))};
    const double saia_b = map.kick_at(h);
    row.push_back(h < 2.0 * map.stages() ? fmt(rho3_bound_or_inf(h, saia_b)) : "nan");
    for (const auto& s : schemes) {
      row.push_back(fmt(energy(s, h)));
    }
    row.push_back(h < 2.0 * map.stages() ? fmt(energy(map.scheme_at(h), h)) : "nan");
    rho_rows.push_back(std::move(row));

    std::vector<std::string> vv{fmt(h)};
    for (int k = 1; k <= 3; ++k) {
      vv.push_back(h < 2.0 * k ? fmt(expected_energy_error_vv(k, h)) : "nan");
    }
    vv_rows.push_back(std::move(vv));
  }
  write_table(output / "rho_curves.tsv",
              {"h", "rho3_bcss3", "rho3_me3", "rho3_saia3", "energy_bcss3", "energy_me3", "energy_bcss2", "energy_me2",
               "energy_saia3"},
              rho_rows);
  write_table(output / "vv_energy_error.tsv", {"h", "vv1", "vv2", "vv3"}, vv_rows);

  std::vector<std::vector<std::string>> map_rows;
  for (const auto& n : map.nodes()) {
    map_rows.push_back({fmt(n.h), fmt(n.b), fmt(n.a), n.flagged ? "1" : "0"});
  }
  write_table(output / "saia_map.tsv", {"h", "b", "a", "flagged"}, map_rows);

  ordered_json constants;
  constants["h_lower"] = find_h_lower();
  ordered_json limits;
  for (const char* name : {"VV", "VV2", "VV3", "BCSS2", "BCSS3", "ME2", "ME3"}) {
    limits[name] = stability_limit(build_scheme(name));
  }
  constants["stability_limits"] = limits;
  constants["vv_ratio_roots"] = {{"2", vv_ratio_roots(2)}, {"3", vv_ratio_roots(3)}};
  constants["eta_midpoint"] = eta_at_midpoint(map);
  write_json(output / "constants.json", constants);
}

}  // namespace atune::bench
