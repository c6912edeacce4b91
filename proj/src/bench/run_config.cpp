#include "atune/bench/run_config.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "atune/error.hpp"

namespace atune::bench {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

template <typename T>
ordered_json optional_json(const std::optional<T>& value) {
  return value ? ordered_json(*value) : ordered_json(nullptr);
}

template <typename T>
std::optional<T> optional_from(const json& value) {
  if (value.is_null()) {
    return std::nullopt;
  }
  return value.get<T>();
}

}  // namespace

std::string to_string(SamplerMode mode) { return mode == SamplerMode::hmc ? "hmc" : "ghmc"; }

SamplerMode parse_mode(const std::string& text) {
  const std::string t = lower(text);
  if (t == "hmc") {
    return SamplerMode::hmc;
  }
  if (t == "ghmc") {
    return SamplerMode::ghmc;
  }
  throw ConfigError("unknown sampler mode '" + text + "' (hmc, ghmc)");
}

std::string to_string(FittingMode mode) { return mode == FittingMode::s ? "S" : "S_omega"; }

FittingMode parse_fitting(const std::string& text) {
  const std::string t = lower(text);
  if (t == "s") {
    return FittingMode::s;
  }
  if (t == "s_omega" || t == "somega") {
    return FittingMode::s_omega;
  }
  throw ConfigError("unknown fitting mode '" + text + "' (S, S_omega)");
}

std::string to_string(EssMethod method) { return method == EssMethod::geyer ? "geyer" : "ar_spectral"; }

EssMethod parse_ess_method(const std::string& text) {
  const std::string t = lower(text);
  if (t == "geyer") {
    return EssMethod::geyer;
  }
  if (t == "ar_spectral" || t == "ar") {
    return EssMethod::ar_spectral;
  }
  throw ConfigError("unknown ESS method '" + text + "' (geyer, ar_spectral)");
}

void RunConfig::validate() const {
  if (benchmark.empty()) {
    throw ConfigError("benchmark id is empty");
  }
  if (production < 1) {
    throw ConfigError("production iterations must be at least 1");
  }
  if (chains < 1) {
    throw ConfigError("chain count must be at least 1");
  }
  if (burnin < 100) {
    throw ConfigError("burn-in needs at least 100 iterations");
  }
  if (!(target_acceptance > 0.0 && target_acceptance < 1.0)) {
    throw ConfigError("target acceptance must lie in (0, 1)");
  }
  if (h_lower != 0.0 && !(h_lower > 0.0 && h_lower < kColsi3)) {
    throw ConfigError("h_lower must lie in (0, 3)");
  }
  if (mode == SamplerMode::hmc && noise && *noise != 1.0) {
    throw ConfigError("noise override is only meaningful in GHMC mode");
  }
  if (mode == SamplerMode::hmc && adaptive_noise) {
    throw ConfigError("adaptive noise is only meaningful in GHMC mode");
  }
  if (noise && !(*noise > 0.0 && *noise <= 1.0)) {
    throw ConfigError("noise override must lie in (0, 1]");
  }
  if (noise && adaptive_noise) {
    throw ConfigError("noise override and adaptive noise are mutually exclusive");
  }
  if (step_size && !(*step_size > 0.0)) {
    throw ConfigError("step size override must be positive");
  }
  if (steps && *steps < 1) {
    throw ConfigError("steps override must be at least 1");
  }
  if (psrf_rule != "auto" && psrf_rule != "max" && psrf_rule != "average") {
    throw ConfigError("psrf_rule must be auto, max or average");
  }
  if (workers < 1) {
    throw ConfigError("worker count must be at least 1");
  }
  if (integrator) {
    build_scheme(*integrator);
  }
}

ordered_json RunConfig::to_json() const {
  ordered_json j;
  j["benchmark"] = benchmark;
  j["dataset"] = data.dataset ? ordered_json(data.dataset->string()) : ordered_json(nullptr);
  j["standardize"] = data.standardize;
  j["header"] = data.header;
  j["prior_sd"] = data.prior_sd;
  j["data_seed"] = data.data_seed;
  j["mode"] = to_string(mode);
  j["chains"] = chains;
  j["burnin"] = burnin;
  j["production"] = production;
  j["seed"] = seed;
  j["warm_start"] = warm_start;
  j["target_acceptance"] = target_acceptance;
  j["fitting"] = fitting ? ordered_json(to_string(*fitting)) : ordered_json(nullptr);
  j["frequencies"] = frequencies;
  j["h_lower"] = h_lower;
  j["adaptive_noise"] = adaptive_noise;
  j["l_opt_for_hmc"] = l_opt_for_hmc;
  j["accepted_only_energy"] = accepted_only_energy;
  j["step_size"] = optional_json(step_size);
  j["steps"] = optional_json(steps);
  j["noise"] = optional_json(noise);
  j["integrator"] = optional_json(integrator);
  j["ess_method"] = to_string(ess_method);
  j["pool_ess"] = pool_ess;
  j["window"] = window;
  j["psrf_rule"] = psrf_rule;
  j["binary_chains"] = binary_chains;
  return j;
}

RunConfig RunConfig::from_json(const json& j, RunConfig c) {
  if (!j.is_object()) {
    throw ConfigError("run config must be a JSON object");
  }
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "benchmark") c.benchmark = v.get<std::string>();
      else if (key == "dataset") c.data.dataset = v.is_null() ? std::nullopt : std::optional<std::filesystem::path>(v.get<std::string>());
      else if (key == "standardize") c.data.standardize = v.get<bool>();
      else if (key == "header") c.data.header = v.get<bool>();
      else if (key == "prior_sd") c.data.prior_sd = v.get<double>();
      else if (key == "data_seed") c.data.data_seed = v.get<std::uint64_t>();
      else if (key == "mode") c.mode = parse_mode(v.get<std::string>());
      else if (key == "chains") c.chains = v.get<std::size_t>();
      else if (key == "burnin") c.burnin = v.get<std::size_t>();
      else if (key == "production") c.production = v.get<std::size_t>();
      else if (key == "seed") c.seed = v.get<std::uint64_t>();
      else if (key == "warm_start") c.warm_start = v.get<bool>();
      else if (key == "target_acceptance") c.target_acceptance = v.get<double>();
      else if (key == "fitting") c.fitting = v.is_null() ? std::nullopt : std::optional<FittingMode>(parse_fitting(v.get<std::string>()));
      else if (key == "frequencies") c.frequencies = v.get<bool>();
      else if (key == "h_lower") c.h_lower = v.get<double>();
      else if (key == "adaptive_noise") c.adaptive_noise = v.get<bool>();
      else if (key == "l_opt_for_hmc") c.l_opt_for_hmc = v.get<bool>();
      else if (key == "accepted_only_energy") c.accepted_only_energy = v.get<bool>();
      else if (key == "step_size") c.step_size = optional_from<double>(v);
      else if (key == "steps") c.steps = optional_from<int>(v);
      else if (key == "noise") c.noise = optional_from<double>(v);
      else if (key == "integrator") c.integrator = optional_from<std::string>(v);
      else if (key == "ess_method") c.ess_method = parse_ess_method(v.get<std::string>());
      else if (key == "pool_ess") c.pool_ess = v.get<bool>();
      else if (key == "window") c.window = v.get<std::size_t>();
      else if (key == "psrf_rule") c.psrf_rule = v.get<std::string>();
      else if (key == "binary_chains") c.binary_chains = v.get<bool>();
      else if (key == "output") c.output = v.get<std::string>();
      else if (key == "workers") c.workers = v.get<std::size_t>();
      else throw ConfigError("unknown config key '" + key + "'");
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad config value: ") + e.what());
  }
  return c;
}

RunConfig RunConfig::from_file(const std::filesystem::path& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) {
    throw IoError("cannot open config file " + path.string());
  }
  json j;
  try {
    j = json::parse(in, nullptr, true, true);
  } catch (const json::parse_error& e) {
    throw ConfigError("config file " + path.string() + ": " + e.what());
  }
  return from_json(j, std::move(base));
}

std::string RunConfig::hash() const {
  const std::string text = to_json().dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream out;
  out << std::hex << std::setw(16) << std::setfill('0') << h;
  return out.str();
}

BurninOptions RunConfig::burnin_options() const {
  BurninOptions o;
  o.iterations = burnin;
  o.target_acceptance = target_acceptance;
  o.mode = mode;
  o.frequencies = frequencies;
  o.accepted_only_energy = accepted_only_energy;
  o.seed = seed;
  o.h_lower = h_lower;
  return o;
}

TuningOptions RunConfig::tuning_options() const {
  TuningOptions o;
  o.mode = mode;
  o.fitting = fitting;
  o.l_opt_for_hmc = l_opt_for_hmc;
  o.adaptive_noise = adaptive_noise;
  o.h_lower = h_lower;
  return o;
}

DiagnosticsOptions RunConfig::diagnostics_options(const TrajectoryRule& trajectory) const {
  DiagnosticsOptions o;
  o.window = window;
  o.ess.method = ess_method;
  o.ess.pool = pool_ess;
  if (psrf_rule == "average") {
    o.rule.use_average = true;
  } else if (psrf_rule == "auto") {
    o.rule.use_average = trajectory.kind == TrajectoryRule::Kind::fixed && trajectory.lower == 1;
  }
  return o;
}

std::filesystem::path resolve_output(const RunConfig& config) {
  if (!config.output.empty()) {
    return config.output;
  }
  const std::string leaf = config.benchmark + "-" + config.hash();
  if (const char* root = std::getenv(kOutputRootEnv); root != nullptr && *root != '\0') {
    return std::filesystem::path(root) / leaf;
  }
  return std::filesystem::path("runs") / leaf;
}

RunConfig RunConfig::from_json(const json& j) { return from_json(j, RunConfig{}); }

RunConfig RunConfig::from_file(const std::filesystem::path& path) { return from_file(path, RunConfig{}); }

}  // namespace atune::bench
