#include "atune/bench/artifacts.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <regex>

#include "atune/error.hpp"

namespace atune::bench {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

constexpr std::array<const char*, 9> kRecordColumns = {
    "iteration", "accepted", "divergent", "delta_h", "steps", "stages", "step_size", "noise", "grad"};
constexpr char kMagic[8] = {'A', 'T', 'C', 'H', 'A', 'I', 'N', '1'};

double parse_double(std::string_view field, std::size_t line) {
  if (field == "inf") {
    return std::numeric_limits<double>::infinity();
  }
  if (field == "-inf") {
    return -std::numeric_limits<double>::infinity();
  }
  if (field == "nan") {
    return std::numeric_limits<double>::quiet_NaN();
  }
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc() || ptr != field.data() + field.size()) {
    throw ParseError("bad number '" + std::string(field) + "'", line);
  }
  return value;
}

// null stands for a non-finite value
ordered_json number(double value) { return std::isfinite(value) ? ordered_json(value) : ordered_json(nullptr); }

double number_from(const json& j) {
  return j.is_null() ? std::numeric_limits<double>::infinity() : j.get<double>();
}

ordered_json vector_json(const Eigen::VectorXd& v) {
  ordered_json out = ordered_json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    out.push_back(number(v[i]));
  }
  return out;
}

Eigen::VectorXd vector_from(const json& j) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    v[static_cast<Eigen::Index>(i)] = number_from(j[i]);
  }
  return v;
}

template <typename T>
void write_pod(std::ofstream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& in, const std::filesystem::path& path) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) {
    throw IoError("truncated chain file " + path.string());
  }
  return value;
}

}  // namespace

std::string format_double(double value) {
  if (std::isnan(value)) {
    return "nan";
  }
  if (std::isinf(value)) {
    return value > 0 ? "inf" : "-inf";
  }
  std::array<char, 32> buf{};
  const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), value);
  return std::string(buf.data(), ptr);
}

void write_chain_text(const std::filesystem::path& path, const ChainResult& chain) {
  std::ofstream out(path);
  if (!out) {
    throw IoError("cannot write chain file " + path.string());
  }
  out << '#';
  for (std::size_t i = 0; i < kRecordColumns.size(); ++i) {
    out << (i ? "," : "") << kRecordColumns[i];
  }
  for (Eigen::Index j = 0; j < chain.samples.cols(); ++j) {
    out << ",theta_" << (j + 1);
  }
  out << '\n';
  for (Eigen::Index i = 0; i < chain.samples.rows(); ++i) {
    const auto& r = chain.records[static_cast<std::size_t>(i)];
    out << i << ',' << (r.accepted ? 1 : 0) << ',' << (r.divergent ? 1 : 0) << ',' << format_double(r.delta_h) << ','
        << r.steps << ',' << r.stages << ',' << format_double(r.step_size) << ',' << format_double(r.noise) << ','
        << r.gradient_evaluations;
    for (Eigen::Index j = 0; j < chain.samples.cols(); ++j) {
      out << ',' << format_double(chain.samples(i, j));
    }
    out << '\n';
  }
  if (!out) {
    throw IoError("failed writing chain file " + path.string());
  }
}

ChainResult read_chain_text(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw IoError("cannot open chain file " + path.string());
  }
  std::string line;
  if (!std::getline(in, line) || line.empty() || line[0] != '#') {
    throw ParseError("missing chain header in " + path.string(), 1);
  }
  const auto columns = static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) + 1;
  if (columns < kRecordColumns.size()) {
    throw ParseError("chain header has too few columns", 1);
  }
  const std::size_t d = columns - kRecordColumns.size();
  std::vector<std::vector<double>> rows;
  std::vector<IterationRecord> records;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) {
      continue;
    }
    std::vector<double> fields;
    std::size_t start = 0;
    while (true) {
      const auto comma = line.find(',', start);
      const std::string_view field(line.data() + start, (comma == std::string::npos ? line.size() : comma) - start);
      fields.push_back(parse_double(field, line_no));
      if (comma == std::string::npos) {
        break;
      }
      start = comma + 1;
    }
    if (fields.size() != columns) {
      throw ParseError("expected " + std::to_string(columns) + " fields in " + path.string(), line_no);
    }
    IterationRecord r;
    r.accepted = fields[1] != 0.0;
    r.divergent = fields[2] != 0.0;
    r.delta_h = fields[3];
    r.steps = static_cast<int>(fields[4]);
    r.stages = static_cast<int>(fields[5]);
    r.step_size = fields[6];
    r.noise = fields[7];
    r.gradient_evaluations = static_cast<std::size_t>(fields[8]);
    records.push_back(r);
    rows.emplace_back(fields.begin() + static_cast<std::ptrdiff_t>(kRecordColumns.size()), fields.end());
  }
  ChainResult chain;
  chain.samples.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      chain.samples(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    }
  }
  chain.records = std::move(records);
  return chain;
}

void write_chain_binary(const std::filesystem::path& path, const ChainResult& chain) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw IoError("cannot write chain file " + path.string());
  }
  const auto n = static_cast<std::uint64_t>(chain.samples.rows());
  out.write(kMagic, sizeof(kMagic));
  write_pod(out, n);
  write_pod(out, static_cast<std::uint64_t>(chain.samples.cols()));
  for (const auto& r : chain.records) write_pod<std::uint8_t>(out, r.accepted ? 1 : 0);
  for (const auto& r : chain.records) write_pod<std::uint8_t>(out, r.divergent ? 1 : 0);
  for (const auto& r : chain.records) write_pod(out, r.delta_h);
  for (const auto& r : chain.records) write_pod<std::int32_t>(out, r.steps);
  for (const auto& r : chain.records) write_pod<std::int32_t>(out, r.stages);
  for (const auto& r : chain.records) write_pod(out, r.step_size);
  for (const auto& r : chain.records) write_pod(out, r.noise);
  for (const auto& r : chain.records) write_pod<std::uint64_t>(out, r.gradient_evaluations);
  // Eigen storage is column-major, so each column is contiguous.
  out.write(reinterpret_cast<const char*>(chain.samples.data()),
            static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(chain.samples.size())));
  if (!out) {
    throw IoError("failed writing chain file " + path.string());
  }
}

ChainResult read_chain_binary(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot open chain file " + path.string());
  }
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw IoError("not a binary chain file: " + path.string());
  }
  const auto n = read_pod<std::uint64_t>(in, path);
  const auto d = read_pod<std::uint64_t>(in, path);
  ChainResult chain;
  chain.records.resize(n);
  for (auto& r : chain.records) r.accepted = read_pod<std::uint8_t>(in, path) != 0;
  for (auto& r : chain.records) r.divergent = read_pod<std::uint8_t>(in, path) != 0;
  for (auto& r : chain.records) r.delta_h = read_pod<double>(in, path);
  for (auto& r : chain.records) r.steps = read_pod<std::int32_t>(in, path);
  for (auto& r : chain.records) r.stages = read_pod<std::int32_t>(in, path);
  for (auto& r : chain.records) r.step_size = read_pod<double>(in, path);
  for (auto& r : chain.records) r.noise = read_pod<double>(in, path);
  for (auto& r : chain.records) r.gradient_evaluations = read_pod<std::uint64_t>(in, path);
  chain.samples.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  in.read(reinterpret_cast<char*>(chain.samples.data()),
          static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(chain.samples.size())));
  if (!in) {
    throw IoError("truncated chain file " + path.string());
  }
  return chain;
}

ChainResult read_chain(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw IoError("chain file not found: " + path.string());
  }
  return path.extension() == ".bin" ? read_chain_binary(path) : read_chain_text(path);
}

std::string chain_file_name(std::size_t chain, bool binary) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "chain_%03zu.%s", chain, binary ? "bin" : "csv");
  return buf;
}

std::vector<std::filesystem::path> chain_files(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw IoError("no such file or directory: " + path.string());
  }
  if (std::filesystem::is_regular_file(path)) {
    return {path};
  }
  const auto dir = std::filesystem::exists(path / "chains") ? path / "chains" : path;
  static const std::regex pattern(R"(chain_\d+\.(csv|bin))");
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && std::regex_match(entry.path().filename().string(), pattern)) {
      files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) {
    throw IoError("no chain files in " + dir.string());
  }
  return files;
}

ordered_json to_json(const TrajectoryRule& rule) {
  ordered_json j;
  switch (rule.kind) {
    case TrajectoryRule::Kind::fixed:
      j["kind"] = "fixed";
      j["value"] = rule.lower;
      break;
    case TrajectoryRule::Kind::uniform:
      j["kind"] = "uniform";
      j["lower"] = rule.lower;
      j["upper"] = rule.upper;
      break;
    case TrajectoryRule::Kind::choice:
      j["kind"] = "choice";
      j["values"] = rule.values;
      break;
  }
  return j;
}

TrajectoryRule trajectory_from_json(const json& j) {
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "fixed") {
    return TrajectoryRule::fixed(j.at("value").get<int>());
  }
  if (kind == "uniform") {
    return TrajectoryRule::uniform(j.at("lower").get<int>(), j.at("upper").get<int>());
  }
  if (kind == "choice") {
    return TrajectoryRule::choice(j.at("values").get<std::vector<int>>());
  }
  throw ConfigError("unknown trajectory rule '" + kind + "'");
}

ordered_json to_json(const TuningReport& r) {
  ordered_json j;
  j["mode"] = r.mode == SamplerMode::hmc ? "hmc" : "ghmc";
  j["dimension"] = r.dimension;
  j["fitting_mode"] = r.fitting_mode == FittingMode::s ? "S" : "S_omega";
  j["fitting_factor"] = r.fitting_factor;
  j["cf"] = r.cf;
  j["h_lower"] = r.h_lower;
  j["h_upper"] = r.h_upper;
  j["step_size"] = {{"lower", r.step_size.lower}, {"upper", r.step_size.upper}};
  if (r.noise) {
    j["noise"] = {{"lower", r.noise->lower},
                  {"upper", r.noise->upper},
                  {"lower_clipped", r.noise->lower_clipped},
                  {"upper_clipped", r.noise->upper_clipped}};
  }
  j["adaptive_noise"] = r.adaptive_noise;
  j["trajectory"] = to_json(r.trajectory);
  j["integrator"] = "s-AIA3";
  j["eta_midpoint"] = r.eta_midpoint;
  j["l_candidates"] = r.l_candidates;
  const BurninStats& b = r.burnin;
  ordered_json burnin;
  burnin["iterations"] = b.iterations;
  burnin["acceptance_rate"] = b.acceptance_rate;
  burnin["step_size"] = b.step_size;
  burnin["mean_energy_error"] = b.mean_energy_error;
  burnin["has_spectrum"] = b.has_spectrum;
  burnin["frequencies"] = b.frequencies;
  burnin["max_frequency"] = b.max_frequency;
  burnin["frequency_sd"] = b.frequency_sd;
  burnin["clamped_eigenvalues"] = b.clamped_eigenvalues;
  burnin["divergences"] = b.divergences;
  burnin["noise_lower"] = b.noise_lower;
  burnin["noise_upper"] = b.noise_upper;
  burnin["final_theta"] = vector_json(b.final_theta);
  j["burnin"] = burnin;
  j["warnings"] = r.warnings;
  return j;
}

TuningReport tuning_report_from_json(const json& j) {
  try {
    TuningReport r;
    r.mode = j.at("mode").get<std::string>() == "hmc" ? SamplerMode::hmc : SamplerMode::ghmc;
    r.dimension = j.at("dimension").get<std::size_t>();
    r.fitting_mode = j.at("fitting_mode").get<std::string>() == "S" ? FittingMode::s : FittingMode::s_omega;
    r.fitting_factor = j.at("fitting_factor").get<double>();
    r.cf = j.at("cf").get<double>();
    r.h_lower = j.at("h_lower").get<double>();
    r.h_upper = j.at("h_upper").get<double>();
    r.step_size = {j.at("step_size").at("lower").get<double>(), j.at("step_size").at("upper").get<double>()};
    if (j.contains("noise")) {
      const auto& n = j.at("noise");
      r.noise = NoiseInterval{n.at("lower").get<double>(), n.at("upper").get<double>(),
                              n.at("lower_clipped").get<bool>(), n.at("upper_clipped").get<bool>()};
    }
    r.adaptive_noise = j.at("adaptive_noise").get<bool>();
    r.trajectory = trajectory_from_json(j.at("trajectory"));
    r.eta_midpoint = j.at("eta_midpoint").get<double>();
    r.l_candidates = j.at("l_candidates").get<std::array<double, 3>>();
    const auto& b = j.at("burnin");
    r.burnin.iterations = b.at("iterations").get<std::size_t>();
    r.burnin.acceptance_rate = b.at("acceptance_rate").get<double>();
    r.burnin.step_size = b.at("step_size").get<double>();
    r.burnin.mean_energy_error = b.at("mean_energy_error").get<double>();
    r.burnin.has_spectrum = b.at("has_spectrum").get<bool>();
    r.burnin.frequencies = b.at("frequencies").get<std::vector<double>>();
    r.burnin.max_frequency = b.at("max_frequency").get<double>();
    r.burnin.frequency_sd = b.at("frequency_sd").get<double>();
    r.burnin.clamped_eigenvalues = b.at("clamped_eigenvalues").get<std::size_t>();
    r.burnin.divergences = b.at("divergences").get<std::size_t>();
    r.burnin.noise_lower = b.at("noise_lower").get<double>();
    r.burnin.noise_upper = b.at("noise_upper").get<double>();
    r.burnin.final_theta = vector_from(b.at("final_theta"));
    r.warnings = j.at("warnings").get<std::vector<std::string>>();
    return r;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed tuning report: ") + e.what());
  }
}

ordered_json to_json(const DiagnosticsReport& r) {
  ordered_json j;
  j["chains"] = r.chains;
  j["iterations"] = r.iterations;
  j["dimension"] = r.dimension;
  j["converged"] = r.converged;
  j["n_conv"] = r.convergence.converged_at ? ordered_json(*r.convergence.converged_at) : ordered_json(nullptr);
  j["window"] = r.window;
  j["metric_length"] = r.metric_length;
  j["window_truncated"] = r.window_truncated;
  j["ess"] = {{"min", number(r.ess.min)}, {"mean", number(r.ess.mean)}, {"multi", number(r.ess.multi)}};
  j["gradient_evaluations"] = r.gradient_evaluations;
  j["grad_per_ess"] = {{"grad", r.per_ess.grad},
                       {"min", number(r.per_ess.per_min)},
                       {"mean", number(r.per_ess.per_mean)},
                       {"multi", number(r.per_ess.per_multi)}};
  j["acceptance_rate"] = r.acceptance_rate;
  j["mean_steps"] = r.mean_steps;
  j["stages"] = r.stages;
  j["divergences"] = r.divergences;
  j["final_psrf"] = {{"max", number(r.final_psrf.max)},
                     {"mean", number(r.final_psrf.mean)},
                     {"per_dimension", vector_json(r.final_psrf.per_dimension)}};
  ordered_json trajectory = ordered_json::array();
  for (const auto& c : r.convergence.trajectory) {
    trajectory.push_back({{"length", c.length}, {"max", number(c.max)}, {"mean", number(c.mean)}});
  }
  j["psrf_trajectory"] = trajectory;
  return j;
}

DiagnosticsReport diagnostics_report_from_json(const json& j) {
  try {
    DiagnosticsReport r;
    r.chains = j.at("chains").get<std::size_t>();
    r.iterations = j.at("iterations").get<std::size_t>();
    r.dimension = j.at("dimension").get<std::size_t>();
    r.converged = j.at("converged").get<bool>();
    if (!j.at("n_conv").is_null()) {
      r.convergence.converged_at = j.at("n_conv").get<std::size_t>();
    }
    r.window = j.at("window").get<std::size_t>();
    r.metric_length = j.at("metric_length").get<std::size_t>();
    r.window_truncated = j.at("window_truncated").get<bool>();
    r.ess = {number_from(j.at("ess").at("min")), number_from(j.at("ess").at("mean")),
             number_from(j.at("ess").at("multi"))};
    r.gradient_evaluations = j.at("gradient_evaluations").get<std::size_t>();
    const auto& g = j.at("grad_per_ess");
    r.per_ess = {g.at("grad").get<double>(), number_from(g.at("min")), number_from(g.at("mean")),
                 number_from(g.at("multi"))};
    r.acceptance_rate = j.at("acceptance_rate").get<double>();
    r.mean_steps = j.at("mean_steps").get<double>();
    r.stages = j.at("stages").get<int>();
    r.divergences = j.at("divergences").get<std::size_t>();
    r.final_psrf.max = number_from(j.at("final_psrf").at("max"));
    r.final_psrf.mean = number_from(j.at("final_psrf").at("mean"));
    r.final_psrf.per_dimension = vector_from(j.at("final_psrf").at("per_dimension"));
    for (const auto& c : j.at("psrf_trajectory")) {
      r.convergence.trajectory.push_back(
          {c.at("length").get<std::size_t>(), number_from(c.at("max")), number_from(c.at("mean"))});
    }
    return r;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed diagnostics report: ") + e.what());
  }
}

void write_json(const std::filesystem::path& path, const ordered_json& j) {
  std::ofstream out(path);
  if (!out) {
    throw IoError("cannot write " + path.string());
  }
  out << j.dump(2) << '\n';
  if (!out) {
    throw IoError("failed writing " + path.string());
  }
}

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw IoError("cannot open " + path.string());
  }
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

void write_table(const std::filesystem::path& path, const std::vector<std::string>& header,
                 const std::vector<std::vector<std::string>>& rows) {
  std::ofstream out(path);
  if (!out) {
    throw IoError("cannot write " + path.string());
  }
  auto emit = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      out << (i ? "\t" : "") << cells[i];
    }
    out << '\n';
  };
  emit(header);
  for (const auto& row : rows) {
    emit(row);
  }
  if (!out) {
    throw IoError("failed writing " + path.string());
  }
}

}  // namespace atune::bench
