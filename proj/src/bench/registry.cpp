#include "atune/bench/registry.hpp"

#include <charconv>
#include <cmath>

#include "atune/dataset.hpp"
#include "atune/error.hpp"

namespace atune::bench {

namespace {

bool starts_with(const std::string& s, const std::string& prefix) {
  return s.compare(0, prefix.size(), prefix) == 0;
}

std::size_t parse_size(const std::string& text, const std::string& id) {
  std::size_t value = 0;
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end || value == 0) {
    throw ConfigError("benchmark '" + id + "': bad size '" + text + "'");
  }
  return value;
}

Benchmark blr_benchmark(const std::string& id, BlrDataset data, const BenchmarkOptions& options,
                        nlohmann::ordered_json description) {
  if (!(options.prior_sd > 0.0)) {
    throw ConfigError("benchmark '" + id + "': prior_sd must be positive");
  }
  if (options.standardize) {
    data = standardize(std::move(data));
  }
  description["dimension"] = data.dimension();
  description["observations"] = data.observations();
  description["prior_sd"] = options.prior_sd;
  description["standardize"] = options.standardize;
  return {id, std::make_shared<BlrModel>(data, options.prior_sd, id), std::move(description)};
}

Benchmark synthetic_blr(const std::string& id, std::size_t dimension, std::size_t observations,
                        bool separable, const BenchmarkOptions& options) {
  if (dimension < 2) {
    throw ConfigError("benchmark '" + id + "': BLR needs at least one covariate");
  }
  nlohmann::ordered_json d;
  d["kind"] = separable ? "blr-separable" : "blr-synthetic";
  d["data_seed"] = options.data_seed;
  return blr_benchmark(id, generate_synthetic_blr(dimension, observations, options.data_seed, separable),
                       options, std::move(d));
}

}  // namespace

Benchmark make_benchmark(const std::string& id, const BenchmarkOptions& options) {
  if (starts_with(id, "gauss-identity-")) {
    const std::size_t d = parse_size(id.substr(15), id);
    nlohmann::ordered_json desc{{"kind", "gauss-identity"}, {"dimension", d}};
    return {id, std::make_shared<GaussianModel>(GaussianSpec{Matrix::Identity(static_cast<Eigen::Index>(d),
                                                                               static_cast<Eigen::Index>(d))},
                                                id),
            desc};
  }
  if (starts_with(id, "gauss-")) {
    const std::size_t d = parse_size(id.substr(6), id);
    nlohmann::ordered_json desc{{"kind", "gauss-wishart"}, {"dimension", d}, {"wishart_seed", options.data_seed}};
    return {id, std::make_shared<GaussianModel>(gen_wishart_precision(d, options.data_seed), id), desc};
  }
  if (starts_with(id, "blr-synthetic-")) {
    const std::string rest = id.substr(14);
    const auto dash = rest.find('-');
    if (dash == std::string::npos) {
      throw ConfigError("benchmark '" + id + "': expected blr-synthetic-<D>-<K>");
    }
    return synthetic_blr(id, parse_size(rest.substr(0, dash), id), parse_size(rest.substr(dash + 1), id), false,
                         options);
  }
  if (id == "blr-file") {
    if (!options.dataset) {
      throw ConfigError("benchmark 'blr-file' needs a dataset path (--dataset)");
    }
    DatasetFormat format;
    format.header = options.header;
    nlohmann::ordered_json d{{"kind", "blr-file"}, {"dataset", options.dataset->string()}};
    return blr_benchmark(id, load_dataset(*options.dataset, format), options, std::move(d));
  }
  if (id == "german") {
    return synthetic_blr(id, 25, 1000, false, options);
  }
  if (id == "musk") {
    return synthetic_blr(id, 167, 476, false, options);
  }
  if (id == "separable") {
    return synthetic_blr(id, 11, 200, true, options);
  }
  if (id == "banana") {
    nlohmann::ordered_json d{{"kind", "banana"}, {"observations", 100}, {"data_seed", options.data_seed}};
    return {id, std::make_shared<BananaModel>(make_banana_spec(100, options.data_seed)), d};
  }
  throw ConfigError("unknown benchmark '" + id + "'");
}

std::vector<std::string> benchmark_patterns() {
  return {"gauss-<D>", "gauss-identity-<D>", "blr-synthetic-<D>-<K>", "blr-file",
          "german",    "musk",               "separable",             "banana"};
}

}  // namespace atune::bench
