#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "atune/model.hpp"

namespace atune::bench {

struct BenchmarkOptions {
  /// Required by blr-file.
  std::optional<std::filesystem::path> dataset;
  bool standardize = true;
  bool header = false;
  double prior_sd = 10.0;
  /// Seed for generated data and Wishart draws.
  std::uint64_t data_seed = 1;
};

struct Benchmark {
  std::string id;
  std::shared_ptr<const TargetModel> model;
  /// Construction details recorded in manifests (shape, seeds, data source).
  nlohmann::ordered_json description;
};

/// Registered ids:
///   gauss-<D>                Wishart(I_D, D) precision
///   gauss-identity-<D>       identity precision
///   blr-synthetic-<D>-<K>    synthetic logistic regression, D parameters with intercept
///   blr-file                 logistic regression on options.dataset
///   german, musk             synthetic stand-ins of shape (25, 1000) and (167, 476)
///   separable                perfectly separable synthetic set (11, 200)
///   banana                   100 observations
/// Throws ConfigError for unknown ids or missing inputs.
Benchmark make_benchmark(const std::string& id, const BenchmarkOptions& options = {});

/// Id patterns accepted by make_benchmark, for help text.
std::vector<std::string> benchmark_patterns();

}  // namespace atune::bench
