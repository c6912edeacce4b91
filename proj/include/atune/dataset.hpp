#pragma once

#include <cstdint>
#include <filesystem>

#include <Eigen/Dense>

namespace atune {

/// Binary-response regression data: K observations of p covariates.
struct BlrDataset {
  Eigen::MatrixXd covariates;  // K x p
  Eigen::VectorXd labels;      // K entries, each 0 or 1
  bool intercept = true;

  std::size_t observations() const { return static_cast<std::size_t>(covariates.rows()); }
  /// Parameter dimension: covariate count plus one when an intercept is fitted.
  std::size_t dimension() const {
    return static_cast<std::size_t>(covariates.cols()) + (intercept ? 1 : 0);
  }
  /// Design matrix with a leading column of ones when the intercept is on.
  Eigen::MatrixXd design() const;
  /// Throws ConfigError on empty data, mismatched sizes or non-binary labels.
  void validate() const;
};

enum class Delimiter { automatic, comma, whitespace };

struct DatasetFormat {
  Delimiter delimiter = Delimiter::automatic;
  bool header = false;
  bool intercept = true;
};

/// Reads delimiter-separated numeric rows with the label in the last column.
/// Blank lines and lines starting with '#' are skipped.
BlrDataset load_dataset(const std::filesystem::path& path, const DatasetFormat& format = {});

/// Writes rows as `x_1,...,x_p,y` with round-trip precision.
void write_dataset(const std::filesystem::path& path, const BlrDataset& data, char delimiter = ',');

/// Centers every covariate column and scales it to unit sample standard deviation.
/// Constant columns are only centered.
BlrDataset standardize(BlrDataset data);

/// Synthetic logistic-regression data of a given shape. Covariates are i.i.d.
/// N(0, 1); labels are Bernoulli draws from a random coefficient vector, or,
/// with `separable`, the sign of the linear predictor (perfectly separable).
BlrDataset generate_synthetic_blr(std::size_t dimension, std::size_t observations,
                                  std::uint64_t seed, bool separable = false,
                                  bool intercept = true);

}  // namespace atune
