#include "atune/dataset.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "atune/error.hpp"
#include "atune/rng.hpp"

namespace atune {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) {
    return {};
  }
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::vector<std::string_view> split(std::string_view line, Delimiter delimiter) {
  std::vector<std::string_view> fields;
  if (delimiter == Delimiter::comma) {
    std::size_t start = 0;
    while (true) {
      const auto pos = line.find(',', start);
      fields.push_back(trim(line.substr(start, pos == std::string_view::npos ? pos : pos - start)));
      if (pos == std::string_view::npos) {
        break;
      }
      start = pos + 1;
    }
    return fields;
  }
  std::size_t pos = 0;
  while (pos < line.size()) {
    pos = line.find_first_not_of(" \t\r", pos);
    if (pos == std::string_view::npos) {
      break;
    }
    const auto end = line.find_first_of(" \t\r", pos);
    fields.push_back(line.substr(pos, end == std::string_view::npos ? end : end - pos));
    pos = end;
  }
  return fields;
}

double parse_number(std::string_view field, std::size_t line) {
  double value = 0.0;
  const auto* begin = field.data();
  const auto* end = field.data() + field.size();
  if (!field.empty() && *begin == '+') {
    ++begin;
  }
  const auto [ptr, ec] = std::from_chars(begin, end, value);
  if (field.empty() || ec != std::errc() || ptr != end) {
    throw ParseError("dataset: cannot parse '" + std::string(field) + "' as a number", line);
  }
  return value;
}

}  // namespace

Eigen::MatrixXd BlrDataset::design() const {
  if (!intercept) {
    return covariates;
  }
  Eigen::MatrixXd x(covariates.rows(), covariates.cols() + 1);
  x.col(0).setOnes();
  x.rightCols(covariates.cols()) = covariates;
  return x;
}

void BlrDataset::validate() const {
  if (covariates.rows() < 1) {
    throw ConfigError("dataset: at least one observation is required");
  }
  if (labels.size() != covariates.rows()) {
    throw ConfigError("dataset: label count does not match the number of rows");
  }
  if (dimension() == 0) {
    throw ConfigError("dataset: model has no parameters");
  }
  for (Eigen::Index k = 0; k < labels.size(); ++k) {
    if (labels[k] != 0.0 && labels[k] != 1.0) {
      throw ConfigError("dataset: label in row " + std::to_string(k + 1) + " is not 0 or 1");
    }
  }
  if (!covariates.allFinite()) {
    throw ConfigError("dataset: covariates contain non-finite values");
  }
}

BlrDataset load_dataset(const std::filesystem::path& path, const DatasetFormat& format) {
  std::ifstream in(path);
  if (!in) {
    throw IoError("dataset: cannot open " + path.string());
  }
  std::vector<std::vector<double>> rows;
  std::size_t columns = 0;
  std::size_t column_line = 0;
  bool header_pending = format.header;
  std::string line;
  for (std::size_t number = 1; std::getline(in, line); ++number) {
    const auto content = trim(line);
    if (content.empty() || content.front() == '#') {
      continue;
    }
    if (header_pending) {
      header_pending = false;
      continue;
    }
    Delimiter delimiter = format.delimiter;
    if (delimiter == Delimiter::automatic) {
      delimiter = content.find(',') != std::string_view::npos ? Delimiter::comma : Delimiter::whitespace;
    }
    const auto fields = split(content, delimiter);
    if (fields.size() < 2) {
      throw ParseError("dataset: a row needs at least one covariate and a label", number);
    }
    if (columns == 0) {
      columns = fields.size();
      column_line = number;
    } else if (fields.size() != columns) {
      throw ParseError("dataset: dimension mismatch, expected " + std::to_string(columns) +
                           " columns (as on line " + std::to_string(column_line) + "), found " +
                           std::to_string(fields.size()),
                       number);
    }
    std::vector<double> values;
    values.reserve(fields.size());
    for (const auto field : fields) {
      values.push_back(parse_number(field, number));
    }
    if (values.back() != 0.0 && values.back() != 1.0) {
      throw ParseError("dataset: label must be 0 or 1", number);
    }
    rows.push_back(std::move(values));
  }
  if (rows.empty()) {
    throw IoError("dataset: " + path.string() + " contains no observations");
  }

  BlrDataset data;
  data.intercept = format.intercept;
  const auto k = static_cast<Eigen::Index>(rows.size());
  const auto p = static_cast<Eigen::Index>(columns - 1);
  data.covariates.resize(k, p);
  data.labels.resize(k);
  for (Eigen::Index i = 0; i < k; ++i) {
    for (Eigen::Index j = 0; j < p; ++j) {
      data.covariates(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    }
    data.labels[i] = rows[static_cast<std::size_t>(i)].back();
  }
  data.validate();
  return data;
}

void write_dataset(const std::filesystem::path& path, const BlrDataset& data, char delimiter) {
  std::ofstream out(path);
  if (!out) {
    throw IoError("dataset: cannot write " + path.string());
  }
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (Eigen::Index i = 0; i < data.covariates.rows(); ++i) {
    for (Eigen::Index j = 0; j < data.covariates.cols(); ++j) {
      out << data.covariates(i, j) << delimiter;
    }
    out << data.labels[i] << '\n';
  }
  if (!out) {
    throw IoError("dataset: write failed for " + path.string());
  }
}

BlrDataset standardize(BlrDataset data) {
  const auto k = data.covariates.rows();
  for (Eigen::Index j = 0; j < data.covariates.cols(); ++j) {
    auto col = data.covariates.col(j);
    const double mean = col.mean();
    col.array() -= mean;
    if (k > 1) {
      const double sd = std::sqrt(col.squaredNorm() / static_cast<double>(k - 1));
      if (sd > 0.0) {
        col /= sd;
      }
    }
  }
  return data;
}

BlrDataset generate_synthetic_blr(std::size_t dimension, std::size_t observations,
                                  std::uint64_t seed, bool separable, bool intercept) {
  const std::size_t covariates = dimension - (intercept ? 1 : 0);
  if (dimension == 0 || covariates == 0 || observations == 0) {
    throw ConfigError("synthetic blr: need at least one covariate and one observation");
  }
  Rng rng(seed, 1, StreamPurpose::data);
  const auto k = static_cast<Eigen::Index>(observations);
  const auto p = static_cast<Eigen::Index>(covariates);
  BlrDataset data;
  data.intercept = intercept;
  data.covariates.resize(k, p);
  data.labels.resize(k);

  // Coefficients scaled so that the linear predictor has unit variance.
  Eigen::VectorXd beta(p);
  for (Eigen::Index j = 0; j < p; ++j) {
    beta[j] = rng.normal() / std::sqrt(static_cast<double>(p));
  }
  const double offset = intercept ? 0.5 * rng.normal() : 0.0;
  for (Eigen::Index i = 0; i < k; ++i) {
    for (Eigen::Index j = 0; j < p; ++j) {
      data.covariates(i, j) = rng.normal();
    }
    const double eta = offset + data.covariates.row(i).dot(beta);
    const double u = rng.uniform();
    if (separable) {
      data.labels[i] = eta > 0.0 ? 1.0 : 0.0;
    } else {
      data.labels[i] = u < 1.0 / (1.0 + std::exp(-eta)) ? 1.0 : 0.0;
    }
  }
  return data;
}

}  // namespace atune
