#include "atune/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numeric>

#include <unsupported/Eigen/FFT>

#include "atune/error.hpp"

namespace atune {

namespace {

// Biased autocovariances gamma_0..gamma_{n-1} (denominator n) by zero-padded FFT.
std::vector<double> autocovariance(const Eigen::Ref<const Eigen::VectorXd>& x) {
  const auto n = static_cast<std::size_t>(x.size());
  std::size_t size = 1;
  while (size < 2 * n) {
    size <<= 1;
  }
  const double mean = x.mean();
  std::vector<double> padded(size, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    padded[i] = x[static_cast<Eigen::Index>(i)] - mean;
  }
  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> spectrum;
  fft.fwd(spectrum, padded);
  for (auto& value : spectrum) {
    value = std::norm(value);
  }
  std::vector<double> acov;
  fft.inv(acov, spectrum);
  acov.resize(n);
  for (auto& value : acov) {
    value /= static_cast<double>(n);
  }
  return acov;
}

void check_series(const Eigen::Ref<const Eigen::VectorXd>& series) {
  if (series.size() < 10) {
    throw ConfigError("ESS: at least 10 samples are required");
  }
  if (!series.allFinite()) {
    throw NumericError("ESS: series contains non-finite values");
  }
  if (series.maxCoeff() == series.minCoeff()) {
    throw NumericError("ESS: series is constant, effective sample size is undefined");
  }
}

double ess_geyer(const Eigen::Ref<const Eigen::VectorXd>& x) {
  const auto acov = autocovariance(x);
  const double gamma0 = acov[0];
  const std::size_t n = acov.size();
  double tau = -1.0;
  double previous = std::numeric_limits<double>::infinity();
  for (std::size_t t = 0; t + 1 < n; t += 2) {
    double pair = (acov[t] + acov[t + 1]) / gamma0;
    if (!(pair > 0.0)) {
      break;
    }
    pair = std::min(pair, previous);
    previous = pair;
    tau += 2.0 * pair;
  }
  return static_cast<double>(n) / tau;
}

double ess_ar_spectral(const Eigen::Ref<const Eigen::VectorXd>& x) {
  const auto acov = autocovariance(x);
  const auto n = static_cast<double>(acov.size());
  const std::size_t max_order =
      std::min<std::size_t>(acov.size() - 1, static_cast<std::size_t>(std::floor(10.0 * std::log10(n))));
  // Levinson-Durbin recursion; keep the AIC-best order.
  std::vector<double> phi;
  double sigma2 = acov[0];
  double best_aic = n * std::log(sigma2);
  std::vector<double> best_phi;
  double best_sigma2 = sigma2;
  for (std::size_t k = 1; k <= max_order; ++k) {
    double num = acov[k];
    for (std::size_t j = 0; j < phi.size(); ++j) {
      num -= phi[j] * acov[k - 1 - j];
    }
    const double reflection = num / sigma2;
    std::vector<double> next(k);
    for (std::size_t j = 0; j + 1 < k; ++j) {
      next[j] = phi[j] - reflection * phi[k - 2 - j];
    }
    next[k - 1] = reflection;
    phi = std::move(next);
    sigma2 *= 1.0 - reflection * reflection;
    if (!(sigma2 > 0.0)) {
      break;
    }
    const double aic = n * std::log(sigma2) + 2.0 * static_cast<double>(k);
    if (aic < best_aic) {
      best_aic = aic;
      best_phi = phi;
      best_sigma2 = sigma2;
    }
  }
  const double order = static_cast<double>(best_phi.size());
  const double var_pred = best_sigma2 * n / (n - (order + 1.0));
  const double phi_sum = std::accumulate(best_phi.begin(), best_phi.end(), 0.0);
  const double spectrum0 = var_pred / ((1.0 - phi_sum) * (1.0 - phi_sum));
  const double variance = acov[0] * n / (n - 1.0);
  return n * variance / spectrum0;
}

// log det of a symmetric positive definite matrix; throws when singular.
double log_det(const Eigen::MatrixXd& m, const char* what) {
  Eigen::LLT<Eigen::MatrixXd> llt(m);
  if (llt.info() != Eigen::Success) {
    throw NumericError(std::string("multiESS: ") + what + " is singular");
  }
  const Eigen::VectorXd diag = llt.matrixL().toDenseMatrix().diagonal();
  if ((diag.array() <= 0.0).any() || diag.minCoeff() < 1e-12 * diag.maxCoeff()) {
    throw NumericError(std::string("multiESS: ") + what + " is singular");
  }
  return 2.0 * diag.array().log().sum();
}

std::size_t common_length(const std::vector<Eigen::MatrixXd>& chains) {
  if (chains.empty()) {
    throw ConfigError("diagnostics: no chains");
  }
  const auto rows = chains.front().rows();
  const auto cols = chains.front().cols();
  for (const auto& c : chains) {
    if (c.rows() != rows || c.cols() != cols) {
      throw ConfigError("diagnostics: chains must share length and dimension");
    }
  }
  return static_cast<std::size_t>(rows);
}

double sample_variance(const std::vector<double>& v) {
  const double m = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double s = 0.0;
  for (double x : v) {
    s += (x - m) * (x - m);
  }
  return s / static_cast<double>(v.size() - 1);
}

double sample_covariance(const std::vector<double>& a, const std::vector<double>& b) {
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / static_cast<double>(a.size());
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / static_cast<double>(b.size());
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    s += (a[i] - ma) * (b[i] - mb);
  }
  return s / static_cast<double>(a.size() - 1);
}

}  // namespace

double ess_univariate(const Eigen::Ref<const Eigen::VectorXd>& series, EssMethod method) {
  check_series(series);
  return method == EssMethod::geyer ? ess_geyer(series) : ess_ar_spectral(series);
}

double multi_ess(const Eigen::Ref<const Eigen::MatrixXd>& samples) {
  return multi_ess(std::vector<Eigen::MatrixXd>{samples});
}

double multi_ess(const std::vector<Eigen::MatrixXd>& chains, std::size_t length) {
  const std::size_t full = common_length(chains);
  const auto n = static_cast<Eigen::Index>(length == 0 ? full : std::min(length, full));
  const auto d = chains.front().cols();
  const auto c = static_cast<Eigen::Index>(chains.size());
  if (n <= d) {
    throw NumericError("multiESS: needs more iterations than dimensions (N = " + std::to_string(n) +
                       ", D = " + std::to_string(d) +
                       "); extend the metric window past D iterations");
  }
  const auto b = static_cast<Eigen::Index>(std::floor(std::sqrt(static_cast<double>(n))));
  const auto a = n / b;
  if (c * (a - 1) < d) {
    throw NumericError("multiESS: " + std::to_string(c * a) + " batches cannot resolve " +
                       std::to_string(d) + " dimensions; run longer chains");
  }
  Eigen::MatrixXd lambda = Eigen::MatrixXd::Zero(d, d);
  Eigen::MatrixXd batch_means(c * a, d);
  for (Eigen::Index k = 0; k < c; ++k) {
    const auto rows = chains[static_cast<std::size_t>(k)].topRows(n);
    const Eigen::RowVectorXd mean = rows.colwise().mean();
    const Eigen::MatrixXd centered = rows.rowwise() - mean;
    lambda.noalias() += centered.transpose() * centered;
    for (Eigen::Index j = 0; j < a; ++j) {
      batch_means.row(k * a + j) = rows.middleRows(j * b, b).colwise().mean() - mean;
    }
  }
  lambda /= static_cast<double>(c * (n - 1));
  const Eigen::MatrixXd sigma = static_cast<double>(b) * batch_means.transpose() * batch_means /
                                static_cast<double>(c * (a - 1));
  const double log_ratio = log_det(lambda, "sample covariance") - log_det(sigma, "batch-means covariance");
  return static_cast<double>(c * n) * std::exp(log_ratio / static_cast<double>(d));
}

PsrfResult psrf(const std::vector<Eigen::MatrixXd>& chains, std::size_t length) {
  const std::size_t full = common_length(chains);
  const std::size_t n = length == 0 ? full : std::min(length, full);
  const std::size_t m = chains.size();
  if (m < 2) {
    throw ConfigError("PSRF: at least 2 chains are required");
  }
  if (n < 10) {
    throw ConfigError("PSRF: at least 10 iterations are required");
  }
  const auto d = chains.front().cols();
  const double nn = static_cast<double>(n);
  const double mm = static_cast<double>(m);
  PsrfResult result;
  result.per_dimension.resize(d);
  for (Eigen::Index j = 0; j < d; ++j) {
    std::vector<double> means(m);
    std::vector<double> variances(m);
    for (std::size_t c = 0; c < m; ++c) {
      const auto col = chains[c].col(j).head(static_cast<Eigen::Index>(n));
      means[c] = col.mean();
      variances[c] = (col.array() - means[c]).square().sum() / (nn - 1.0);
    }
    const double w = std::accumulate(variances.begin(), variances.end(), 0.0) / mm;
    const double b = nn * sample_variance(means);
    const double mu = std::accumulate(means.begin(), means.end(), 0.0) / mm;
    if (!(w > 0.0)) {
      throw NumericError("PSRF: zero within-chain variance in dimension " + std::to_string(j));
    }
    std::vector<double> means_sq(m);
    for (std::size_t c = 0; c < m; ++c) {
      means_sq[c] = means[c] * means[c];
    }
    const double var_w = sample_variance(variances) / mm;
    const double var_b = 2.0 * b * b / (mm - 1.0);
    const double cov_wb =
        (nn / mm) * (sample_covariance(variances, means_sq) - 2.0 * mu * sample_covariance(variances, means));
    const double v = (nn - 1.0) * w / nn + (1.0 + 1.0 / mm) * b / nn;
    const double var_v = ((nn - 1.0) * (nn - 1.0) * var_w + (1.0 + 1.0 / mm) * (1.0 + 1.0 / mm) * var_b +
                          2.0 * (nn - 1.0) * (1.0 + 1.0 / mm) * cov_wb) /
                         (nn * nn);
    // var_v = 0 means infinite degrees of freedom, where the correction is 1.
    const double df_adj = var_v > 0.0 ? ((2.0 * v * v / var_v) + 3.0) / ((2.0 * v * v / var_v) + 1.0) : 1.0;
    const double r2 = (nn - 1.0) / nn + (1.0 + 1.0 / mm) * (b / w) / nn;
    result.per_dimension[j] = std::sqrt(df_adj * r2);
  }
  result.max = result.per_dimension.maxCoeff();
  result.mean = result.per_dimension.mean();
  return result;
}

std::vector<std::size_t> convergence_checkpoints(std::size_t length) {
  std::vector<std::size_t> points;
  std::size_t n = 10;
  while (n < length) {
    points.push_back(n);
    n = std::max(n + 1, static_cast<std::size_t>(std::ceil(1.2 * static_cast<double>(n))));
  }
  if (length >= 10) {
    points.push_back(length);
  }
  return points;
}

ConvergenceScan find_n_conv(const std::vector<Eigen::MatrixXd>& chains, const ConvergenceRule& rule) {
  const std::size_t n = common_length(chains);
  ConvergenceScan scan;
  for (std::size_t length : convergence_checkpoints(n)) {
    PsrfResult r;
    try {
      r = psrf(chains, length);
    } catch (const NumericError&) {
      // a prefix with a stuck chain has no finite PSRF yet
      r.max = r.mean = std::numeric_limits<double>::infinity();
    }
    scan.trajectory.push_back({length, r.max, r.mean});
    const double value = rule.use_average ? r.mean : r.max;
    if (value < rule.threshold) {
      scan.converged_at = length;
      break;
    }
  }
  return scan;
}

EssSummary ess_summary(const std::vector<Eigen::MatrixXd>& chains, std::size_t length,
                       const EssOptions& options) {
  const std::size_t full = common_length(chains);
  const auto n = static_cast<Eigen::Index>(length == 0 ? full : std::min(length, full));
  const auto d = chains.front().cols();
  std::vector<Eigen::MatrixXd> groups;
  if (options.pool) {
    Eigen::MatrixXd pooled(n * static_cast<Eigen::Index>(chains.size()), d);
    for (std::size_t c = 0; c < chains.size(); ++c) {
      pooled.middleRows(static_cast<Eigen::Index>(c) * n, n) = chains[c].topRows(n);
    }
    groups.push_back(std::move(pooled));
  } else {
    for (const auto& c : chains) {
      groups.push_back(c.topRows(n));
    }
  }
  Eigen::VectorXd per_dim = Eigen::VectorXd::Zero(d);
  EssSummary summary;
  for (const auto& g : groups) {
    for (Eigen::Index j = 0; j < d; ++j) {
      per_dim[j] += ess_univariate(g.col(j), options.method);
    }
  }
  summary.multi = multi_ess(groups);
  summary.min = per_dim.minCoeff();
  summary.mean = per_dim.mean();
  return summary;
}

GradPerEss grad_per_ess(double grad, const EssSummary& ess) {
  if (!(ess.min > 0.0) || !(ess.mean > 0.0) || !(ess.multi > 0.0)) {
    throw NumericError("grad/ESS: ESS must be positive");
  }
  return {grad, grad / ess.min, grad / ess.mean, grad / ess.multi};
}

GradPerEss grad_per_ess(std::size_t n_conv, std::size_t window, double mean_steps, int stages,
                        std::size_t chains, const EssSummary& ess) {
  const double grad = static_cast<double>(n_conv + window) * mean_steps * stages * static_cast<double>(chains);
  return grad_per_ess(grad, ess);
}

double ref_metric(double m1, double m2) {
  if (!(m1 > 0.0) || !(m2 > 0.0)) {
    throw NumericError("REF: metrics must be positive");
  }
  return m2 / m1;
}

namespace {

DiagnosticsReport diagnose_matrices(const std::vector<Eigen::MatrixXd>& chains,
                                    const DiagnosticsOptions& options) {
  DiagnosticsReport report;
  report.chains = chains.size();
  report.iterations = common_length(chains);
  report.dimension = static_cast<std::size_t>(chains.front().cols());
  report.window = options.window != 0 ? options.window : (report.dimension >= 2000 ? 2000 : 1000);
  report.convergence = find_n_conv(chains, options.rule);
  report.final_psrf = psrf(chains);
  report.converged = report.convergence.converged_at.has_value();
  if (report.converged) {
    const std::size_t wanted = *report.convergence.converged_at + report.window;
    report.window_truncated = wanted > report.iterations;
    report.metric_length = std::min(wanted, report.iterations);
  } else {
    report.metric_length = report.iterations;
  }
  report.ess = ess_summary(chains, report.metric_length, options.ess);
  return report;
}

}  // namespace

DiagnosticsReport diagnose(const std::vector<Eigen::MatrixXd>& chains, const DiagnosticsOptions& options) {
  return diagnose_matrices(chains, options);
}

DiagnosticsReport diagnose(const std::vector<ChainResult>& chains, const DiagnosticsOptions& options) {
  std::vector<Eigen::MatrixXd> samples;
  samples.reserve(chains.size());
  for (const auto& c : chains) {
    samples.push_back(c.samples);
  }
  DiagnosticsReport report = diagnose_matrices(samples, options);
  std::size_t accepted = 0;
  std::size_t steps = 0;
  std::size_t records = 0;
  for (const auto& c : chains) {
    const std::size_t count = std::min(report.metric_length, c.records.size());
    for (std::size_t i = 0; i < count; ++i) {
      const auto& r = c.records[i];
      report.gradient_evaluations += r.gradient_evaluations;
      steps += static_cast<std::size_t>(r.steps);
      accepted += r.accepted ? 1 : 0;
      report.divergences += r.divergent ? 1 : 0;
      report.stages = r.stages;
      ++records;
    }
  }
  if (records > 0) {
    report.acceptance_rate = static_cast<double>(accepted) / static_cast<double>(records);
    report.mean_steps = static_cast<double>(steps) / static_cast<double>(records);
    report.per_ess = grad_per_ess(static_cast<double>(report.gradient_evaluations), report.ess);
  }
  return report;
}

}  // namespace atune
