#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "atune/sampler.hpp"

namespace atune {

enum class EssMethod { geyer, ar_spectral };

/// Effective sample size of one series.
///   geyer:       N / (1 + 2 sum rho_t), initial positive sequence truncation with
///                monotone pair sums.
///   ar_spectral: N var(x) / S(0), S(0) from a Yule-Walker AR fit with AIC order.
/// Throws ConfigError for N < 10 and NumericError for a constant series.
double ess_univariate(const Eigen::Ref<const Eigen::VectorXd>& series,
                      EssMethod method = EssMethod::geyer);

/// N (det Lambda / det Sigma_bm)^(1/D) with Lambda the sample covariance and
/// Sigma_bm the batch-means covariance, batch size floor(sqrt(N)).
/// Throws NumericError when N <= D or a covariance is singular.
double multi_ess(const Eigen::Ref<const Eigen::MatrixXd>& samples);
/// Multi-chain form: the first `length` rows of each chain (0 = all) give
/// floor(sqrt(length)) sized batches centered on their own chain mean; Lambda is
/// the within-chain covariance. Returns the total over chains, C N (...)^(1/D).
double multi_ess(const std::vector<Eigen::MatrixXd>& chains, std::size_t length = 0);

struct PsrfResult {
  Eigen::VectorXd per_dimension;
  double max = 0.0;
  double mean = 0.0;
};

/// Brooks-Gelman corrected PSRF per dimension over the first `length` rows of
/// every chain (0 = all rows). Needs at least 2 chains of equal length >= 10.
PsrfResult psrf(const std::vector<Eigen::MatrixXd>& chains, std::size_t length = 0);

struct ConvergenceRule {
  double threshold = 1.01;
  /// Use the average instead of the maximum PSRF over dimensions.
  bool use_average = false;
};

struct PsrfCheckpoint {
  std::size_t length = 0;
  double max = 0.0;
  double mean = 0.0;
};

/// Prefix lengths 10, 12, 14, ... (ratio 1.2, rounded up, always ending at N).
std::vector<std::size_t> convergence_checkpoints(std::size_t length);

struct ConvergenceScan {
  std::vector<PsrfCheckpoint> trajectory;
  /// First checkpoint meeting the rule; empty when never reached.
  std::optional<std::size_t> converged_at;
};

/// Scans the checkpoints in order and stops at the first one meeting the rule.
ConvergenceScan find_n_conv(const std::vector<Eigen::MatrixXd>& chains,
                            const ConvergenceRule& rule = {});

struct EssSummary {
  double min = 0.0;
  double mean = 0.0;
  double multi = 0.0;
};

struct EssOptions {
  EssMethod method = EssMethod::geyer;
  /// Treat all chains as one concatenated series instead of summing per-chain ESS.
  bool pool = false;
};

/// ESS flavors over rows [0, length) of every chain.
EssSummary ess_summary(const std::vector<Eigen::MatrixXd>& chains, std::size_t length,
                       const EssOptions& options = {});

struct GradPerEss {
  double grad = 0.0;
  double per_min = 0.0;
  double per_mean = 0.0;
  double per_multi = 0.0;
};

/// grad = (n_conv + window) * mean_steps * stages * chains, divided by each ESS flavor.
GradPerEss grad_per_ess(std::size_t n_conv, std::size_t window, double mean_steps, int stages,
                        std::size_t chains, const EssSummary& ess);
/// Same ratios with a measured gradient count.
GradPerEss grad_per_ess(double grad, const EssSummary& ess);

/// Relative efficiency factor M2 / M1: how much sampler 1 outperforms sampler 2.
double ref_metric(double m1, double m2);

struct DiagnosticsOptions {
  ConvergenceRule rule;
  /// Iterations after convergence entering the metrics; 0 picks 1000, or 2000 when D >= 2000.
  std::size_t window = 0;
  EssOptions ess;
};

struct DiagnosticsReport {
  std::size_t chains = 0;
  std::size_t iterations = 0;
  std::size_t dimension = 0;
  ConvergenceScan convergence;
  PsrfResult final_psrf;
  /// Rows entering the ESS and gradient counts: n_conv + window, capped at N.
  std::size_t metric_length = 0;
  std::size_t window = 0;
  bool converged = false;
  bool window_truncated = false;
  EssSummary ess;
  /// Gradient evaluations recorded over the metric rows, summed over chains.
  std::size_t gradient_evaluations = 0;
  GradPerEss per_ess;
  double acceptance_rate = 0.0;
  double mean_steps = 0.0;
  int stages = 0;
  std::size_t divergences = 0;
};

/// Full report from sampler output. When the rule is never met, the metrics
/// cover the whole chains and `converged` is false.
DiagnosticsReport diagnose(const std::vector<ChainResult>& chains, const DiagnosticsOptions& options = {});
/// Same for bare sample matrices (no records: gradient fields stay zero).
DiagnosticsReport diagnose(const std::vector<Eigen::MatrixXd>& chains,
                           const DiagnosticsOptions& options = {});

}  // namespace atune
