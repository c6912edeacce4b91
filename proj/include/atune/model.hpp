#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "atune/dataset.hpp"

namespace atune {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Target density exp(-U(theta)) on R^D.
///
/// Implementations are immutable after construction and may be shared by any
/// number of concurrent chains. The virtual members do no argument checking;
/// use the free functions below for checked evaluation.
class TargetModel {
 public:
  virtual ~TargetModel() = default;

  virtual std::size_t dimension() const = 0;
  virtual std::string name() const = 0;

  virtual double potential(const Vector& theta) const = 0;

  /// Defaults to central finite differences of potential().
  virtual Vector gradient(const Vector& theta) const;

  /// U and its gradient in one pass; models override when they can share work.
  virtual double potential_and_gradient(const Vector& theta, Vector& grad) const {
    grad = gradient(theta);
    return potential(theta);
  }

  virtual bool has_hessian() const { return false; }
  /// Throws UnsupportedError unless has_hessian().
  virtual Matrix hessian(const Vector& theta) const;
};

/// Checked U(theta): length must match and the result must be finite.
double potential_energy(const TargetModel& model, const Vector& theta);
/// Checked gradient; a non-finite component is reported with its index.
Vector gradient(const TargetModel& model, const Vector& theta);
/// Checked Hessian; throws UnsupportedError for potential-only models.
Matrix hessian(const TargetModel& model, const Vector& theta);

/// Central differences with step cbrt(eps) * max(1, |theta_i|).
Vector finite_difference_gradient(const std::function<double(const Vector&)>& potential,
                                  const Vector& theta);
Vector finite_difference_gradient(const TargetModel& model, const Vector& theta);
/// Central differences of the analytic gradient, symmetrized.
Matrix finite_difference_hessian(const TargetModel& model, const Vector& theta);

// ---------------------------------------------------------------------------

struct GaussianSpec {
  Matrix precision;  // symmetric positive definite

  /// Throws ConfigError unless square, symmetric (1e-10) and Cholesky-factorizable.
  void validate() const;
};

/// Zero-mean Gaussian: U = 1/2 theta^T P theta.
class GaussianModel final : public TargetModel {
 public:
  explicit GaussianModel(GaussianSpec spec, std::string name = "gauss");

  std::size_t dimension() const override { return static_cast<std::size_t>(precision_.rows()); }
  std::string name() const override { return name_; }
  double potential(const Vector& theta) const override;
  Vector gradient(const Vector& theta) const override;
  double potential_and_gradient(const Vector& theta, Vector& grad) const override;
  bool has_hessian() const override { return true; }
  Matrix hessian(const Vector& theta) const override;

  const Matrix& precision() const { return precision_; }

 private:
  Matrix precision_;
  std::string name_;
};

/// Precision matrix drawn from Wishart(I_D, D) by the Bartlett decomposition.
GaussianSpec gen_wishart_precision(std::size_t dimension, std::uint64_t seed);

// ---------------------------------------------------------------------------

/// Logistic regression with an isotropic N(0, prior_sd^2 I) prior.
/// An infinite prior_sd drops the prior term.
class BlrModel final : public TargetModel {
 public:
  BlrModel(const BlrDataset& data, double prior_sd, std::string name = "blr");

  std::size_t dimension() const override { return static_cast<std::size_t>(design_.cols()); }
  std::string name() const override { return name_; }
  double potential(const Vector& theta) const override;
  Vector gradient(const Vector& theta) const override;
  double potential_and_gradient(const Vector& theta, Vector& grad) const override;
  bool has_hessian() const override { return true; }
  Matrix hessian(const Vector& theta) const override;

  const Matrix& design() const { return design_; }
  double prior_precision() const { return prior_precision_; }

 private:
  Matrix design_;
  Vector labels_;
  double prior_precision_;
  std::string name_;
};

// ---------------------------------------------------------------------------

struct BananaSpec {
  double prior_variance = 1.0;
  std::vector<double> observations;
  double observation_variance = 2.0;

  void validate() const;
};

/// Observations y_k ~ N(1, 2) as in the standard banana benchmark.
BananaSpec make_banana_spec(std::size_t observations, std::uint64_t seed);

/// Two-parameter banana-shaped posterior:
///   U = (t1^2 + t2^2) / (2 s_p) + sum_k (y_k - t1 - t2^2)^2 / (2 s_y)
class BananaModel final : public TargetModel {
 public:
  explicit BananaModel(BananaSpec spec);

  std::size_t dimension() const override { return 2; }
  std::string name() const override { return "banana"; }
  double potential(const Vector& theta) const override;
  Vector gradient(const Vector& theta) const override;
  bool has_hessian() const override { return true; }
  Matrix hessian(const Vector& theta) const override;

 private:
  BananaSpec spec_;
  double sum_y_ = 0.0;
};

// ---------------------------------------------------------------------------

/// Potential-only model; gradients come from finite differences.
class FunctionModel final : public TargetModel {
 public:
  FunctionModel(std::size_t dimension, std::function<double(const Vector&)> potential,
                std::string name = "function");

  std::size_t dimension() const override { return dimension_; }
  std::string name() const override { return name_; }
  double potential(const Vector& theta) const override { return potential_(theta); }

 private:
  std::size_t dimension_;
  std::function<double(const Vector&)> potential_;
  std::string name_;
};

}  // namespace atune
