#include "atune/model.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "atune/error.hpp"
#include "atune/rng.hpp"

namespace atune {

namespace {

void check_length(const TargetModel& model, const Vector& theta) {
  if (static_cast<std::size_t>(theta.size()) != model.dimension()) {
    std::ostringstream msg;
    msg << model.name() << ": expected a parameter vector of length " << model.dimension()
        << ", got " << theta.size();
    throw ConfigError(msg.str());
  }
}

double fd_step(double x) {
  static const double root = std::cbrt(std::numeric_limits<double>::epsilon());
  return root * std::max(1.0, std::abs(x));
}

// log(1 + exp(z)) without overflow.
double log1pexp(double z) { return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

double logistic(double z) {
  if (z >= 0.0) {
    return 1.0 / (1.0 + std::exp(-z));
  }
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace

Vector TargetModel::gradient(const Vector& theta) const {
  return finite_difference_gradient([this](const Vector& x) { return potential(x); }, theta);
}

Matrix TargetModel::hessian(const Vector&) const {
  throw UnsupportedError(name() + ": model does not provide a Hessian");
}

double potential_energy(const TargetModel& model, const Vector& theta) {
  check_length(model, theta);
  const double u = model.potential(theta);
  if (!std::isfinite(u)) {
    throw NumericError(model.name() + ": potential energy is not finite (numeric overflow)");
  }
  return u;
}

Vector gradient(const TargetModel& model, const Vector& theta) {
  check_length(model, theta);
  Vector g = model.gradient(theta);
  for (Eigen::Index i = 0; i < g.size(); ++i) {
    if (!std::isfinite(g[i])) {
      std::ostringstream msg;
      msg << model.name() << ": gradient component " << i << " is not finite";
      throw NumericError(msg.str());
    }
  }
  return g;
}

Matrix hessian(const TargetModel& model, const Vector& theta) {
  check_length(model, theta);
  if (!model.has_hessian()) {
    throw UnsupportedError(model.name() + ": model does not provide a Hessian");
  }
  Matrix h = model.hessian(theta);
  if (!h.allFinite()) {
    throw NumericError(model.name() + ": Hessian has non-finite entries");
  }
  return h;
}

Vector finite_difference_gradient(const std::function<double(const Vector&)>& potential,
                                  const Vector& theta) {
  Vector g(theta.size());
  Vector x = theta;
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    const double step = fd_step(theta[i]);
    x[i] = theta[i] + step;
    const double up = potential(x);
    x[i] = theta[i] - step;
    const double down = potential(x);
    x[i] = theta[i];
    g[i] = (up - down) / (2.0 * step);
  }
  return g;
}

Vector finite_difference_gradient(const TargetModel& model, const Vector& theta) {
  return finite_difference_gradient([&model](const Vector& x) { return model.potential(x); }, theta);
}

Matrix finite_difference_hessian(const TargetModel& model, const Vector& theta) {
  const Eigen::Index d = theta.size();
  Matrix h(d, d);
  Vector x = theta;
  for (Eigen::Index j = 0; j < d; ++j) {
    const double step = fd_step(theta[j]);
    x[j] = theta[j] + step;
    const Vector up = model.gradient(x);
    x[j] = theta[j] - step;
    const Vector down = model.gradient(x);
    x[j] = theta[j];
    h.col(j) = (up - down) / (2.0 * step);
  }
  return 0.5 * (h + h.transpose());
}

// --- Gaussian ---------------------------------------------------------------

void GaussianSpec::validate() const {
  if (precision.rows() == 0 || precision.rows() != precision.cols()) {
    throw ConfigError("gaussian: precision must be a non-empty square matrix");
  }
  if ((precision - precision.transpose()).cwiseAbs().maxCoeff() > 1e-10) {
    throw ConfigError("gaussian: precision is not symmetric");
  }
  Eigen::LLT<Matrix> llt(precision);
  if (llt.info() != Eigen::Success) {
    throw ConfigError("gaussian: precision is not positive definite");
  }
}

GaussianModel::GaussianModel(GaussianSpec spec, std::string name)
    : precision_(std::move(spec.precision)), name_(std::move(name)) {
  GaussianSpec{precision_}.validate();
}

double GaussianModel::potential(const Vector& theta) const {
  return 0.5 * theta.dot(precision_ * theta);
}

Vector GaussianModel::gradient(const Vector& theta) const { return precision_ * theta; }

double GaussianModel::potential_and_gradient(const Vector& theta, Vector& grad) const {
  grad.noalias() = precision_ * theta;
  return 0.5 * theta.dot(grad);
}

Matrix GaussianModel::hessian(const Vector&) const { return precision_; }

GaussianSpec gen_wishart_precision(std::size_t dimension, std::uint64_t seed) {
  if (dimension == 0) {
    throw ConfigError("wishart: dimension must be at least 1");
  }
  const auto d = static_cast<Eigen::Index>(dimension);
  Rng rng(seed, 0, StreamPurpose::data);
  // Bartlett: W = A A^T, A lower triangular, A_ii^2 ~ chi2(n - i), A_ij ~ N(0, 1).
  Matrix a = Matrix::Zero(d, d);
  for (Eigen::Index i = 0; i < d; ++i) {
    a(i, i) = std::sqrt(rng.chi_squared(static_cast<double>(d - i)));
    for (Eigen::Index j = 0; j < i; ++j) {
      a(i, j) = rng.normal();
    }
  }
  Matrix w = a * a.transpose();
  w = 0.5 * (w + w.transpose());
  return GaussianSpec{std::move(w)};
}

// --- Bayesian logistic regression -------------------------------------------

BlrModel::BlrModel(const BlrDataset& data, double prior_sd, std::string name)
    : design_(data.design()), labels_(data.labels), name_(std::move(name)) {
  data.validate();
  if (!(prior_sd > 0.0)) {
    throw ConfigError("blr: prior standard deviation must be positive");
  }
  prior_precision_ = std::isinf(prior_sd) ? 0.0 : 1.0 / (prior_sd * prior_sd);
}

double BlrModel::potential(const Vector& theta) const {
  const Vector z = design_ * theta;
  double u = 0.0;
  for (Eigen::Index k = 0; k < z.size(); ++k) {
    u += log1pexp(z[k]) - labels_[k] * z[k];
  }
  return u + 0.5 * prior_precision_ * theta.squaredNorm();
}

Vector BlrModel::gradient(const Vector& theta) const {
  Vector g;
  potential_and_gradient(theta, g);
  return g;
}

double BlrModel::potential_and_gradient(const Vector& theta, Vector& grad) const {
  const Vector z = design_ * theta;
  Vector residual(z.size());
  double u = 0.0;
  for (Eigen::Index k = 0; k < z.size(); ++k) {
    u += log1pexp(z[k]) - labels_[k] * z[k];
    residual[k] = logistic(z[k]) - labels_[k];
  }
  grad.noalias() = design_.transpose() * residual;
  grad += prior_precision_ * theta;
  return u + 0.5 * prior_precision_ * theta.squaredNorm();
}

Matrix BlrModel::hessian(const Vector& theta) const {
  const Vector z = design_ * theta;
  Vector w(z.size());
  for (Eigen::Index k = 0; k < z.size(); ++k) {
    const double s = logistic(z[k]);
    w[k] = s * (1.0 - s);
  }
  Matrix h = design_.transpose() * w.asDiagonal() * design_;
  h.diagonal().array() += prior_precision_;
  return 0.5 * (h + h.transpose());
}

// --- Banana -----------------------------------------------------------------

void BananaSpec::validate() const {
  if (!(prior_variance > 0.0) || !(observation_variance > 0.0)) {
    throw ConfigError("banana: variances must be strictly positive");
  }
}

BananaSpec make_banana_spec(std::size_t observations, std::uint64_t seed) {
  Rng rng(seed, 0, StreamPurpose::data);
  BananaSpec spec;
  spec.observations.reserve(observations);
  for (std::size_t k = 0; k < observations; ++k) {
    spec.observations.push_back(1.0 + std::sqrt(2.0) * rng.normal());
  }
  return spec;
}

BananaModel::BananaModel(BananaSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  for (double y : spec_.observations) {
    sum_y_ += y;
  }
}

double BananaModel::potential(const Vector& theta) const {
  const double t1 = theta[0];
  const double t2 = theta[1];
  const double shift = t1 + t2 * t2;
  double sse = 0.0;
  for (double y : spec_.observations) {
    sse += (y - shift) * (y - shift);
  }
  return (t1 * t1 + t2 * t2) / (2.0 * spec_.prior_variance) +
         sse / (2.0 * spec_.observation_variance);
}

Vector BananaModel::gradient(const Vector& theta) const {
  const double t1 = theta[0];
  const double t2 = theta[1];
  const double k = static_cast<double>(spec_.observations.size());
  // sum_k r_k with r_k = y_k - t1 - t2^2
  const double sum_r = sum_y_ - k * (t1 + t2 * t2);
  Vector g(2);
  g[0] = t1 / spec_.prior_variance - sum_r / spec_.observation_variance;
  g[1] = t2 / spec_.prior_variance - 2.0 * t2 * sum_r / spec_.observation_variance;
  return g;
}

Matrix BananaModel::hessian(const Vector& theta) const {
  const double t1 = theta[0];
  const double t2 = theta[1];
  const double k = static_cast<double>(spec_.observations.size());
  const double sum_r = sum_y_ - k * (t1 + t2 * t2);
  const double inv_p = 1.0 / spec_.prior_variance;
  const double inv_y = 1.0 / spec_.observation_variance;
  Matrix h(2, 2);
  h(0, 0) = inv_p + k * inv_y;
  h(0, 1) = h(1, 0) = 2.0 * t2 * k * inv_y;
  h(1, 1) = inv_p + (4.0 * t2 * t2 * k - 2.0 * sum_r) * inv_y;
  return h;
}

// --- Potential-only ---------------------------------------------------------

FunctionModel::FunctionModel(std::size_t dimension, std::function<double(const Vector&)> potential,
                             std::string name)
    : dimension_(dimension), potential_(std::move(potential)), name_(std::move(name)) {
  if (dimension_ == 0) {
    throw ConfigError("function model: dimension must be at least 1");
  }
  if (!potential_) {
    throw ConfigError("function model: potential is empty");
  }
}

}  // namespace atune
