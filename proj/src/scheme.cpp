#include "atune/scheme.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <sstream>

#include <boost/math/tools/roots.hpp>

#include "atune/error.hpp"

namespace atune {

namespace {

constexpr double kSumTolerance = 1e-12;

std::string upper(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
  return out;
}

// Root of f in [lo, hi] given a sign change.
template <class F>
double solve_bracketed(F f, double lo, double hi) {
  std::uintmax_t iterations = 200;
  const auto tol = boost::math::tools::eps_tolerance<double>(52);
  const auto [left, right] = boost::math::tools::toms748_solve(f, lo, hi, tol, iterations);
  return 0.5 * (left + right);
}

}  // namespace

SplittingScheme::SplittingScheme(std::string name, int stages, std::vector<double> kicks,
                                 std::vector<double> drifts)
    : name_(std::move(name)), stages_(stages), kicks_(std::move(kicks)), drifts_(std::move(drifts)) {
  if (stages_ < 1 || stages_ > 3) {
    throw ConfigError("scheme " + name_ + ": stages must be 1, 2 or 3");
  }
  const bool even = stages_ % 2 == 0;
  const std::size_t half = static_cast<std::size_t>((stages_ + 1) / 2);
  const std::size_t want_kicks = even ? half + 1 : half;
  if (kicks_.size() != want_kicks || drifts_.size() != half) {
    throw ConfigError("scheme " + name_ + ": wrong number of coefficients for " +
                      std::to_string(stages_) + " stages");
  }
  for (double c : kicks_) {
    if (!(c > 0.0) || !std::isfinite(c)) {
      throw ConfigError("scheme " + name_ + ": kick coefficients must be positive");
    }
  }
  for (double c : drifts_) {
    if (!(c > 0.0) || !std::isfinite(c)) {
      throw ConfigError("scheme " + name_ + ": drift coefficients must be positive");
    }
  }
  const auto [kick_residual, drift_residual] = constraint_residuals();
  if (std::abs(kick_residual) > kSumTolerance || std::abs(drift_residual) > kSumTolerance) {
    std::ostringstream msg;
    msg << "scheme " << name_ << ": coefficients do not sum to one step (residuals "
        << kick_residual << ", " << drift_residual << ")";
    throw ConfigError(msg.str());
  }

  // Expand the palindrome: kick, drift, kick, ..., kick.
  std::vector<double> full_kicks;
  std::vector<double> full_drifts;
  if (even) {
    full_kicks.assign(kicks_.begin(), kicks_.end());
    full_kicks.insert(full_kicks.end(), kicks_.rbegin() + 1, kicks_.rend());
    full_drifts.assign(drifts_.begin(), drifts_.end());
    full_drifts.insert(full_drifts.end(), drifts_.rbegin(), drifts_.rend());
  } else {
    full_kicks.assign(kicks_.begin(), kicks_.end());
    full_kicks.insert(full_kicks.end(), kicks_.rbegin(), kicks_.rend());
    full_drifts.assign(drifts_.begin(), drifts_.end());
    full_drifts.insert(full_drifts.end(), drifts_.rbegin() + 1, drifts_.rend());
  }
  for (std::size_t i = 0; i < full_drifts.size(); ++i) {
    sequence_.push_back({SubstepKind::kick, full_kicks[i]});
    sequence_.push_back({SubstepKind::drift, full_drifts[i]});
  }
  sequence_.push_back({SubstepKind::kick, full_kicks.back()});
}

std::pair<double, double> SplittingScheme::constraint_residuals() const {
  double kick_sum = 0.0;
  double drift_sum = 0.0;
  const std::size_t half = drifts_.size();
  if (stages_ % 2 == 0) {
    for (std::size_t i = 0; i < half; ++i) {
      kick_sum += 2.0 * kicks_[i];
      drift_sum += 2.0 * drifts_[i];
    }
    kick_sum += kicks_.back();
  } else {
    for (std::size_t i = 0; i < half; ++i) {
      kick_sum += 2.0 * kicks_[i];
    }
    for (std::size_t i = 0; i + 1 < half; ++i) {
      drift_sum += 2.0 * drifts_[i];
    }
    drift_sum += drifts_.back();
  }
  return {kick_sum - 1.0, drift_sum - 1.0};
}

SplittingScheme two_stage_scheme(double b, std::string name) {
  return SplittingScheme(std::move(name), 2, {b, 1.0 - 2.0 * b}, {0.5});
}

SplittingScheme three_stage_scheme(double b, double a, std::string name) {
  return SplittingScheme(std::move(name), 3, {b, 0.5 - b}, {a, 1.0 - 2.0 * a});
}

double three_stage_family_drift(double b) { return (1.0 - 2.0 * b) / (4.0 * (1.0 - 3.0 * b)); }

SplittingScheme build_scheme(std::string_view name) {
  const std::string key = upper(name);
  if (key == "VV") {
    return SplittingScheme("VV", 1, {0.5}, {1.0});
  }
  if (key == "VV2") {
    return two_stage_scheme(0.25, "VV2");
  }
  if (key == "VV3") {
    return three_stage_scheme(1.0 / 6.0, 1.0 / 3.0, "VV3");
  }
  if (key == "BCSS2") {
    return two_stage_scheme(kBcss2Kick, "BCSS2");
  }
  if (key == "ME2") {
    return two_stage_scheme(kMe2Kick, "ME2");
  }
  if (key == "BCSS3") {
    return three_stage_scheme(kBcss3Kick, kBcss3Drift, "BCSS3");
  }
  if (key == "ME3") {
    return three_stage_scheme(kMe3Kick, kMe3Drift, "ME3");
  }
  throw ConfigError("unknown integrator '" + std::string(name) +
                    "' (expected VV, VV2, VV3, BCSS2, BCSS3, ME2, ME3)");
}

// --- Dynamics ---------------------------------------------------------------

void refresh_forces(const TargetModel& model, PhaseState& state) {
  state.potential = model.potential_and_gradient(state.theta, state.grad);
}

StepStatus apply_step(const SplittingScheme& scheme, const TargetModel& model, PhaseState& state,
                      double dt, const Vector& inverse_mass) {
  for (const Substep& sub : scheme.sequence()) {
    if (sub.kind == SubstepKind::kick) {
      state.momentum.noalias() -= (sub.coefficient * dt) * state.grad;
    } else {
      state.theta.array() += (sub.coefficient * dt) * inverse_mass.array() * state.momentum.array();
      refresh_forces(model, state);
    }
  }
  const bool finite = std::isfinite(state.potential) && state.theta.allFinite() &&
                      state.momentum.allFinite() && state.grad.allFinite();
  return finite ? StepStatus::ok : StepStatus::diverged;
}

LegResult integrate(const SplittingScheme& scheme, const TargetModel& model, PhaseState& state,
                    double dt, int steps, const Vector& inverse_mass) {
  LegResult result;
  const auto per_step = static_cast<std::size_t>(scheme.stages());
  for (int i = 0; i < steps; ++i) {
    result.gradient_evaluations += per_step;
    if (apply_step(scheme, model, state, dt, inverse_mass) == StepStatus::diverged) {
      result.status = StepStatus::diverged;
      break;
    }
  }
  return result;
}

// --- Harmonic oscillator analysis -------------------------------------------

HarmonicPropagator HarmonicPropagator::operator*(const HarmonicPropagator& r) const {
  return {a * r.a + b * r.c, a * r.b + b * r.d, c * r.a + d * r.c, c * r.b + d * r.d};
}

HarmonicPropagator HarmonicPropagator::power(int steps) const {
  HarmonicPropagator result;
  HarmonicPropagator base = *this;
  for (int n = steps; n > 0; n >>= 1) {
    if (n & 1) {
      result = base * result;
    }
    base = base * base;
  }
  return result;
}

HarmonicPropagator harmonic_propagator(const SplittingScheme& scheme, double h) {
  if (!(h > 0.0)) {
    throw ConfigError("harmonic propagator: h must be positive");
  }
  HarmonicPropagator m;
  for (const Substep& sub : scheme.sequence()) {
    HarmonicPropagator stage;
    if (sub.kind == SubstepKind::drift) {
      stage.b = sub.coefficient * h;
    } else {
      stage.c = -sub.coefficient * h;
    }
    m = stage * m;
  }
  return m;
}

double expected_energy_error(const HarmonicPropagator& m) {
  return 0.5 * (m.a * m.a + m.b * m.b + m.c * m.c + m.d * m.d - 2.0);
}

double expected_energy_error_vv(int stages, double h) {
  if (stages < 1 || stages > 3) {
    throw ConfigError("expected energy error: stages must be 1, 2 or 3");
  }
  if (!(h > 0.0) || h >= 2.0 * stages) {
    throw StabilityError("expected energy error: h outside (0, " + std::to_string(2 * stages) + ")");
  }
  const double h2 = h * h;
  const double h6 = h2 * h2 * h2;
  switch (stages) {
    case 1:
      return h6 / 32.0;
    case 2:
      return h6 * (h2 - 8.0) * (h2 - 8.0) / 32768.0;
    default:
      // 2^5 3^14
      return h6 * (h2 - 9.0) * (h2 - 9.0) * (h2 - 27.0) * (h2 - 27.0) / 153055008.0;
  }
}

namespace {

struct Rho3Parts {
  double numerator;
  double f1, f2, f3;  // denominator factors normalized to be positive near h = 0
};

Rho3Parts rho3_parts(double h, double b) {
  const double h2 = h * h;
  const double q = b * b * b - 1.25 * b * b + 0.5 * b - 1.0 / 16.0;
  const double inner = -3.0 * b * b * b * b + 8.0 * b * b * b - 4.75 * b * b + b + b * b * h2 * q - 1.0 / 16.0;
  const double d1 = 3.0 * b - b * h2 * (b - 0.25) - 1.0;
  const double d2 = 1.0 - 3.0 * b - b * h2 * (b - 0.5) * (b - 0.5);
  const double d3 = -9.0 * b * b + 6.0 * b - h2 * q - 1.0;
  // Signs at h -> 0 are those of 3b - 1, 1 - 3b and -(3b - 1)^2.
  const double s = b < 1.0 / 3.0 ? 1.0 : -1.0;
  return {h2 * h2 * inner * inner, -s * d1, s * d2, -d3};
}

}  // namespace

double rho3_bound_or_inf(double h, double b) noexcept {
  if (!(h > 0.0) || !(b > 0.0) || b == 1.0 / 3.0) {
    return std::numeric_limits<double>::infinity();
  }
  const Rho3Parts p = rho3_parts(h, b);
  if (!(p.f1 > 0.0) || !(p.f2 > 0.0) || !(p.f3 > 0.0)) {
    return std::numeric_limits<double>::infinity();
  }
  return p.numerator / (2.0 * p.f1 * p.f2 * p.f3);
}

double rho3_bound(double h, double b) {
  const double value = rho3_bound_or_inf(h, b);
  if (std::isinf(value)) {
    std::ostringstream msg;
    msg << "rho3: (h, b) = (" << h << ", " << b << ") is outside the stability domain";
    throw StabilityError(msg.str());
  }
  return value;
}

double find_h_lower() {
  static const double cached = [] {
    constexpr double step = 1e-6;
    auto derivative = [](double h) {
      return (rho3_bound(h + step, kBcss3Kick) - rho3_bound(h - step, kBcss3Kick)) / (2.0 * step);
    };
    // Scan (1.5, 2.9) for the first + to - sign change of the derivative.
    constexpr int cells = 280;
    double lo = 1.5;
    double d_lo = derivative(lo);
    for (int i = 1; i <= cells; ++i) {
      const double hi = 1.5 + 1.4 * i / cells;
      const double d_hi = derivative(hi);
      if (d_lo > 0.0 && d_hi <= 0.0) {
        return solve_bracketed(derivative, lo, hi);
      }
      lo = hi;
      d_lo = d_hi;
    }
    throw NumericError("find_h_lower: no local maximum of rho3 in (1.5, 2.9)");
  }();
  return cached;
}

double rotation_angle(const SplittingScheme& scheme, double h) {
  const double half_trace = harmonic_propagator(scheme, h).half_trace();
  if (!(std::abs(half_trace) < 1.0)) {
    std::ostringstream msg;
    msg << "rotation angle: " << scheme.name() << " is not stable at h = " << h;
    throw StabilityError(msg.str());
  }
  return std::acos(half_trace);
}

double lambda3(double b, double a) { return (1.0 - 6.0 * a * (1.0 - a) * (1.0 - 2.0 * b)) / 12.0; }

double lambda_k(const SplittingScheme& scheme) {
  switch (scheme.stages()) {
    case 2:
      return (6.0 * scheme.b() - 1.0) / 24.0;
    case 3:
      return lambda3(scheme.b(), scheme.a());
    default:
      throw ConfigError("lambda: defined for 2- and 3-stage schemes only");
  }
}

double stability_limit(const SplittingScheme& scheme) {
  // |A + D| / 2 may touch 1 at isolated points where the map is +-identity
  // (VV3 at h = 3); those are skipped because they are not sign changes of
  // |A + D| / 2 - 1.
  auto excess = [&scheme](double h) {
    return std::abs(harmonic_propagator(scheme, h).half_trace()) - 1.0;
  };
  const double end = 2.0 * scheme.stages() + 1.0;
  constexpr double grid = 1e-3;
  double lo = grid;
  for (double hi = 2.0 * grid; hi <= end; hi += grid) {
    if (excess(hi) > 1e-12) {
      for (int i = 0; i < 200 && hi - lo > 1e-14; ++i) {
        const double mid = 0.5 * (lo + hi);
        (excess(mid) > 1e-12 ? hi : lo) = mid;
      }
      return 0.5 * (lo + hi);
    }
    lo = hi;
  }
  return end;
}

std::vector<double> vv_ratio_roots(int stages) {
  if (stages != 2 && stages != 3) {
    throw ConfigError("vv_ratio_roots: stages must be 2 or 3");
  }
  const SplittingScheme vv = build_scheme("VV");
  const SplittingScheme vvk = build_scheme(stages == 2 ? "VV2" : "VV3");
  // The energy ratio is R^2 with R the signed ratio of B_h + C_h, so its
  // roots solve R = 1 or R = -1. Crossings are bracketed directly; tangent
  // roots (R = -1 at sqrt(2) for k = 3) are found as roots of R'.
  auto ratio = [&](double x) {
    const auto mk = harmonic_propagator(vvk, stages * x);
    const auto m1 = harmonic_propagator(vv, x);
    return (mk.b + mk.c) / (m1.b + m1.c);
  };
  auto slope = [&](double x) {
    constexpr double dx = 1e-6;
    return (ratio(x + dx) - ratio(x - dx)) / (2.0 * dx);
  };
  std::vector<double> roots;
  constexpr int cells = 2000;
  auto node = [](int i) { return 1e-3 + (2.0 - 2e-3) * i / cells; };
  for (double target : {1.0, -1.0}) {
    auto f = [&](double x) { return ratio(x) - target; };
    for (int i = 0; i < cells; ++i) {
      const double lo = node(i);
      const double hi = node(i + 1);
      const double f_lo = f(lo);
      const double f_hi = f(hi);
      if (f_lo == 0.0) {
        roots.push_back(lo);
      } else if (f_lo * f_hi < 0.0) {
        roots.push_back(solve_bracketed(f, lo, hi));
      } else if (slope(lo) * slope(hi) < 0.0) {
        const double x = solve_bracketed(slope, lo, hi);
        if (std::abs(f(x)) < 1e-8) {
          roots.push_back(x);
        }
      }
    }
  }
  std::sort(roots.begin(), roots.end());
  return roots;
}

}  // namespace atune
