#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "atune/model.hpp"

namespace atune {

// Literature coefficients of the fixed-parameter integrators.
inline constexpr double kBcss2Kick = 0.211781;              // Blanes, Casas, Sanz-Serna (2014)
inline constexpr double kBcss3Kick = 0.11888010966548;      // Blanes, Casas, Sanz-Serna (2014)
inline constexpr double kBcss3Drift = 0.29619504261126;     // companion of kBcss3Kick
inline constexpr double kMe2Kick = 0.193183327503783574;    // McLachlan (1995)
inline constexpr double kMe3Kick = 0.108991425403425322;    // Predescu et al. (2012)
inline constexpr double kMe3Drift = 0.290485609075128726;   // Predescu et al. (2012)

enum class SubstepKind { kick, drift };

struct Substep {
  SubstepKind kind;
  double coefficient;
};

/// Palindromic k-stage splitting scheme
///
///   even k = 2k':   B(b1) A(a1) ... A(ak') B(bk'+1) A(ak') ... A(a1) B(b1)
///   odd  k = 2k'-1: B(b1) A(a1) ... B(bk') A(ak') B(bk') ... A(a1) B(b1)
///
/// with B a momentum kick and A a position drift. `kicks` holds b1.. and
/// `drifts` holds a1.. (only the first half of the palindrome).
class SplittingScheme {
 public:
  /// Throws ConfigError unless the coefficients are positive, have the right
  /// count for `stages`, and sum to one step (to 1e-12).
  SplittingScheme(std::string name, int stages, std::vector<double> kicks,
                  std::vector<double> drifts);

  const std::string& name() const { return name_; }
  int stages() const { return stages_; }
  const std::vector<double>& kicks() const { return kicks_; }
  const std::vector<double>& drifts() const { return drifts_; }

  /// First kick coefficient b = b1.
  double b() const { return kicks_.front(); }
  /// First drift coefficient a = a1.
  double a() const { return drifts_.front(); }

  /// Full substep sequence, in the order the substeps are applied.
  const std::vector<Substep>& sequence() const { return sequence_; }

  /// Residuals of the two normalization identities (kick sum - 1, drift sum - 1).
  std::pair<double, double> constraint_residuals() const;

 private:
  std::string name_;
  int stages_;
  std::vector<double> kicks_;
  std::vector<double> drifts_;
  std::vector<Substep> sequence_;
};

/// 2-stage member B(b) A(1/2) B(1-2b) A(1/2) B(b).
SplittingScheme two_stage_scheme(double b, std::string name = "2-stage");
/// 3-stage member B(b) A(a) B(1/2-b) A(1-2a) B(1/2-b) A(a) B(b).
SplittingScheme three_stage_scheme(double b, double a, std::string name = "3-stage");

/// Drift coefficient tied to b in the one-parameter 3-stage family on which the
/// energy-error bound rho3(h, b) is defined: a = (1 - 2b) / (4 (1 - 3b)).
double three_stage_family_drift(double b);

/// Named schemes: VV, VV2, VV3, BCSS2, BCSS3, ME2, ME3 (case-insensitive).
/// Adaptive schemes are built from a SaiaMap (see saia_map.hpp).
SplittingScheme build_scheme(std::string_view name);

// --- Dynamics ---------------------------------------------------------------

/// Position, momentum and the cached potential and gradient at the position.
struct PhaseState {
  Vector theta;
  Vector momentum;
  Vector grad;
  double potential = 0.0;
};

/// Loads potential and gradient for `state.theta`.
void refresh_forces(const TargetModel& model, PhaseState& state);

enum class StepStatus { ok, diverged };

/// One step of length `dt` with diagonal inverse mass. On entry `state.grad`
/// and `state.potential` must match `state.theta`; they match the new position
/// on exit. Exactly `scheme.stages()` gradient evaluations are made since the
/// closing kick of one step shares its gradient with the opening kick of the next.
/// A non-finite state after the step is reported as `diverged`.
StepStatus apply_step(const SplittingScheme& scheme, const TargetModel& model, PhaseState& state,
                      double dt, const Vector& inverse_mass);

struct LegResult {
  StepStatus status = StepStatus::ok;
  std::size_t gradient_evaluations = 0;
};

/// `steps` consecutive applications of apply_step; stops early on divergence.
LegResult integrate(const SplittingScheme& scheme, const TargetModel& model, PhaseState& state,
                    double dt, int steps, const Vector& inverse_mass);

// --- Harmonic oscillator analysis -------------------------------------------

/// One-step map of the scheme on H = (p^2 + q^2) / 2:
///   (q', p') = [[A, B], [C, D]] (q, p)
struct HarmonicPropagator {
  double a = 1.0;
  double b = 0.0;
  double c = 0.0;
  double d = 1.0;

  double determinant() const { return a * d - b * c; }
  double half_trace() const { return 0.5 * (a + d); }
  HarmonicPropagator operator*(const HarmonicPropagator& rhs) const;
  /// `steps`-fold composition.
  HarmonicPropagator power(int steps) const;
};

HarmonicPropagator harmonic_propagator(const SplittingScheme& scheme, double h);

/// Expected energy error of the map started from the stationary N(0, I) state:
/// (A^2 + B^2 + C^2 + D^2 - 2) / 2, which is (B + C)^2 / 2 for a one-step
/// palindromic map.
double expected_energy_error(const HarmonicPropagator& propagator);

/// Closed forms of the 1-D expected energy error of k-stage Velocity Verlet (k = 1, 2, 3).
/// Throws StabilityError for h outside (0, 2k).
double expected_energy_error_vv(int stages, double h);

/// Upper bound of the expected energy error of the 3-stage family with
/// drift three_stage_family_drift(b). Throws StabilityError outside the
/// region, connected to h = 0, where every denominator factor keeps its sign.
double rho3_bound(double h, double b);
/// Same as rho3_bound but returns +infinity instead of throwing.
double rho3_bound_or_inf(double h, double b) noexcept;

/// Local maximum of rho3(h, b_BCSS3) in (1.5, 2.9): the lower end of the
/// step-size randomization interval (about 2.0772). Computed once and cached.
double find_h_lower();

/// Center of the longest stability interval of a 3-stage scheme.
inline constexpr double kColsi3 = 3.0;

/// eta_h = arccos((A + D) / 2); throws StabilityError if |A + D| >= 2.
double rotation_angle(const SplittingScheme& scheme, double h);

/// lambda_2(b) = (6b - 1) / 24 and lambda_3(b, a) = (1 - 6a(1 - a)(1 - 2b)) / 12.
double lambda_k(const SplittingScheme& scheme);
double lambda3(double b, double a);

/// Supremum of h such that |A + D| < 2 on (0, h), located by grid scan and bisection.
/// Isolated points where the map is +-identity do not end the interval.
double stability_limit(const SplittingScheme& scheme);

/// Nonnegative roots h' in (0, 2) of E_VVk(k h') / E_VV(h') = 1, sorted (k = 2, 3).
std::vector<double> vv_ratio_roots(int stages);

}  // namespace atune
