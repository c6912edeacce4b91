#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

#include "atune/scheme.hpp"

namespace atune {

/// One node of the adaptive-integrator map.
struct SaiaNode {
  double h = 0.0;
  double b = 0.0;
  double a = 0.0;
  /// Optimization failed at this node; b and a are interpolated from neighbors.
  bool flagged = false;
};

/// max over h' in (0, h] of the energy-error bound of the family member with
/// kick coefficient b; +infinity when the member is unstable somewhere in (0, h].
/// stages = 3 uses rho3_bound; stages = 2 uses the exact bound of the
/// 2-stage propagator, (B + C)^2 / (2 (1 - A^2)).
double worst_case_bound(int stages, double b, double h);

/// Kick coefficient minimizing worst_case_bound at h; the drift follows from
/// the family (three_stage_family_drift for 3 stages, 1/2 for 2 stages).
/// Returns a flagged node when no stable member exists.
SaiaNode solve_saia_node(int stages, double h);

/// Pretabulated map h -> (b, a) of the adaptive k-stage integrator over (0, 2k].
/// Immutable once built; safe to share across chains.
class SaiaMap {
 public:
  /// Nodes at h_i = 2k i / resolution, i = 1..resolution. Throws ConfigError
  /// for resolution < 100.
  static SaiaMap build(std::size_t resolution = 600, int stages = 3);

  /// Text cache: '#' header lines carrying stages and resolution, then one
  /// "h b a flagged" row per node.
  static SaiaMap load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;
  /// Loads the cache if it exists with matching resolution and stages, otherwise
  /// builds and writes it (a failed write is ignored).
  static SaiaMap load_or_build(const std::filesystem::path& path, std::size_t resolution = 600,
                               int stages = 3);
  /// Process-wide default 3-stage map, built on first use.
  static const SaiaMap& default_map();

  int stages() const { return stages_; }
  std::size_t resolution() const { return nodes_.size(); }
  const std::vector<SaiaNode>& nodes() const { return nodes_; }

  /// Piecewise-linear interpolation of b; clamped to the end nodes outside the grid.
  double kick_at(double h) const;
  /// Drift tied to kick_at(h) by the family relation.
  double drift_at(double h) const;
  /// Integrator for dimensionless step h. Throws StabilityError for h outside (0, 2k).
  SplittingScheme scheme_at(double h) const;

 private:
  SaiaMap(int stages, std::vector<SaiaNode> nodes);
  int stages_;
  std::vector<SaiaNode> nodes_;
};

}  // namespace atune
