#include "atune/saia_map.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>

#include <boost/math/tools/minima.hpp>

#include "atune/error.hpp"

namespace atune {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
// Stand-in for +infinity inside the 1-D minimizers.
constexpr double kHuge = 1e300;

// (B + C)^2 / (2 (1 - A^2)) of B(b) A(1/2) B(1-2b) A(1/2) B(b).
double rho2_bound(double h, double b) {
  double q = 1.0;
  double p = 0.0;
  double q2 = 0.0;
  double p2 = 1.0;
  const double kicks[3] = {b, 1.0 - 2.0 * b, b};
  for (int i = 0; i < 3; ++i) {
    p -= kicks[i] * h * q;
    p2 -= kicks[i] * h * q2;
    if (i < 2) {
      q += 0.5 * h * p;
      q2 += 0.5 * h * p2;
    }
  }
  // Columns (q, p) and (q2, p2) are the images of (1, 0) and (0, 1).
  const double a = q;
  const double bb = q2;
  const double c = p;
  const double denom = 1.0 - a * a;
  if (!(denom > 0.0)) {
    return kInf;
  }
  return (bb + c) * (bb + c) / (2.0 * denom);
}

double bound(int stages, double h, double b) {
  return stages == 3 ? rho3_bound_or_inf(h, b) : rho2_bound(h, b);
}

double family_drift(int stages, double b) {
  return stages == 3 ? three_stage_family_drift(b) : 0.5;
}

double kick_upper(int stages) {
  // Larger kicks make a drift coefficient nonpositive.
  return stages == 3 ? 0.25 : 0.5;
}

void check_stages(int stages) {
  if (stages != 2 && stages != 3) {
    throw ConfigError("adaptive integrator map: stages must be 2 or 3");
  }
}

}  // namespace

double worst_case_bound(int stages, double b, double h) {
  constexpr int n = 200;
  std::vector<double> values(n + 1, 0.0);
  for (int i = 1; i <= n; ++i) {
    values[i] = bound(stages, h * i / n, b);
    if (std::isinf(values[i]) || std::isnan(values[i])) {
      return kInf;
    }
  }
  double best = values[n];
  const double peak = *std::max_element(values.begin(), values.end());
  for (int i = 1; i < n; ++i) {
    if (values[i] >= values[i - 1] && values[i] >= values[i + 1] && values[i] >= 0.5 * peak) {
      const auto [x, neg] = boost::math::tools::brent_find_minima(
          [&](double x) {
            const double v = bound(stages, x, b);
            return std::isfinite(v) ? -v : kHuge;
          },
          h * (i - 1) / n, h * (i + 1) / n, 50);
      best = std::max({best, values[i], -neg});
    }
  }
  return best;
}

SaiaNode solve_saia_node(int stages, double h) {
  check_stages(stages);
  SaiaNode node;
  node.h = h;
  const double upper = kick_upper(stages);
  constexpr int coarse = 200;
  std::vector<double> grid(coarse);
  std::vector<double> values(coarse);
  for (int i = 0; i < coarse; ++i) {
    grid[i] = upper * (i + 1) / (coarse + 1);
    values[i] = worst_case_bound(stages, grid[i], h);
  }
  const auto best = static_cast<int>(std::min_element(values.begin(), values.end()) - values.begin());
  if (std::isinf(values[best])) {
    node.flagged = true;
    return node;
  }
  const double lo = best > 0 ? grid[best - 1] : 0.5 * grid[0];
  const double hi = best + 1 < coarse ? grid[best + 1] : 0.5 * (grid.back() + upper);
  std::uintmax_t iterations = 500;
  const auto [b, value] = boost::math::tools::brent_find_minima(
      [&](double x) {
        const double v = worst_case_bound(stages, x, h);
        return std::isfinite(v) ? v : kHuge;
      },
      lo, hi, 50, iterations);
  if (!(value < kHuge)) {
    node.flagged = true;
    return node;
  }
  node.b = value <= values[best] ? b : grid[best];
  node.a = family_drift(stages, node.b);
  return node;
}

SaiaMap::SaiaMap(int stages, std::vector<SaiaNode> nodes) : stages_(stages), nodes_(std::move(nodes)) {}

SaiaMap SaiaMap::build(std::size_t resolution, int stages) {
  check_stages(stages);
  if (resolution < 100) {
    throw ConfigError("adaptive integrator map: resolution must be at least 100 nodes");
  }
  const double span = 2.0 * stages;
  std::vector<SaiaNode> nodes(resolution);
  for (std::size_t i = 0; i < resolution; ++i) {
    nodes[i] = solve_saia_node(stages, span * static_cast<double>(i + 1) / static_cast<double>(resolution));
  }
  // Fill flagged nodes from the nearest good neighbors.
  const auto n = nodes.size();
  for (std::size_t i = 0; i < n; ++i) {
    if (!nodes[i].flagged) {
      continue;
    }
    std::size_t left = i;
    while (left > 0 && nodes[left].flagged) {
      --left;
    }
    std::size_t right = i;
    while (right + 1 < n && nodes[right].flagged) {
      ++right;
    }
    const bool has_left = !nodes[left].flagged;
    const bool has_right = !nodes[right].flagged;
    if (!has_left && !has_right) {
      throw NumericError("adaptive integrator map: no node could be optimized");
    }
    double b = 0.0;
    if (has_left && has_right) {
      const double t = (nodes[i].h - nodes[left].h) / (nodes[right].h - nodes[left].h);
      b = (1.0 - t) * nodes[left].b + t * nodes[right].b;
    } else {
      b = has_left ? nodes[left].b : nodes[right].b;
    }
    nodes[i].b = b;
    nodes[i].a = family_drift(stages, b);
  }
  return SaiaMap(stages, std::move(nodes));
}

void SaiaMap::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) {
    throw IoError("adaptive integrator map: cannot write " + path.string());
  }
  out << "# adaptive " << stages_ << "-stage integrator map\n";
  out << "# stages " << stages_ << "\n";
  out << "# resolution " << nodes_.size() << "\n";
  out << "# columns: h b a flagged\n";
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (const auto& node : nodes_) {
    out << node.h << ' ' << node.b << ' ' << node.a << ' ' << (node.flagged ? 1 : 0) << '\n';
  }
  if (!out) {
    throw IoError("adaptive integrator map: write failed for " + path.string());
  }
}

SaiaMap SaiaMap::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw IoError("adaptive integrator map: cannot open " + path.string());
  }
  int stages = 0;
  std::size_t resolution = 0;
  std::vector<SaiaNode> nodes;
  std::string line;
  for (std::size_t number = 1; std::getline(in, line); ++number) {
    if (line.empty()) {
      continue;
    }
    std::istringstream fields(line);
    if (line.front() == '#') {
      std::string hash;
      std::string key;
      fields >> hash >> key;
      if (key == "stages") {
        fields >> stages;
      } else if (key == "resolution") {
        fields >> resolution;
      }
      continue;
    }
    SaiaNode node;
    int flagged = 0;
    if (!(fields >> node.h >> node.b >> node.a >> flagged)) {
      throw ParseError("adaptive integrator map: malformed row", number);
    }
    node.flagged = flagged != 0;
    nodes.push_back(node);
  }
  if ((stages != 2 && stages != 3) || resolution != nodes.size() || nodes.empty()) {
    throw ParseError("adaptive integrator map: header does not match the table in " + path.string(), 1);
  }
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const auto& node = nodes[i];
    if (!(node.b > 0.0 && node.b < 0.5) || (i > 0 && !(node.h > nodes[i - 1].h))) {
      throw ParseError("adaptive integrator map: invalid node", i + 1);
    }
  }
  return SaiaMap(stages, std::move(nodes));
}

SaiaMap SaiaMap::load_or_build(const std::filesystem::path& path, std::size_t resolution, int stages) {
  std::error_code ec;
  if (std::filesystem::exists(path, ec)) {
    try {
      SaiaMap map = load(path);
      if (map.resolution() == resolution && map.stages() == stages) {
        return map;
      }
    } catch (const IoError&) {
      // Stale or damaged cache; rebuild below.
    }
  }
  SaiaMap map = build(resolution, stages);
  try {
    if (path.has_parent_path()) {
      std::filesystem::create_directories(path.parent_path(), ec);
    }
    map.save(path);
  } catch (const IoError&) {
  }
  return map;
}

const SaiaMap& SaiaMap::default_map() {
  static const SaiaMap map = build(600, 3);
  return map;
}

double SaiaMap::kick_at(double h) const {
  if (h <= nodes_.front().h) {
    return nodes_.front().b;
  }
  if (h >= nodes_.back().h) {
    return nodes_.back().b;
  }
  const auto upper = std::upper_bound(nodes_.begin(), nodes_.end(), h,
                                      [](double x, const SaiaNode& node) { return x < node.h; });
  const auto& right = *upper;
  const auto& left = *(upper - 1);
  const double t = (h - left.h) / (right.h - left.h);
  return (1.0 - t) * left.b + t * right.b;
}

double SaiaMap::drift_at(double h) const { return family_drift(stages_, kick_at(h)); }

SplittingScheme SaiaMap::scheme_at(double h) const {
  if (!(h > 0.0) || h >= 2.0 * stages_) {
    std::ostringstream msg;
    msg << "adaptive integrator: h = " << h << " outside (0, " << 2 * stages_ << ")";
    throw StabilityError(msg.str());
  }
  const double b = kick_at(h);
  if (stages_ == 3) {
    return three_stage_scheme(b, three_stage_family_drift(b), "s-AIA3");
  }
  return two_stage_scheme(b, "s-AIA2");
}

}  // namespace atune
