#include "reachlab/value_grid.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <mutex>
#include <sstream>
#include <string>

#include "reachlab/csv.hpp"
#include "reachlab/errors.hpp"

namespace reachlab {
namespace {

int node_count(double lo, double hi, double h) {
  return static_cast<int>(std::floor((hi - lo) / h + 1e-9)) + 1;
}

// Returns the number of grid steps per a_max, or -1 if a_max is not a
// multiple of h.
int aligned_steps(double a_max, double h) {
  const double ratio = a_max / h;
  const double r = std::round(ratio);
  return std::abs(ratio - r) < 1e-9 ? static_cast<int>(r) : -1;
}

std::vector<double> action_axis(double a_max, int n) {
  std::vector<double> out(static_cast<std::size_t>(n));
  for (int j = 0; j < n; ++j) {
    out[j] = n == 1 ? 0.0 : -a_max + 2.0 * a_max * j / (n - 1);
  }
  return out;
}

struct Backup {
  double value;
  Action2 action;
};

Backup backup_general(const EnvSpec& spec, const ValueGrid& g, State2 s,
                      const std::vector<double>& axis) {
  Backup best{-std::numeric_limits<double>::infinity(), {}};
  for (double ay : axis) {
    for (double ax : axis) {
      const State2 next{s.x + ax, s.y + ay};
      const double q = spec.reward(next) + spec.gamma * g.value(next);
      if (q > best.value) best = {q, {ax, ay}};
    }
  }
  return best;
}

}  // namespace

double ValueGrid::value(State2 s) const {
  if (values.empty()) throw Error("value lookup on an empty grid");
  const double x_hi = box.x_lo + (nx - 1) * h;
  const double y_hi = box.y_lo + (ny - 1) * h;
  const double fx = (std::clamp(s.x, box.x_lo, x_hi) - box.x_lo) / h;
  const double fy = (std::clamp(s.y, box.y_lo, y_hi) - box.y_lo) / h;
  const int i0 = nx < 2 ? 0 : std::min(static_cast<int>(fx), nx - 2);
  const int j0 = ny < 2 ? 0 : std::min(static_cast<int>(fy), ny - 2);
  const double tx = nx < 2 ? 0.0 : fx - i0;
  const double ty = ny < 2 ? 0.0 : fy - j0;
  const int i1 = std::min(i0 + 1, nx - 1);
  const int j1 = std::min(j0 + 1, ny - 1);
  const double v00 = at(i0, j0);
  const double v10 = at(i1, j0);
  const double v01 = at(i0, j1);
  const double v11 = at(i1, j1);
  return (1.0 - ty) * ((1.0 - tx) * v00 + tx * v10) + ty * ((1.0 - tx) * v01 + tx * v11);
}

double ValueGrid::max_value() const {
  if (values.empty()) throw Error("max_value on an empty grid");
  return *std::max_element(values.begin(), values.end());
}

void ValueGrid::write_csv(std::ostream& os) const {
  os << "box," << fmt(box.x_lo) << "," << fmt(box.x_hi) << "," << fmt(box.y_lo) << ","
     << fmt(box.y_hi) << "\n";
  os << "resolution," << fmt(h) << "," << nx << "," << ny << "\n";
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      if (i) os << ",";
      os << fmt(at(i, j));
    }
    os << "\n";
  }
}

Box2 default_oracle_box(const EnvSpec& spec, double pad) {
  return spec.init_box.expanded(spec.rollout_length * spec.a_max + pad);
}

ValueGrid value_iteration(const EnvSpec& spec, const Box2& box,
                          const ValueIterationConfig& cfg) {
  std::vector<std::string> bad;
  if (!(cfg.h > 0.0) || !std::isfinite(cfg.h)) bad.push_back("oracle.h: must be > 0");
  if (!(cfg.tol > 0.0)) bad.push_back("oracle.tol: must be > 0");
  if (cfg.max_iterations < 1) bad.push_back("oracle.max_iterations: must be >= 1");
  if (cfg.fallback_actions < 1) bad.push_back("oracle.fallback_actions: must be >= 1");
  if (box.empty()) bad.push_back("oracle.box: must be nonempty");
  if (!bad.empty()) throw ConfigError(std::move(bad));
  spec.validate();

  ValueGrid g;
  g.box = box;
  g.h = cfg.h;
  g.gamma = spec.gamma;
  g.nx = node_count(box.x_lo, box.x_hi, cfg.h);
  g.ny = node_count(box.y_lo, box.y_hi, cfg.h);
  const std::size_t cells = static_cast<std::size_t>(g.nx) * g.ny;
  g.values.assign(cells, 0.0);
  g.greedy.assign(cells, Action2{});
  std::vector<double> next(cells, 0.0);

  const int m = aligned_steps(spec.a_max, cfg.h);
  if (m >= 0) {
    // Rewards on the grid extended by m nodes on each side, so successors
    // that leave the box still see the true reward.
    const int ex = g.nx + 2 * m;
    const int ey = g.ny + 2 * m;
    std::vector<double> reward(static_cast<std::size_t>(ex) * ey);
    for (int j = 0; j < ey; ++j) {
      for (int i = 0; i < ex; ++i) {
        reward[static_cast<std::size_t>(j) * ex + i] =
            spec.reward({box.x_lo + (i - m) * cfg.h, box.y_lo + (j - m) * cfg.h});
      }
    }
    std::vector<int> best_ox(cells, 0);
    std::vector<int> best_oy(cells, 0);
    for (int it = 1; it <= cfg.max_iterations; ++it) {
      double change = 0.0;
      for (int j = 0; j < g.ny; ++j) {
        for (int i = 0; i < g.nx; ++i) {
          double best = -std::numeric_limits<double>::infinity();
          int bx = 0;
          int by = 0;
          for (int oy = -m; oy <= m; ++oy) {
            const int jj = std::clamp(j + oy, 0, g.ny - 1);
            const double* rrow = &reward[static_cast<std::size_t>(j + oy + m) * ex + m];
            const double* vrow = &g.values[static_cast<std::size_t>(jj) * g.nx];
            for (int ox = -m; ox <= m; ++ox) {
              const int ii = std::clamp(i + ox, 0, g.nx - 1);
              const double q = rrow[i + ox] + spec.gamma * vrow[ii];
              if (q > best) {
                best = q;
                bx = ox;
                by = oy;
              }
            }
          }
          const std::size_t c = g.index(i, j);
          next[c] = best;
          best_ox[c] = bx;
          best_oy[c] = by;
          change = std::max(change, std::abs(best - g.values[c]));
        }
      }
      g.values.swap(next);
      g.iterations = it;
      g.residual = change;
      if (change < cfg.tol) break;
    }
    for (std::size_t c = 0; c < cells; ++c) {
      g.greedy[c] = {best_ox[c] * cfg.h, best_oy[c] * cfg.h};
    }
  } else {
    const std::vector<double> axis = action_axis(spec.a_max, cfg.fallback_actions);
    for (int it = 1; it <= cfg.max_iterations; ++it) {
      double change = 0.0;
      for (int j = 0; j < g.ny; ++j) {
        for (int i = 0; i < g.nx; ++i) {
          const Backup b = backup_general(spec, g, g.node(i, j), axis);
          const std::size_t c = g.index(i, j);
          next[c] = b.value;
          g.greedy[c] = b.action;
          change = std::max(change, std::abs(b.value - g.values[c]));
        }
      }
      g.values.swap(next);
      g.iterations = it;
      g.residual = change;
      if (change < cfg.tol) break;
    }
  }
  if (!(g.residual < cfg.tol)) {
    std::ostringstream os;
    os << "value iteration did not converge in " << cfg.max_iterations
       << " sweeps (residual " << g.residual << ", tol " << cfg.tol << ")";
    throw ConvergenceError(os.str());
  }
  return g;
}

std::shared_ptr<const ValueGrid> cached_value_iteration(const EnvSpec& spec,
                                                        const Box2& box,
                                                        const ValueIterationConfig& cfg) {
  static std::mutex mu;
  static std::map<std::string, std::shared_ptr<const ValueGrid>> cache;
  std::ostringstream key;
  for (const Bump& b : spec.reward.bumps()) {
    key << fmt(b.center.x) << ":" << fmt(b.center.y) << ":" << fmt(b.amplitude) << ":"
        << fmt(b.width) << ";";
  }
  key << "|" << fmt(spec.a_max) << "|" << fmt(spec.gamma) << "|" << fmt(box.x_lo) << ","
      << fmt(box.x_hi) << "," << fmt(box.y_lo) << "," << fmt(box.y_hi) << "|"
      << fmt(cfg.h) << "|" << fmt(cfg.tol) << "|" << cfg.max_iterations << "|"
      << cfg.fallback_actions;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(key.str());
  if (it != cache.end()) return it->second;
  auto grid = std::make_shared<const ValueGrid>(value_iteration(spec, box, cfg));
  cache.emplace(key.str(), grid);
  return grid;
}

double bellman_residual(const EnvSpec& spec, const ValueGrid& grid, int actions_per_axis) {
  const std::vector<double> axis = action_axis(spec.a_max, actions_per_axis);
  double change = 0.0;
  for (int j = 0; j < grid.ny; ++j) {
    for (int i = 0; i < grid.nx; ++i) {
      const Backup b = backup_general(spec, grid, grid.node(i, j), axis);
      change = std::max(change, std::abs(b.value - grid.at(i, j)));
    }
  }
  return change;
}

Action2 lookahead_action(const EnvSpec& spec, const ValueGrid& grid, State2 s,
                         int actions_per_axis) {
  return backup_general(spec, grid, s, action_axis(spec.a_max, actions_per_axis)).action;
}

}  // namespace reachlab
