#include "e2cfd/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace e2cfd::metrics {

Rates compute_rates(std::span<const EpisodeStats> episodes) {
  if (episodes.empty()) {
    throw std::invalid_argument("compute_rates: empty episode list");
  }
  std::size_t completed = 0;
  std::size_t exposed = 0;
  for (const auto& e : episodes) {
    if (e.reached_goal) ++completed;
    if (e.touched_hazard) ++exposed;
  }
  const double n = static_cast<double>(episodes.size());
  return {static_cast<double>(completed) / n, static_cast<double>(exposed) / n};
}

double time_ratio(double t_algo, double t_ppo) {
  if (!(t_ppo > 0.0)) throw std::invalid_argument("time_ratio: t_ppo must be > 0");
  return t_algo / t_ppo;
}

double quantile(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw std::invalid_argument("quantile: empty input");
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  if (frac == 0.0) return sorted[lo];
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

Distribution distribution(std::vector<double> values) {
  if (values.empty()) {
    throw std::invalid_argument("cost_distribution: empty episode list");
  }
  std::sort(values.begin(), values.end());
  Distribution d;
  d.min = values.front();
  d.max = values.back();
  d.q25 = quantile(values, 0.25);
  d.median = quantile(values, 0.5);
  d.q75 = quantile(values, 0.75);
  const double iqr = d.q75 - d.q25;
  for (double v : values) {
    if (v < d.q25 - 1.5 * iqr || v > d.q75 + 1.5 * iqr) d.outliers.push_back(v);
  }
  return d;
}

Distribution cost_distribution(std::span<const EpisodeStats> episodes) {
  std::vector<double> costs;
  costs.reserve(episodes.size());
  for (const auto& e : episodes) costs.push_back(e.j_c);
  return distribution(std::move(costs));
}

HeatmapGrid heatmap(const dsl::CostExpr& candidate, const EnvConfig& env,
                    int resolution) {
  if (resolution < 1) throw std::invalid_argument("heatmap resolution must be >= 1");
  const double h = env.arena_half_extent;
  HeatmapGrid grid{{-h, h, resolution}, {-h, h, resolution}, {}};
  const dsl::BoundExpr bound(candidate, feature_registry());
  grid.values.assign(static_cast<std::size_t>(resolution),
                     std::vector<double>(static_cast<std::size_t>(resolution)));
  for (int j = 0; j < resolution; ++j) {
    for (int i = 0; i < resolution; ++i) {
      const Observation o =
          features_at(env, {grid.x.at(i), grid.y.at(j)}, {0.0, 0.0}, 0.0);
      const double v = bound(std::span<const double>(o.data(), o.size()));
      // -0 from negated indicators prints as "-0"; it compares equal to 0.
      grid.values[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)] =
          v == 0.0 ? 0.0 : v;
    }
  }
  return grid;
}

namespace {

std::string shortest(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

double parse_double(std::string_view s) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw std::invalid_argument("bad number in CSV: " + std::string(s));
  }
  return v;
}

}  // namespace

std::string heatmap_csv(const HeatmapGrid& grid) {
  std::string out = "x,y,value\n";
  for (int j = 0; j < grid.y.resolution; ++j) {
    for (int i = 0; i < grid.x.resolution; ++i) {
      out += shortest(grid.x.at(i));
      out += ',';
      out += shortest(grid.y.at(j));
      out += ',';
      out += shortest(grid.values[static_cast<std::size_t>(j)]
                                 [static_cast<std::size_t>(i)]);
      out += '\n';
    }
  }
  return out;
}

HeatmapGrid parse_heatmap_csv(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line) || line != "x,y,value") {
    throw std::invalid_argument("heatmap CSV must start with 'x,y,value'");
  }
  std::vector<std::array<double, 3>> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto c1 = line.find(',');
    const auto c2 = line.find(',', c1 + 1);
    if (c1 == std::string::npos || c2 == std::string::npos) {
      throw std::invalid_argument("malformed heatmap row: " + line);
    }
    std::string_view sv(line);
    rows.push_back({parse_double(sv.substr(0, c1)),
                    parse_double(sv.substr(c1 + 1, c2 - c1 - 1)),
                    parse_double(sv.substr(c2 + 1))});
  }
  if (rows.empty()) throw std::invalid_argument("empty heatmap CSV");
  int nx = 0;
  while (static_cast<std::size_t>(nx) < rows.size() && rows[nx][1] == rows[0][1]) ++nx;
  if (rows.size() % static_cast<std::size_t>(nx) != 0) {
    throw std::invalid_argument("heatmap CSV is not a full grid");
  }
  const int ny = static_cast<int>(rows.size()) / nx;
  HeatmapGrid g;
  // Axes are reconstructed from cell centers.
  const double dx = nx > 1 ? rows[1][0] - rows[0][0] : 0.0;
  const double dy = ny > 1 ? rows[static_cast<std::size_t>(nx)][1] - rows[0][1] : 0.0;
  g.x = {rows[0][0] - dx / 2, rows[static_cast<std::size_t>(nx - 1)][0] + dx / 2, nx};
  g.y = {rows[0][1] - dy / 2, rows.back()[1] + dy / 2, ny};
  g.values.assign(static_cast<std::size_t>(ny),
                  std::vector<double>(static_cast<std::size_t>(nx)));
  for (std::size_t k = 0; k < rows.size(); ++k) {
    g.values[k / static_cast<std::size_t>(nx)][k % static_cast<std::size_t>(nx)] =
        rows[k][2];
  }
  return g;
}

std::string heatmap_pgm(const HeatmapGrid& grid) {
  double lo = grid.values[0][0];
  double hi = lo;
  for (const auto& row : grid.values) {
    for (double v : row) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  std::ostringstream os;
  os << "P2\n" << grid.x.resolution << ' ' << grid.y.resolution << "\n255\n";
  for (int j = grid.y.resolution; j-- > 0;) {
    const auto& row = grid.values[static_cast<std::size_t>(j)];
    for (std::size_t i = 0; i < row.size(); ++i) {
      const int level =
          hi > lo ? static_cast<int>(std::lround(255.0 * (row[i] - lo) / (hi - lo)))
                  : 0;
      os << level << (i + 1 == row.size() ? '\n' : ' ');
    }
  }
  return os.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << text;
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

}  // namespace e2cfd::metrics
