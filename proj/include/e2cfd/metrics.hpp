#ifndef E2CFD_METRICS_HPP_
#define E2CFD_METRICS_HPP_

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "e2cfd/cmdp.hpp"
#include "e2cfd/dsl.hpp"
#include "e2cfd/env.hpp"

namespace e2cfd::metrics {

struct Rates {
  double tcr = 0.0;  // goal-reaching episodes / episodes
  double her = 0.0;  // hazard-touching episodes / episodes
};

// Throws std::invalid_argument on an empty list.
Rates compute_rates(std::span<const EpisodeStats> episodes);

// t_algo / t_ppo. Throws std::invalid_argument for t_ppo <= 0.
double time_ratio(double t_algo, double t_ppo);

struct Distribution {
  double min = 0.0;
  double q25 = 0.0;
  double median = 0.0;
  double q75 = 0.0;
  double max = 0.0;
  std::vector<double> outliers;  // outside [q25 - 1.5 IQR, q75 + 1.5 IQR]
};

// Linear interpolation between closest ranks: position q * (n - 1).
double quantile(std::span<const double> sorted, double q);

// Five-number summary of per-episode j_c. Throws on an empty list.
Distribution cost_distribution(std::span<const EpisodeStats> episodes);
Distribution distribution(std::vector<double> values);

struct Axis {
  double min = 0.0;
  double max = 0.0;
  int resolution = 1;

  // Center of cell i.
  double at(int i) const {
    return min + (static_cast<double>(i) + 0.5) * (max - min) / resolution;
  }
};

// Candidate values over the arena with the robot at rest in each cell.
struct HeatmapGrid {
  Axis x;
  Axis y;
  std::vector<std::vector<double>> values;  // values[row j (y)][col i (x)]
};

HeatmapGrid heatmap(const dsl::CostExpr& candidate, const EnvConfig& env,
                    int resolution);

// Header "x,y,value", rows ordered by y then x.
std::string heatmap_csv(const HeatmapGrid& grid);
HeatmapGrid parse_heatmap_csv(const std::string& text);
// P2 grayscale, the maximum value maps to 255 (top row is the largest y).
std::string heatmap_pgm(const HeatmapGrid& grid);

void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

}  // namespace e2cfd::metrics

#endif  // E2CFD_METRICS_HPP_
