#ifndef E2CFD_SUMMARY_HPP_
#define E2CFD_SUMMARY_HPP_

#include <string>
#include <vector>

#include <json.hpp>

#include "e2cfd/cmdp.hpp"
#include "e2cfd/metrics.hpp"
#include "e2cfd/ppo.hpp"

namespace e2cfd::metrics {

// One training job: curves, final rates from deterministic evaluation,
// wall clock and the per-episode j_c list for box plots.
struct RunSummary {
  std::string algorithm;
  std::vector<ppo::EpochStats> curve;
  double tcr = 0.0;
  double her = 0.0;
  double wall_clock_s = 0.0;
  std::vector<double> episode_costs;
};

// Throws std::invalid_argument when `evaluation` is empty.
RunSummary summarize(std::string algorithm, const ppo::TrainReport& report,
                     std::span<const EpisodeStats> evaluation);

nlohmann::json to_json(const RunSummary& s);

}  // namespace e2cfd::metrics

#endif  // E2CFD_SUMMARY_HPP_
