#include "e2cfd/summary.hpp"

namespace e2cfd::metrics {

RunSummary summarize(std::string algorithm, const ppo::TrainReport& report,
                     std::span<const EpisodeStats> evaluation) {
  RunSummary s;
  s.algorithm = std::move(algorithm);
  s.curve = report.epochs;
  const Rates r = compute_rates(evaluation);
  s.tcr = r.tcr;
  s.her = r.her;
  s.wall_clock_s = report.wall_clock_s;
  for (const auto& e : evaluation) s.episode_costs.push_back(e.j_c);
  return s;
}

nlohmann::json to_json(const RunSummary& s) {
  nlohmann::json curve = nlohmann::json::array();
  std::vector<double> lambdas;
  for (const auto& e : s.curve) {
    curve.push_back({{"epoch", e.epoch},
                     {"avg_return", e.avg_return},
                     {"avg_cost", e.avg_cost},
                     {"avg_shaped_return", e.avg_shaped_return},
                     {"episodes", e.episodes},
                     {"tcr", e.tcr},
                     {"her", e.her},
                     {"wall_clock_s", e.wall_clock_s},
                     {"lambda", e.lambda}});
    lambdas.push_back(e.lambda);
  }
  nlohmann::json j{{"algorithm", s.algorithm},
                   {"epochs", s.curve.size()},
                   {"tcr", s.tcr},
                   {"her", s.her},
                   {"wall_clock_s", s.wall_clock_s},
                   {"episode_costs", s.episode_costs},
                   {"curve", curve}};
  if (s.algorithm == "ppo-lag") j["lambda_trajectory"] = lambdas;
  if (!s.episode_costs.empty()) {
    const auto d = distribution(s.episode_costs);
    j["cost_distribution"] = {{"min", d.min},       {"q25", d.q25}, {"median", d.median},
                              {"q75", d.q75},       {"max", d.max},
                              {"outliers", d.outliers}};
  }
  return j;
}

}  // namespace e2cfd::metrics
