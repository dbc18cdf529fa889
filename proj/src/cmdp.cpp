#include "e2cfd/cmdp.hpp"

#include <stdexcept>
#include <string>

namespace e2cfd {

SafetyRequirement SafetyRequirement::traditional(double d) {
  if (!(d >= 0.0)) throw std::invalid_argument("cost threshold d must be >= 0");
  return {Kind::kTraditional, d, 0.0};
}

SafetyRequirement SafetyRequirement::zero_violation() {
  return {Kind::kZeroViolation, 0.0, 0.0};
}

SafetyRequirement SafetyRequirement::almost_surely(double d, double epsilon) {
  if (!(d >= 0.0)) throw std::invalid_argument("cost threshold d must be >= 0");
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) {
    throw std::invalid_argument("epsilon must lie in [0, 1]");
  }
  return {Kind::kAlmostSurely, d, epsilon};
}

double discounted_return(std::span<const double> values, double gamma) {
  if (!(gamma >= 0.0 && gamma <= 1.0)) {
    throw std::invalid_argument("gamma must lie in [0, 1], got " +
                                std::to_string(gamma));
  }
  double total = 0.0;
  double weight = 1.0;
  for (double v : values) {
    total += weight * v;
    weight *= gamma;
  }
  return total;
}

EpisodeStats episode_stats(const Trajectory& trajectory, double gamma) {
  std::vector<double> rewards;
  std::vector<double> costs;
  rewards.reserve(trajectory.length());
  costs.reserve(trajectory.length());
  EpisodeStats s;
  for (const auto& step : trajectory.steps) {
    rewards.push_back(step.reward);
    costs.push_back(step.cost);
    s.undiscounted_cost += step.cost;
  }
  s.j_r = discounted_return(rewards, gamma);
  s.j_c = discounted_return(costs, gamma);
  s.reached_goal = trajectory.terminated_at_goal;
  s.touched_hazard = s.undiscounted_cost > 0.0;
  return s;
}

bool satisfies(const SafetyRequirement& req,
               std::span<const EpisodeStats> episodes) {
  if (episodes.empty()) {
    throw std::invalid_argument("satisfies: empty episode list");
  }
  if (req.kind == SafetyRequirement::Kind::kAlmostSurely) {
    std::size_t violating = 0;
    for (const auto& e : episodes) {
      if (e.j_c > req.d) ++violating;
    }
    return static_cast<double>(violating) <=
           req.epsilon * static_cast<double>(episodes.size());
  }
  double sum = 0.0;
  for (const auto& e : episodes) sum += e.j_c;
  return sum / static_cast<double>(episodes.size()) <= req.threshold();
}

double fitness_eq2(double j_r, double j_c, double d, double n) {
  return j_c > d ? -n : j_r;
}

}  // namespace e2cfd
