#ifndef E2CFD_CMDP_HPP_
#define E2CFD_CMDP_HPP_

#include <array>
#include <span>
#include <vector>

// Constrained-MDP bookkeeping: discounted returns, per-episode statistics,
// safety-requirement predicates and the piecewise fitness score.
namespace e2cfd {

inline constexpr double kDefaultGamma = 0.99;
inline constexpr double kDefaultPenalty = 1e6;  // "n" of the fitness score

struct SafetyRequirement {
  enum class Kind { kTraditional, kZeroViolation, kAlmostSurely };

  Kind kind = Kind::kTraditional;
  double d = 10.0;
  double epsilon = 0.0;

  static SafetyRequirement traditional(double d);
  static SafetyRequirement zero_violation();
  static SafetyRequirement almost_surely(double d, double epsilon);

  // The threshold the cumulative predicate compares against.
  double threshold() const { return kind == Kind::kZeroViolation ? 0.0 : d; }
};

struct Step {
  std::vector<double> observation;
  std::array<double, 2> action{};
  double reward = 0.0;
  double cost = 0.0;
  double shaped_reward = 0.0;
};

struct Trajectory {
  std::vector<Step> steps;
  bool terminated_at_goal = false;

  std::size_t length() const { return steps.size(); }
};

struct EpisodeStats {
  double j_r = 0.0;
  double j_c = 0.0;
  double undiscounted_cost = 0.0;
  bool reached_goal = false;
  bool touched_hazard = false;
};

// Sum_t gamma^t * values[t]. Throws std::invalid_argument for gamma outside
// [0, 1].
double discounted_return(std::span<const double> values, double gamma);

EpisodeStats episode_stats(const Trajectory& trajectory, double gamma);

// Throws std::invalid_argument on an empty episode list.
bool satisfies(const SafetyRequirement& req,
               std::span<const EpisodeStats> episodes);

// -n when j_c > d, j_r otherwise.
double fitness_eq2(double j_r, double j_c, double d, double n);

}  // namespace e2cfd

#endif  // E2CFD_CMDP_HPP_
