#ifndef E2CFD_ENV_HPP_
#define E2CFD_ENV_HPP_

#include <array>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

// Desk-scale static point-goal task: a point robot in a square arena drives
// toward a fixed goal circle; fixed hazard circles emit unit cost on contact.
namespace e2cfd {

using Vec2 = std::array<double, 2>;

struct Circle {
  Vec2 center{};
  double radius = 0.0;
};

struct EnvConfig {
  double arena_half_extent = 2.0;
  std::vector<Circle> hazards = {{{0.0, 0.5}, 0.5}, {{0.8, -0.4}, 0.5}};
  Circle goal = {{1.5, 1.5}, 0.3};
  double dt = 0.1;
  double accel_gain = 4.0;
  double max_speed = 1.0;
  int max_episode_steps = 300;
  double goal_bonus = 10.0;
  double progress_coefficient = 10.0;

  // Throws InvalidConfig.
  void validate() const;
};

class InvalidConfig : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class InvalidState : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Observation layout. The order is part of the checkpoint and DSL contract.
enum FeatureIndex : std::size_t {
  kX,
  kY,
  kVx,
  kVy,
  kGoalDx,
  kGoalDy,
  kDistGoal,
  kDistHazardMin,
  kInHazard,
  kSpeed,
  kProgress,
  kNumFeatures
};

inline constexpr int kFeatureRegistryVersion = 1;

// The 11 feature names in observation order.
const std::vector<std::string>& feature_registry();

using Observation = std::array<double, kNumFeatures>;

// Features of a robot at `pos` moving with `vel`; `progress` is passed
// through (previous dist_goal minus current).
Observation features_at(const EnvConfig& config, Vec2 pos, Vec2 vel,
                        double progress);

// Signed distance to the nearest hazard boundary (negative inside).
double hazard_distance(const EnvConfig& config, Vec2 pos);

enum class DoneReason { kNone, kGoal, kTimeout };

struct StepResult {
  Observation observation{};
  double reward = 0.0;
  double cost = 0.0;
  bool done = false;
  DoneReason done_reason = DoneReason::kNone;
};

class PointGoalEnv {
 public:
  explicit PointGoalEnv(EnvConfig config);

  // Uniform spawn over the free area; deterministic given the seed. Throws
  // InvalidConfig if no free point is found.
  Observation reset(std::uint64_t seed);

  // Throws InvalidState when called before reset or after done.
  StepResult step(std::array<double, 2> action);

  // Places the robot at rest at `pos` (scripted tests and heatmaps).
  Observation place(Vec2 pos);

  const EnvConfig& config() const { return config_; }
  Vec2 position() const { return pos_; }
  Vec2 velocity() const { return vel_; }
  int steps_taken() const { return steps_; }

 private:
  EnvConfig config_;
  Vec2 pos_{};
  Vec2 vel_{};
  int steps_ = 0;
  bool active_ = false;
};

}  // namespace e2cfd

#endif  // E2CFD_ENV_HPP_
