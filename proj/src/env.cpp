#include "e2cfd/env.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace e2cfd {

namespace {

double norm(Vec2 v) { return std::hypot(v[0], v[1]); }

double dist(Vec2 a, Vec2 b) { return std::hypot(a[0] - b[0], a[1] - b[1]); }

bool circle_inside_arena(const Circle& c, double half) {
  return c.center[0] - c.radius >= -half && c.center[0] + c.radius <= half &&
         c.center[1] - c.radius >= -half && c.center[1] + c.radius <= half;
}

}  // namespace

void EnvConfig::validate() const {
  if (!(arena_half_extent > 0.0)) {
    throw InvalidConfig("arena_half_extent must be positive");
  }
  if (!(goal.radius > 0.0)) throw InvalidConfig("goal radius must be positive");
  if (!circle_inside_arena(goal, arena_half_extent)) {
    throw InvalidConfig("goal circle must lie inside the arena");
  }
  for (const auto& h : hazards) {
    if (!(h.radius > 0.0)) {
      throw InvalidConfig("hazard radius must be positive");
    }
    if (!circle_inside_arena(h, arena_half_extent)) {
      throw InvalidConfig("hazard circle must lie inside the arena");
    }
  }
  if (!(dt > 0.0) || !(accel_gain > 0.0) || !(max_speed > 0.0)) {
    throw InvalidConfig("dt, accel_gain and max_speed must be positive");
  }
  if (max_episode_steps < 1) {
    throw InvalidConfig("max_episode_steps must be >= 1");
  }
}

const std::vector<std::string>& feature_registry() {
  static const std::vector<std::string> names = {
      "x",         "y",        "vx",    "vy",      "goal_dx",
      "goal_dy",   "dist_goal", "dist_hazard_min", "in_hazard",
      "speed",     "progress",
  };
  return names;
}

double hazard_distance(const EnvConfig& config, Vec2 pos) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& h : config.hazards) {
    best = std::min(best, dist(pos, h.center) - h.radius);
  }
  // No hazards: report the arena diagonal so the feature stays finite.
  if (!std::isfinite(best)) best = 2.0 * std::sqrt(2.0) * config.arena_half_extent;
  return best;
}

Observation features_at(const EnvConfig& config, Vec2 pos, Vec2 vel,
                        double progress) {
  Observation o{};
  o[kX] = pos[0];
  o[kY] = pos[1];
  o[kVx] = vel[0];
  o[kVy] = vel[1];
  o[kGoalDx] = config.goal.center[0] - pos[0];
  o[kGoalDy] = config.goal.center[1] - pos[1];
  o[kDistGoal] = dist(pos, config.goal.center);
  o[kDistHazardMin] = hazard_distance(config, pos);
  o[kInHazard] = o[kDistHazardMin] < 0.0 ? 1.0 : 0.0;
  o[kSpeed] = norm(vel);
  o[kProgress] = progress;
  return o;
}

PointGoalEnv::PointGoalEnv(EnvConfig config) : config_(std::move(config)) {
  config_.validate();
}

Observation PointGoalEnv::reset(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> coord(-config_.arena_half_extent,
                                               config_.arena_half_extent);
  for (int attempt = 0; attempt < 10000; ++attempt) {
    const Vec2 p{coord(rng), coord(rng)};
    if (hazard_distance(config_, p) < 0.0) continue;
    if (dist(p, config_.goal.center) <= config_.goal.radius) continue;
    return place(p);
  }
  throw InvalidConfig("no free spawn area in the arena");
}

Observation PointGoalEnv::place(Vec2 pos) {
  pos_ = pos;
  vel_ = {0.0, 0.0};
  steps_ = 0;
  active_ = true;
  return features_at(config_, pos_, vel_, 0.0);
}

StepResult PointGoalEnv::step(std::array<double, 2> action) {
  if (!active_) throw InvalidState("step called before reset or after done");
  const double prev_dist = dist(pos_, config_.goal.center);

  for (int i = 0; i < 2; ++i) {
    const double a = std::clamp(action[static_cast<std::size_t>(i)], -1.0, 1.0);
    vel_[static_cast<std::size_t>(i)] += a * config_.accel_gain * config_.dt;
  }
  const double speed = norm(vel_);
  if (speed > config_.max_speed) {
    const double s = config_.max_speed / speed;
    vel_[0] *= s;
    vel_[1] *= s;
  }
  const double half = config_.arena_half_extent;
  for (std::size_t i = 0; i < 2; ++i) {
    pos_[i] += vel_[i] * config_.dt;
    if (pos_[i] > half || pos_[i] < -half) {
      pos_[i] = std::clamp(pos_[i], -half, half);
      vel_[i] = 0.0;
    }
  }
  ++steps_;

  const double d = dist(pos_, config_.goal.center);
  StepResult r;
  r.observation = features_at(config_, pos_, vel_, prev_dist - d);
  const bool at_goal = d < config_.goal.radius;
  r.reward = config_.progress_coefficient * (prev_dist - d) +
             (at_goal ? config_.goal_bonus : 0.0);
  r.cost = r.observation[kInHazard];
  if (at_goal) {
    r.done = true;
    r.done_reason = DoneReason::kGoal;
  } else if (steps_ >= config_.max_episode_steps) {
    r.done = true;
    r.done_reason = DoneReason::kTimeout;
  }
  if (r.done) active_ = false;
  return r;
}

}  // namespace e2cfd
