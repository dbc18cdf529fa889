#ifndef E2CFD_PPO_HPP_
#define E2CFD_PPO_HPP_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "e2cfd/cmdp.hpp"
#include "e2cfd/dsl.hpp"
#include "e2cfd/env.hpp"
#include "e2cfd/nn.hpp"

namespace e2cfd::ppo {

struct PpoConfig {
  int epochs = 50;
  int steps_per_epoch = 4000;
  int max_episode_steps = 300;
  double gamma = kDefaultGamma;
  double gae_lambda = 0.97;
  double clip_ratio = 0.2;
  double policy_lr = 3e-4;
  double value_lr = 1e-3;
  int update_iters = 10;
  int minibatch_size = 500;
  double entropy_coefficient = 0.0;
  double target_kl = 0.02;
  std::vector<int> hidden = {64, 64};
  double shaping_scale = 1.0;
  std::uint64_t seed = 0;

  // Throws std::invalid_argument.
  void validate() const;
};

enum class Algorithm { kPpo, kPpoLagrangian };

struct LagrangeState {
  double lambda = 0.0;
  double lambda_lr = 0.05;
  double cost_limit = 10.0;
};

// Projected dual ascent: lambda <- max(0, lambda + lr * (cost - d)).
LagrangeState lagrange_update(LagrangeState state, double measured_cost);

// (A_r - lambda * A_c) / (1 + lambda).
double mix_advantage(double reward_advantage, double cost_advantage,
                     double lambda);

// raw + scale * cost_expr(features); raw unchanged without an expression.
double shaped_reward(double raw_reward, const dsl::CostExpr* cost_expr,
                     const dsl::FeatureMap& features, double scale);

struct GaeResult {
  std::vector<double> advantages;
  std::vector<double> returns;
};

// `segment_ends` lists the exclusive end index of each contiguous segment of
// `rewards`. `values` interleaves one bootstrap value after each segment, so
// values.size() == rewards.size() + segment_ends.size(). Throws
// std::invalid_argument on length mismatch.
GaeResult gae(std::span<const double> rewards, std::span<const double> values,
              std::span<const std::size_t> segment_ends, double gamma,
              double lambda);

// Rescales to mean 0 / std 1 (population std; constant input becomes zeros).
void normalize(std::vector<double>& xs);

struct RolloutBuffer {
  std::vector<Observation> observations;
  std::vector<std::array<double, 2>> actions;
  std::vector<double> log_probs;
  std::vector<double> shaped_rewards;
  std::vector<double> rewards;
  std::vector<double> costs;
  std::vector<double> values;       // with bootstraps, see gae()
  std::vector<double> cost_values;  // with bootstraps
  std::vector<std::size_t> segment_ends;

  std::size_t size() const { return rewards.size(); }
  void clear();
};

struct EpochStats {
  int epoch = 0;
  double avg_return = 0.0;         // mean undiscounted raw episode return
  double avg_cost = 0.0;           // mean undiscounted episode cost
  double avg_shaped_return = 0.0;  // mean undiscounted shaped episode return
  int episodes = 0;
  double tcr = 0.0;
  double her = 0.0;
  double wall_clock_s = 0.0;  // cumulative since training start
  double lambda = 0.0;
};

// Determinism comparisons ignore wall-clock fields.
bool same_statistics(const EpochStats& a, const EpochStats& b);

struct TrainReport {
  std::vector<EpochStats> epochs;
  double wall_clock_s = 0.0;
  nn::GaussianPolicy policy;
  bool failed = false;
  std::string failure;
};

struct TrainOptions {
  Algorithm algorithm = Algorithm::kPpo;
  std::optional<dsl::CostExpr> shaping;
  std::optional<int> stop_after;  // epochs; truncates config.epochs
  LagrangeState lagrange;
};

// Trains a fresh policy and value network seeded from config.seed. A shaping
// expression that cannot be bound to the feature registry yields a report
// with failed = true instead of throwing.
TrainReport train(const EnvConfig& env_config, const PpoConfig& config,
                  const TrainOptions& options = {});

// One deterministic (policy-mean) or stochastic episode from reset(seed).
Trajectory run_episode(const EnvConfig& env_config,
                       const nn::GaussianPolicy& policy, std::uint64_t seed,
                       bool deterministic, std::mt19937_64* rng = nullptr);

// Base of the spawn seeds used for evaluation episodes, shared by every
// candidate so metrics are comparable.
inline constexpr std::uint64_t kEvalSeedBase = 0x5eed0000ULL;

std::vector<EpisodeStats> evaluate_policy(const EnvConfig& env_config,
                                          const nn::GaussianPolicy& policy,
                                          int episodes, double gamma);

// CSV: epoch,avg_return,avg_cost,avg_shaped_return,episodes,tcr,her,wall_clock_s
void write_report_csv(const TrainReport& report,
                      const std::filesystem::path& path);

}  // namespace e2cfd::ppo

#endif  // E2CFD_PPO_HPP_
