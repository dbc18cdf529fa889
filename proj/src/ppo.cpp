#include "e2cfd/ppo.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

namespace e2cfd::ppo {

void PpoConfig::validate() const {
  auto fail = [](const std::string& m) { throw std::invalid_argument(m); };
  if (epochs < 0) fail("ppo.epochs must be >= 0");
  if (steps_per_epoch < 1) fail("ppo.steps_per_epoch must be >= 1");
  if (max_episode_steps < 1) fail("ppo.max_episode_steps must be >= 1");
  if (steps_per_epoch < max_episode_steps) {
    fail("ppo.steps_per_epoch must be >= ppo.max_episode_steps");
  }
  if (!(gamma >= 0.0 && gamma <= 1.0)) fail("ppo.gamma must lie in [0, 1]");
  if (!(gae_lambda >= 0.0 && gae_lambda <= 1.0)) {
    fail("ppo.gae_lambda must lie in [0, 1]");
  }
  if (!(clip_ratio > 0.0 && clip_ratio < 1.0)) {
    fail("ppo.clip_ratio must lie in (0, 1)");
  }
  if (!(policy_lr > 0.0) || !(value_lr > 0.0)) {
    fail("ppo learning rates must be positive");
  }
  if (update_iters < 1 || minibatch_size < 1) {
    fail("ppo.update_iters and ppo.minibatch_size must be >= 1");
  }
  if (hidden.empty()) fail("ppo.hidden needs at least one layer");
  for (int h : hidden) {
    if (h < 1) fail("ppo.hidden sizes must be >= 1");
  }
}

LagrangeState lagrange_update(LagrangeState state, double measured_cost) {
  state.lambda = std::max(
      0.0, state.lambda + state.lambda_lr * (measured_cost - state.cost_limit));
  return state;
}

double mix_advantage(double reward_advantage, double cost_advantage,
                     double lambda) {
  return (reward_advantage - lambda * cost_advantage) / (1.0 + lambda);
}

double shaped_reward(double raw_reward, const dsl::CostExpr* cost_expr,
                     const dsl::FeatureMap& features, double scale) {
  if (cost_expr == nullptr) return raw_reward;
  return raw_reward + scale * dsl::evaluate(*cost_expr, features);
}

GaeResult gae(std::span<const double> rewards, std::span<const double> values,
              std::span<const std::size_t> segment_ends, double gamma,
              double lambda) {
  if (values.size() != rewards.size() + segment_ends.size()) {
    throw std::invalid_argument(
        "gae: values must hold one entry per reward plus one bootstrap per "
        "segment");
  }
  if (!segment_ends.empty() && segment_ends.back() != rewards.size()) {
    throw std::invalid_argument("gae: last segment must end at rewards.size()");
  }
  GaeResult out;
  out.advantages.assign(rewards.size(), 0.0);
  out.returns.assign(rewards.size(), 0.0);
  std::size_t begin = 0;
  for (std::size_t k = 0; k < segment_ends.size(); ++k) {
    const std::size_t end = segment_ends[k];
    if (end < begin) throw std::invalid_argument("gae: segment ends must increase");
    // Step t of this segment has its value at values[t + k]; the bootstrap
    // sits at values[end + k].
    double running = 0.0;
    for (std::size_t t = end; t-- > begin;) {
      const double v = values[t + k];
      const double v_next = values[t + 1 + k];
      const double delta = rewards[t] + gamma * v_next - v;
      running = delta + gamma * lambda * running;
      out.advantages[t] = running;
      out.returns[t] = running + v;
    }
    begin = end;
  }
  return out;
}

void normalize(std::vector<double>& xs) {
  if (xs.empty()) return;
  const double n = static_cast<double>(xs.size());
  const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  double var = 0.0;
  for (double x : xs) var += (x - mean) * (x - mean);
  const double sd = std::sqrt(var / n);
  for (double& x : xs) x = sd > 1e-12 ? (x - mean) / sd : 0.0;
}

void RolloutBuffer::clear() {
  observations.clear();
  actions.clear();
  log_probs.clear();
  shaped_rewards.clear();
  rewards.clear();
  costs.clear();
  values.clear();
  cost_values.clear();
  segment_ends.clear();
}

bool same_statistics(const EpochStats& a, const EpochStats& b) {
  return a.epoch == b.epoch && a.avg_return == b.avg_return &&
         a.avg_cost == b.avg_cost && a.avg_shaped_return == b.avg_shaped_return &&
         a.episodes == b.episodes && a.tcr == b.tcr && a.her == b.her &&
         a.lambda == b.lambda;
}

namespace {

using nn::Matrix;
using nn::Vector;
using Clock = std::chrono::steady_clock;

Vector to_vector(const Observation& o) {
  Vector v(static_cast<Eigen::Index>(o.size()));
  for (std::size_t i = 0; i < o.size(); ++i) v[static_cast<Eigen::Index>(i)] = o[i];
  return v;
}

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

// Value network plus its optimizer.
struct Critic {
  nn::Mlp net;
  nn::AdamState adam;

  Critic(const std::vector<int>& hidden, std::mt19937_64& rng, double lr) {
    std::vector<int> sizes{static_cast<int>(kNumFeatures)};
    sizes.insert(sizes.end(), hidden.begin(), hidden.end());
    sizes.push_back(1);
    net = nn::Mlp(sizes);
    net.init(rng, 1.0);
    adam = nn::AdamState(net.parameter_count(), lr);
  }

  double value(const Observation& o) const { return net.forward(to_vector(o))[0]; }

  void fit(const Matrix& obs, const std::vector<double>& targets,
           const std::vector<std::size_t>& order, int minibatch) {
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(minibatch)) {
      const std::size_t end =
          std::min(order.size(), start + static_cast<std::size_t>(minibatch));
      const auto b = static_cast<Eigen::Index>(end - start);
      Matrix x(obs.rows(), b);
      for (Eigen::Index j = 0; j < b; ++j) {
        x.col(j) = obs.col(static_cast<Eigen::Index>(order[start + j]));
      }
      nn::Mlp::Cache cache;
      const Matrix pred = net.forward(x, &cache);
      Matrix grad(1, b);
      for (Eigen::Index j = 0; j < b; ++j) {
        grad(0, j) = 2.0 * (pred(0, j) - targets[order[start + j]]) /
                     static_cast<double>(b);
      }
      const Vector g = net.backward(cache, grad);
      nn::adam_step(adam, net.params(), g);
    }
  }
};

struct EpisodeAccumulator {
  double ret = 0.0;
  double cost = 0.0;
  double shaped = 0.0;
};

}  // namespace

Trajectory run_episode(const EnvConfig& env_config,
                       const nn::GaussianPolicy& policy, std::uint64_t seed,
                       bool deterministic, std::mt19937_64* rng) {
  PointGoalEnv env(env_config);
  Observation obs = env.reset(seed);
  Trajectory traj;
  while (true) {
    const Vector o = to_vector(obs);
    Vector a = deterministic || rng == nullptr ? policy.mean(o)
                                               : policy.sample(o, *rng).action;
    const std::array<double, 2> action{std::clamp(a[0], -1.0, 1.0),
                                       std::clamp(a[1], -1.0, 1.0)};
    const StepResult r = env.step(action);
    Step s;
    s.observation.assign(obs.begin(), obs.end());
    s.action = action;
    s.reward = r.reward;
    s.cost = r.cost;
    s.shaped_reward = r.reward;
    traj.steps.push_back(std::move(s));
    obs = r.observation;
    if (r.done) {
      traj.terminated_at_goal = r.done_reason == DoneReason::kGoal;
      break;
    }
  }
  return traj;
}

std::vector<EpisodeStats> evaluate_policy(const EnvConfig& env_config,
                                          const nn::GaussianPolicy& policy,
                                          int episodes, double gamma) {
  std::vector<EpisodeStats> out;
  out.reserve(static_cast<std::size_t>(std::max(episodes, 0)));
  for (int i = 0; i < episodes; ++i) {
    const Trajectory t = run_episode(env_config, policy,
                                     kEvalSeedBase + static_cast<std::uint64_t>(i),
                                     /*deterministic=*/true);
    out.push_back(episode_stats(t, gamma));
  }
  return out;
}

TrainReport train(const EnvConfig& env_config, const PpoConfig& config,
                  const TrainOptions& options) {
  config.validate();
  const auto start = Clock::now();
  EnvConfig env_cfg = env_config;
  env_cfg.max_episode_steps = config.max_episode_steps;
  PointGoalEnv env(env_cfg);

  std::mt19937_64 rng(config.seed);
  TrainReport report;
  report.policy = nn::GaussianPolicy::make(static_cast<int>(kNumFeatures), 2,
                                           config.hidden, rng);
  Critic critic(config.hidden, rng, config.value_lr);
  std::optional<Critic> cost_critic;
  const bool lagrangian = options.algorithm == Algorithm::kPpoLagrangian;
  if (lagrangian) cost_critic.emplace(config.hidden, rng, config.value_lr);

  dsl::BoundExpr shaping;
  if (options.shaping) {
    try {
      shaping = dsl::BoundExpr(*options.shaping, feature_registry());
    } catch (const std::exception& e) {
      report.failed = true;
      report.failure = e.what();
      report.wall_clock_s = seconds_since(start);
      return report;
    }
  }

  nn::GaussianPolicy& policy = report.policy;
  const std::size_t n_net = policy.mean_net().parameter_count();
  const std::size_t n_all = n_net + 2;
  nn::AdamState policy_adam(n_all, config.policy_lr);
  LagrangeState lagrange = options.lagrange;

  const int epochs = options.stop_after
                         ? std::min(config.epochs, std::max(0, *options.stop_after))
                         : config.epochs;
  RolloutBuffer buf;
  const auto steps = static_cast<std::size_t>(config.steps_per_epoch);

  for (int epoch = 1; epoch <= epochs; ++epoch) {
    buf.clear();
    std::vector<EpisodeAccumulator> finished;
    std::vector<bool> finished_goal, finished_hazard;
    EpisodeAccumulator acc;
    bool touched = false;
    Observation obs = env.reset(rng());

    for (std::size_t t = 0; t < steps; ++t) {
      const Vector o = to_vector(obs);
      const auto sample = policy.sample(o, rng);
      const std::array<double, 2> action{std::clamp(sample.action[0], -1.0, 1.0),
                                         std::clamp(sample.action[1], -1.0, 1.0)};
      const StepResult r = env.step(action);
      const double bonus =
          shaping.empty()
              ? 0.0
              : config.shaping_scale * shaping(std::span<const double>(
                                           r.observation.data(), kNumFeatures));
      buf.observations.push_back(obs);
      buf.actions.push_back({sample.action[0], sample.action[1]});
      buf.log_probs.push_back(sample.log_prob);
      buf.rewards.push_back(r.reward);
      buf.costs.push_back(r.cost);
      buf.shaped_rewards.push_back(r.reward + bonus);
      buf.values.push_back(critic.value(obs));
      if (lagrangian) buf.cost_values.push_back(cost_critic->value(obs));
      acc.ret += r.reward;
      acc.cost += r.cost;
      acc.shaped += r.reward + bonus;
      touched = touched || r.cost > 0.0;
      obs = r.observation;

      const bool epoch_end = t + 1 == steps;
      if (r.done || epoch_end) {
        // Goal is terminal; timeouts and epoch cuts bootstrap from V(s').
        const bool terminal = r.done && r.done_reason == DoneReason::kGoal;
        buf.values.push_back(terminal ? 0.0 : critic.value(obs));
        if (lagrangian) {
          buf.cost_values.push_back(terminal ? 0.0 : cost_critic->value(obs));
        }
        buf.segment_ends.push_back(buf.size());
        if (r.done) {
          finished.push_back(acc);
          finished_goal.push_back(r.done_reason == DoneReason::kGoal);
          finished_hazard.push_back(touched);
        }
        acc = {};
        touched = false;
        if (r.done && !epoch_end) obs = env.reset(rng());
      }
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.episodes = static_cast<int>(finished.size());
    if (!finished.empty()) {
      const double n = static_cast<double>(finished.size());
      for (std::size_t i = 0; i < finished.size(); ++i) {
        stats.avg_return += finished[i].ret / n;
        stats.avg_cost += finished[i].cost / n;
        stats.avg_shaped_return += finished[i].shaped / n;
        stats.tcr += finished_goal[i] ? 1.0 / n : 0.0;
        stats.her += finished_hazard[i] ? 1.0 / n : 0.0;
      }
    }
    if (lagrangian) {
      lagrange = lagrange_update(lagrange, stats.avg_cost);
      stats.lambda = lagrange.lambda;
    }

    GaeResult reward_gae = gae(buf.shaped_rewards, buf.values, buf.segment_ends,
                               config.gamma, config.gae_lambda);
    std::vector<double> advantages = reward_gae.advantages;
    std::optional<GaeResult> cost_gae;
    if (lagrangian) {
      cost_gae = gae(buf.costs, buf.cost_values, buf.segment_ends, config.gamma,
                     config.gae_lambda);
      for (std::size_t i = 0; i < advantages.size(); ++i) {
        advantages[i] =
            mix_advantage(advantages[i], cost_gae->advantages[i], lagrange.lambda);
      }
    }
    normalize(advantages);

    const auto n = static_cast<Eigen::Index>(buf.size());
    Matrix obs_m(static_cast<Eigen::Index>(kNumFeatures), n);
    for (Eigen::Index j = 0; j < n; ++j) {
      for (std::size_t i = 0; i < kNumFeatures; ++i) {
        obs_m(static_cast<Eigen::Index>(i), j) =
            buf.observations[static_cast<std::size_t>(j)][i];
      }
    }

    std::vector<std::size_t> order(buf.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    const auto mb = static_cast<std::size_t>(config.minibatch_size);
    bool kl_stop = false;
    for (int iter = 0; iter < config.update_iters && !kl_stop; ++iter) {
      std::shuffle(order.begin(), order.end(), rng);
      double kl_sum = 0.0;
      for (std::size_t s = 0; s < order.size(); s += mb) {
        const std::size_t e = std::min(order.size(), s + mb);
        const auto b = static_cast<Eigen::Index>(e - s);
        Matrix x(obs_m.rows(), b);
        for (Eigen::Index j = 0; j < b; ++j) {
          x.col(j) = obs_m.col(static_cast<Eigen::Index>(order[s + j]));
        }
        nn::Mlp::Cache cache;
        const Matrix mu = policy.mean_net().forward(x, &cache);
        const Vector& log_std = policy.log_std();
        const Vector inv_var = (-2.0 * log_std.array()).exp();
        Matrix dmu(mu.rows(), b);
        Vector dlog_std = Vector::Zero(2);
        for (Eigen::Index j = 0; j < b; ++j) {
          const std::size_t idx = order[s + j];
          Vector a(2);
          a << buf.actions[idx][0], buf.actions[idx][1];
          const double logp = policy.log_prob(mu.col(j), a);
          const double ratio = std::exp(logp - buf.log_probs[idx]);
          kl_sum += buf.log_probs[idx] - logp;
          const double adv = advantages[idx];
          const double lo = 1.0 - config.clip_ratio;
          const double hi = 1.0 + config.clip_ratio;
          const bool clipped = (adv > 0.0 && ratio > hi) || (adv < 0.0 && ratio < lo);
          // d(-surrogate)/d(logp), averaged over the minibatch.
          const double g = clipped ? 0.0 : -adv * ratio / static_cast<double>(b);
          for (Eigen::Index k = 0; k < 2; ++k) {
            const double diff = a[k] - mu(k, j);
            dmu(k, j) = g * diff * inv_var[k];
            dlog_std[k] += g * (diff * diff * inv_var[k] - 1.0);
          }
        }
        // Entropy bonus: d(-c * H)/d(log_std) = -c.
        dlog_std.array() -= config.entropy_coefficient;
        Vector grads(static_cast<Eigen::Index>(n_all));
        grads.head(static_cast<Eigen::Index>(n_net)) =
            policy.mean_net().backward(cache, dmu);
        grads.tail(2) = dlog_std;
        Vector params(static_cast<Eigen::Index>(n_all));
        params.head(static_cast<Eigen::Index>(n_net)) = policy.mean_net().params();
        params.tail(2) = policy.log_std();
        nn::adam_step(policy_adam, params, grads);
        policy.mean_net().params() = params.head(static_cast<Eigen::Index>(n_net));
        policy.log_std() = params.tail(2);
        policy.clamp_log_std();
      }
      if (kl_sum / static_cast<double>(order.size()) > 1.5 * config.target_kl) {
        kl_stop = true;
      }
    }
    for (int iter = 0; iter < config.update_iters; ++iter) {
      std::shuffle(order.begin(), order.end(), rng);
      critic.fit(obs_m, reward_gae.returns, order, config.minibatch_size);
      if (lagrangian) {
        cost_critic->fit(obs_m, cost_gae->returns, order, config.minibatch_size);
      }
    }

    stats.wall_clock_s = seconds_since(start);
    report.epochs.push_back(stats);
  }
  report.wall_clock_s = seconds_since(start);
  return report;
}

void write_report_csv(const TrainReport& report,
                      const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os.precision(17);
  os << "epoch,avg_return,avg_cost,avg_shaped_return,episodes,tcr,her,"
        "wall_clock_s\n";
  for (const auto& e : report.epochs) {
    os << e.epoch << ',' << e.avg_return << ',' << e.avg_cost << ','
       << e.avg_shaped_return << ',' << e.episodes << ',' << e.tcr << ','
       << e.her << ',' << e.wall_clock_s << '\n';
  }
}

}  // namespace e2cfd::ppo
