#include "e2cfd/fpe.hpp"

#include <chrono>
#include <stdexcept>

#include "e2cfd/metrics.hpp"

namespace e2cfd::fpe {

bool MetricsAggregate::same_statistics(const MetricsAggregate& o) const {
  return avg_return == o.avg_return && avg_cost == o.avg_cost && tcr == o.tcr &&
         her == o.her && episodes == o.episodes;
}

MetricsAggregate aggregate(std::span<const EpisodeStats> episodes,
                           double wall_clock_s) {
  MetricsAggregate m;
  m.episodes = static_cast<int>(episodes.size());
  m.wall_clock_s = wall_clock_s;
  if (episodes.empty()) return m;
  for (const auto& e : episodes) {
    m.avg_return += e.j_r;
    m.avg_cost += e.j_c;
  }
  m.avg_return /= static_cast<double>(episodes.size());
  m.avg_cost /= static_cast<double>(episodes.size());
  const auto rates = metrics::compute_rates(episodes);
  m.tcr = rates.tcr;
  m.her = rates.her;
  return m;
}

const std::vector<std::string>& score_registry() {
  static const std::vector<std::string> names = {"avg_return", "avg_cost", "tcr",
                                                 "her",        "d",        "n"};
  return names;
}

ScoreExpr::ScoreExpr(dsl::CostExpr expr) : expr_(std::move(expr)) {
  if (expr_.empty()) throw std::invalid_argument("empty score expression");
  for (const auto& name : dsl::free_features(expr_)) {
    bool known = false;
    for (const auto& r : score_registry()) known = known || r == name;
    if (!known) {
      throw std::invalid_argument("score expression uses unknown name '" + name +
                                  "'");
    }
  }
}

ScoreExpr ScoreExpr::builtin() {
  return ScoreExpr(dsl::parse_or_throw(kBuiltinScoreText));
}

double score(const MetricsAggregate& m, const ScoreExpr& expr, double d,
             double n) {
  const dsl::FeatureMap bindings = {{"avg_return", m.avg_return},
                                    {"avg_cost", m.avg_cost},
                                    {"tcr", m.tcr},
                                    {"her", m.her},
                                    {"d", d},
                                    {"n", n}};
  return dsl::evaluate(expr.expr(), bindings);
}

FpeResult fpe_run(const dsl::CostExpr& candidate, const EvalPhase& phase,
                  const EnvConfig& env_config, const ppo::PpoConfig& ppo_config,
                  std::uint64_t seed) {
  if (phase.eval_episodes < 1) {
    throw std::invalid_argument("eval_episodes must be >= 1");
  }
  const auto start = std::chrono::steady_clock::now();
  ppo::PpoConfig cfg = ppo_config;
  cfg.seed = seed;
  cfg.epochs = std::max(cfg.epochs, phase.epochs);
  ppo::TrainOptions opts;
  opts.shaping = candidate;
  opts.stop_after = phase.epochs;

  FpeResult out;
  ppo::TrainReport report = ppo::train(env_config, cfg, opts);
  if (report.failed) {
    out.failed = true;
    out.failure = report.failure;
    out.metrics.wall_clock_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
            .count();
    return out;
  }
  EnvConfig eval_env = env_config;
  eval_env.max_episode_steps = ppo_config.max_episode_steps;
  out.episodes = ppo::evaluate_policy(eval_env, report.policy, phase.eval_episodes,
                                      ppo_config.gamma);
  out.curve = std::move(report.epochs);
  out.policy = std::move(report.policy);
  out.metrics = aggregate(
      out.episodes,
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
          .count());
  return out;
}

}  // namespace e2cfd::fpe
