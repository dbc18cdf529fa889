#ifndef E2CFD_FPE_HPP_
#define E2CFD_FPE_HPP_

#include <atomic>
#include <cstdint>
#include <exception>
#include <functional>
#include <string>
#include <thread>
#include <vector>

#include "e2cfd/cmdp.hpp"
#include "e2cfd/dsl.hpp"
#include "e2cfd/env.hpp"
#include "e2cfd/ppo.hpp"

// Fast performance evaluation: truncated training under a candidate cost
// function, followed by deterministic evaluation rollouts and scoring.
namespace e2cfd::fpe {

struct EvalPhase {
  std::string label;  // "early" or "late"
  int epochs = 0;
  int eval_episodes = 20;
};

struct MetricsAggregate {
  double avg_return = 0.0;  // mean discounted raw-reward return
  double avg_cost = 0.0;    // mean discounted cost
  double tcr = 0.0;
  double her = 0.0;
  int episodes = 0;
  double wall_clock_s = 0.0;

  // Equality of everything except the wall clock.
  bool same_statistics(const MetricsAggregate& other) const;
};

MetricsAggregate aggregate(std::span<const EpisodeStats> episodes,
                           double wall_clock_s);

// {avg_return, avg_cost, tcr, her, d, n}
const std::vector<std::string>& score_registry();

inline constexpr const char* kBuiltinScoreText = "if(avg_cost > d, 0 - n, avg_return)";

// A cost expression validated against score_registry().
class ScoreExpr {
 public:
  // Throws std::invalid_argument if the expression uses other names.
  explicit ScoreExpr(dsl::CostExpr expr);
  static ScoreExpr builtin();

  const dsl::CostExpr& expr() const { return expr_; }

 private:
  dsl::CostExpr expr_;
};

double score(const MetricsAggregate& metrics, const ScoreExpr& expr, double d,
             double n);

struct FpeResult {
  MetricsAggregate metrics;
  std::vector<EpisodeStats> episodes;
  std::vector<ppo::EpochStats> curve;
  nn::GaussianPolicy policy;
  bool failed = false;
  std::string failure;
};

// Trains a fresh policy for phase.epochs with the candidate as reward shaping,
// then evaluates the policy mean on phase.eval_episodes fixed spawns with
// shaping disabled. A candidate that cannot be evaluated returns failed = true.
FpeResult fpe_run(const dsl::CostExpr& candidate, const EvalPhase& phase,
                  const EnvConfig& env_config, const ppo::PpoConfig& ppo_config,
                  std::uint64_t seed);

// Runs job(i) for i in [0, count) on `workers` threads and returns the
// results in index order. The first exception thrown by a job is rethrown.
template <typename Result>
std::vector<Result> parallel_map(std::size_t count, int workers,
                                 const std::function<Result(std::size_t)>& job) {
  std::vector<Result> results(count);
  if (workers <= 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) results[i] = job(i);
    return results;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::atomic<bool> has_error{false};
  std::vector<std::thread> threads;
  const auto n = std::min<std::size_t>(static_cast<std::size_t>(workers), count);
  for (std::size_t w = 0; w < n; ++w) {
    threads.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) {
        try {
          results[i] = job(i);
        } catch (...) {
          if (!has_error.exchange(true)) error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : threads) t.join();
  if (error) std::rethrow_exception(error);
  return results;
}

}  // namespace e2cfd::fpe

#endif  // E2CFD_FPE_HPP_
