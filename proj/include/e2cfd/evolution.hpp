#ifndef E2CFD_EVOLUTION_HPP_
#define E2CFD_EVOLUTION_HPP_

#include <filesystem>
#include <limits>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "e2cfd/config.hpp"
#include "e2cfd/dsl.hpp"
#include "e2cfd/ecf.hpp"
#include "e2cfd/fpe.hpp"
#include "e2cfd/llm.hpp"

namespace e2cfd::evolution {

// Shift by the minimum and divide by the shifted sum; all-equal scores give
// uniform weights. Throws std::invalid_argument on empty or non-finite input.
std::vector<double> normalize_scores(std::span<const double> scores);

struct BestRecord {
  std::optional<dsl::CostExpr> f_w_best;
  double p_best = -std::numeric_limits<double>::infinity();
  int iteration = 0;
  std::vector<std::string> components;
  std::optional<fpe::MetricsAggregate> metrics;
};

class NoViableCandidate : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Writer for a run directory:
//   run.json  candidates/<id>.cost  candidates/<id>.json  metrics.csv  curves.csv
//   best.cost  best_policy.bin  audit.log  state.json
class RunStore {
 public:
  explicit RunStore(std::filesystem::path dir);

  const std::filesystem::path& dir() const { return dir_; }
  void write_config(const nlohmann::json& config);
  void save_candidate(const ecf::CandidateRecord& record);
  // Appends one JSON line; "seq" is added.
  void audit(nlohmann::json event);
  void append_metrics(int iteration, const std::string& candidate,
                      const std::string& phase, int epochs,
                      const fpe::MetricsAggregate& m, double score);
  // Per-epoch training curve of one FPE run, appended to curves.csv.
  void append_curve(const std::string& candidate, const std::string& phase,
                    std::span<const ppo::EpochStats> curve);
  void write_best(const dsl::CostExpr& expr);
  void write_state(const nlohmann::json& state);

 private:
  std::filesystem::path dir_;
  std::mutex mu_;
  long long seq_ = 0;
};

// Reads every `.cost` file and requires each to pass the syntax check.
std::vector<std::string> load_seed_library(
    std::span<const std::filesystem::path> paths, const EnvConfig& env);

struct IterationSummary {
  int iteration = 0;
  std::vector<std::string> candidate_ids;
  std::vector<std::string> approved_ids;
  std::vector<double> scores;
  std::vector<double> weights;
  std::optional<std::string> weighted_id;
  std::optional<double> p_tmp;
  bool skipped = false;
};

struct EvolutionResult {
  BestRecord best;
  std::vector<IterationSummary> iterations;
  std::string score_expr;
  double wall_clock_s = 0.0;
};

class Evolution {
 public:
  // `backend` may be null when the generator is disabled. `store` may be
  // null for in-memory runs.
  Evolution(RunConfig config, llm::ChatBackend* backend, ecf::Reviewer& reviewer,
            RunStore* store);

  // Throws NoViableCandidate when no iteration produced an approved candidate.
  EvolutionResult run();

 private:
  std::vector<ecf::CandidateRecord> population(int iteration,
                                               const BestRecord& best);
  fpe::ScoreExpr resolve_score_expr();
  void audit(nlohmann::json event);
  void transition(const ecf::CandidateRecord& r);

  RunConfig config_;
  llm::ChatBackend* backend_;
  ecf::Reviewer& reviewer_;
  RunStore* store_;
  std::vector<std::string> seeds_;
};

nlohmann::json to_json(const BestRecord& best);

// Chat backend selected by llm.mode; null when the generator is disabled and
// the score expression does not need one. Throws ConfigError.
std::unique_ptr<llm::ChatBackend> make_backend(const RunConfig& config);

}  // namespace e2cfd::evolution

#endif  // E2CFD_EVOLUTION_HPP_
