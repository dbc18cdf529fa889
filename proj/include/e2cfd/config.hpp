#ifndef E2CFD_CONFIG_HPP_
#define E2CFD_CONFIG_HPP_

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "e2cfd/cmdp.hpp"
#include "e2cfd/env.hpp"
#include "e2cfd/llm.hpp"
#include "e2cfd/ppo.hpp"

namespace e2cfd {

inline constexpr int kConfigSchemaVersion = 1;

struct EvolutionSettings {
  int iterations = 2;        // N
  int population = 4;        // K
  int t1 = 5;                // early-phase epochs
  int t2 = 20;               // late-phase epochs
  int eval_episodes = 20;    // M
  bool llm_enabled = true;
  std::vector<std::filesystem::path> seed_library;
  std::string score_expr = "builtin";  // "builtin", "llm" or an expression
  int workers = 1;
  int lint_probes = 64;
  double lint_margin = 0.0;
  std::uint64_t seed = 0;
};

struct LlmSettings {
  std::string mode = "mock";  // "live" or "mock"
  llm::LlmEndpointConfig endpoint;
  std::filesystem::path fixtures;
};

struct SafetySettings {
  SafetyRequirement requirement = SafetyRequirement::traditional(10.0);
  double n = kDefaultPenalty;
};

struct OutputSettings {
  std::filesystem::path dir = "runs";
  std::string run_id = "run";

  std::filesystem::path run_dir() const { return dir / run_id; }
};

struct ReviewSettings {
  std::string mode = "auto";  // "auto", "interactive" or "remote"
  double timeout_s = 600.0;
  bool fallback_to_auto = true;
};

struct RunConfig {
  EnvConfig env;
  ppo::PpoConfig ppo;
  ppo::LagrangeState lagrange;  // lambda is the initial multiplier
  EvolutionSettings evolution;
  LlmSettings llm;
  SafetySettings safety;
  OutputSettings output;
  ReviewSettings review;
};

// Carries every schema diagnostic found while loading.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(std::vector<std::string> diagnostics);
  const std::vector<std::string>& diagnostics() const { return diagnostics_; }

 private:
  std::vector<std::string> diagnostics_;
};

// Relative paths are resolved against `base_dir`.
RunConfig config_from_json(const nlohmann::json& j,
                           const std::filesystem::path& base_dir = {});
RunConfig load_config(const std::filesystem::path& path);

// Fully resolved echo; config_from_json(config_to_json(c)) reproduces c.
nlohmann::json config_to_json(const RunConfig& config);

}  // namespace e2cfd

#endif  // E2CFD_CONFIG_HPP_
