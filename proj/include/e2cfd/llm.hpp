#ifndef E2CFD_LLM_HPP_
#define E2CFD_LLM_HPP_

#include <chrono>
#include <filesystem>
#include <functional>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "e2cfd/cmdp.hpp"
#include "e2cfd/dsl.hpp"
#include "e2cfd/env.hpp"
#include "e2cfd/fpe.hpp"

namespace e2cfd::llm {

// Everything the generator is told about the task. Rendering is a pure
// function of this struct.
struct PromptBundle {
  std::string task_description;
  std::string safety_requirement;
  std::string original_functions;
  std::optional<std::string> best_so_far;
  std::vector<std::string> feature_registry;
  std::string grammar_summary;
};

std::string describe(const SafetyRequirement& req);

PromptBundle make_bundle(const EnvConfig& env, const SafetyRequirement& req,
                         const std::optional<dsl::CostExpr>& best_so_far);

// Throws std::invalid_argument if a mandatory section is empty.
std::string render_generation_prompt(const PromptBundle& bundle, int k);
std::string render_score_prompt(const PromptBundle& bundle);

inline constexpr const char* kSystemPrompt =
    "You design cost functions for safe reinforcement learning. Answer only "
    "with fenced code blocks written in the expression language described by "
    "the user.";

// Contents of every ``` fenced block, in order (an info string after the
// opening fence is dropped).
std::vector<std::string> extract_code_blocks(std::string_view response);

class EndpointError : public std::runtime_error {
 public:
  enum class Kind {
    kUnavailable,
    kTimeout,
    kAuth,
    kRetryExhausted,
    kProtocol,
    kEmptyGeneration,
    kMockExhausted,
  };
  EndpointError(Kind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

struct LlmEndpointConfig {
  std::string base_url = "http://127.0.0.1:8000/v1";
  std::string api_key;
  std::string model = "gpt-4";
  double temperature = 0.7;
  std::chrono::milliseconds timeout{60000};
  int max_retries = 3;
  std::chrono::milliseconds backoff_base{500};

  // Overrides fields from E2CFD_LLM_BASE_URL / E2CFD_LLM_API_KEY /
  // E2CFD_LLM_MODEL when set.
  void apply_environment();
  void validate() const;
};

struct ChatRequest {
  std::string system;
  std::string user;
  double temperature = 0.7;
};

class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  virtual std::string chat(const ChatRequest& request) = 0;
};

// POST {base}/chat/completions with bearer auth. Retries 429, 5xx and
// transport failures with exponential backoff.
class HttpChatBackend : public ChatBackend {
 public:
  using Sleeper = std::function<void(std::chrono::milliseconds)>;

  explicit HttpChatBackend(LlmEndpointConfig config, Sleeper sleeper = {});
  std::string chat(const ChatRequest& request) override;

  int attempts_made() const { return attempts_; }

 private:
  LlmEndpointConfig config_;
  Sleeper sleep_;
  int attempts_ = 0;
};

// Replays fixture files in order, one per chat() call. Exhaustion throws
// EndpointError(kMockExhausted).
class MockChatBackend : public ChatBackend {
 public:
  explicit MockChatBackend(std::vector<std::string> responses);
  // Loads every regular file in `dir`, ordered by the leading number in the
  // file name (ties and unnumbered files ordered by name).
  static MockChatBackend from_directory(const std::filesystem::path& dir);

  std::string chat(const ChatRequest& request) override;

  std::size_t cursor() const;
  std::size_t size() const { return responses_.size(); }
  std::vector<ChatRequest> requests() const;

 private:
  std::vector<std::string> responses_;
  mutable std::mutex mu_;
  std::size_t cursor_ = 0;
  std::vector<ChatRequest> requests_;
};

// Up to k candidate texts; fewer if the model under-delivers. Throws
// EndpointError(kEmptyGeneration) if no fenced block is present.
std::vector<std::string> generate_candidates(ChatBackend& backend,
                                             const PromptBundle& bundle, int k,
                                             double temperature = 0.7);

struct ScoreGeneration {
  fpe::ScoreExpr expr = fpe::ScoreExpr::builtin();
  std::string text;
  bool fell_back = false;
  std::string note;
};

// Falls back to the built-in fitness expression when the response has no
// valid expression over the score registry.
ScoreGeneration generate_score_expr(ChatBackend& backend, const PromptBundle& bundle,
                                    double temperature = 0.7);

}  // namespace e2cfd::llm

#endif  // E2CFD_LLM_HPP_
