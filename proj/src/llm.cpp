#include "e2cfd/llm.hpp"

#include <algorithm>
#include <cstdlib>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "e2cfd/metrics.hpp"

namespace e2cfd::llm {

namespace {

std::string fmt(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

constexpr const char* kGrammar =
    "expr := term (('+'|'-') term)*\n"
    "term := factor (('*'|'/') factor)*\n"
    "factor := '-'? atom\n"
    "atom := number | feature | fn '(' args ')' | '(' expr ')'\n"
    "      | 'if' '(' expr cmp expr ',' expr ',' expr ')'\n"
    "fn := abs | exp | log | sqrt | tanh | step (one argument), min | max (two),\n"
    "      clip(value, lo, hi)\n"
    "cmp := < | <= | > | >= | ==\n"
    "Division, log and sqrt are guarded against zero; no other names exist.";

}  // namespace

std::string describe(const SafetyRequirement& req) {
  switch (req.kind) {
    case SafetyRequirement::Kind::kTraditional:
      return "Traditional: the expected discounted cumulative hazard cost must "
             "stay at or below d = " + fmt(req.d) + ".";
    case SafetyRequirement::Kind::kZeroViolation:
      return "Zero violation: the robot must never enter a hazard (expected "
             "discounted cumulative cost 0).";
    case SafetyRequirement::Kind::kAlmostSurely:
      return "Almost surely: at most a fraction epsilon = " + fmt(req.epsilon) +
             " of episodes may accumulate discounted cost above d = " +
             fmt(req.d) + ".";
  }
  return {};
}

PromptBundle make_bundle(const EnvConfig& env, const SafetyRequirement& req,
                         const std::optional<dsl::CostExpr>& best_so_far) {
  PromptBundle b;
  std::ostringstream task;
  task << "A point robot moves in a square arena of half-width "
       << env.arena_half_extent << " m centered at the origin. It controls its "
       << "2-D acceleration (actions in [-1, 1]^2, speed capped at "
       << env.max_speed << " m/s). The goal is a circle of radius "
       << env.goal.radius << " at (" << env.goal.center[0] << ", "
       << env.goal.center[1] << "); the episode ends when the robot reaches it "
       << "or after " << env.max_episode_steps << " steps. The robot starts at "
       << "a random free position. " << env.hazards.size()
       << " fixed hazard circles lie in the arena:";
  for (const auto& h : env.hazards) {
    task << " (center (" << h.center[0] << ", " << h.center[1] << "), radius "
         << h.radius << ")";
  }
  task << ". Task objective: reach the goal in as many episodes as possible "
          "while avoiding the hazards.";
  b.task_description = task.str();
  b.safety_requirement = describe(req);
  b.original_functions =
      "reward = " + fmt(env.progress_coefficient) +
      " * (previous dist_goal - dist_goal) + " + fmt(env.goal_bonus) +
      " on reaching the goal\n"
      "original cost = in_hazard (1 inside a hazard circle, else 0)\n"
      "The generated cost function is added to the reward at every step, so "
      "penalties must be negative.";
  if (best_so_far) b.best_so_far = dsl::pretty(*best_so_far);
  b.feature_registry = feature_registry();
  b.grammar_summary = kGrammar;
  return b;
}

namespace {

void require_sections(const PromptBundle& b) {
  if (b.task_description.empty() || b.safety_requirement.empty() ||
      b.original_functions.empty()) {
    throw std::invalid_argument(
        "prompt bundle needs task, safety requirement and original functions");
  }
}

void render_common(std::ostringstream& os, const PromptBundle& b) {
  os << "## Task description\n" << b.task_description << "\n\n";
  os << "## Safety requirement\n" << b.safety_requirement << "\n\n";
  os << "## Original reward and cost functions\n" << b.original_functions << "\n\n";
  os << "## Features\n";
  for (std::size_t i = 0; i < b.feature_registry.size(); ++i) {
    os << (i ? ", " : "") << b.feature_registry[i];
  }
  os << "\n\n## Expression language\n" << b.grammar_summary << "\n\n";
}

}  // namespace

std::string render_generation_prompt(const PromptBundle& b, int k) {
  require_sections(b);
  std::ostringstream os;
  render_common(os, b);
  if (b.best_so_far) {
    os << "## Best weighted cost function so far\n" << *b.best_so_far << "\n\n";
  }
  os << "## Instructions\nWrite " << k << " different cost functions, each in "
     << "its own fenced code block containing a single expression.";
  if (b.best_so_far) os << " Try to improve on the best function above.";
  os << '\n';
  return os.str();
}

std::string render_score_prompt(const PromptBundle& b) {
  require_sections(b);
  std::ostringstream os;
  render_common(os, b);
  os << "## Instructions\nWrite one fitness score expression in a fenced code "
        "block. It may only use the names avg_return, avg_cost, tcr, her, d and "
        "n (a large positive penalty). Higher scores must mean better policies.\n";
  return os.str();
}

std::vector<std::string> extract_code_blocks(std::string_view response) {
  std::vector<std::string> blocks;
  std::size_t pos = 0;
  while (true) {
    const std::size_t open = response.find("```", pos);
    if (open == std::string_view::npos) break;
    std::size_t body = response.find('\n', open + 3);
    if (body == std::string_view::npos) break;
    ++body;
    const std::size_t close = response.find("```", body);
    if (close == std::string_view::npos) break;
    std::string text(response.substr(body, close - body));
    const auto first = text.find_first_not_of(" \t\r\n");
    const auto last = text.find_last_not_of(" \t\r\n");
    blocks.push_back(first == std::string::npos ? std::string()
                                                : text.substr(first, last - first + 1));
    pos = close + 3;
  }
  return blocks;
}

void LlmEndpointConfig::apply_environment() {
  if (const char* v = std::getenv("E2CFD_LLM_BASE_URL"); v && *v) base_url = v;
  if (const char* v = std::getenv("E2CFD_LLM_API_KEY"); v && *v) api_key = v;
  if (const char* v = std::getenv("E2CFD_LLM_MODEL"); v && *v) model = v;
}

void LlmEndpointConfig::validate() const {
  if (max_retries < 0) throw std::invalid_argument("llm.max_retries must be >= 0");
  if (timeout.count() <= 0) throw std::invalid_argument("llm.timeout must be > 0");
  // Built without TLS.
  if (base_url.rfind("https://", 0) == 0) {
    throw std::invalid_argument("llm.base_url: https is not supported; use an http:// endpoint or a local proxy");
  }
  if (base_url.rfind("http://", 0) != 0) {
    throw std::invalid_argument("llm.base_url must start with http://");
  }
}

HttpChatBackend::HttpChatBackend(LlmEndpointConfig config, Sleeper sleeper)
    : config_(std::move(config)), sleep_(std::move(sleeper)) {
  config_.validate();
  if (!sleep_) sleep_ = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
}

std::string HttpChatBackend::chat(const ChatRequest& request) {
  // Split "scheme://host[:port][/prefix]".
  const std::size_t scheme_end = config_.base_url.find("://") + 3;
  const std::size_t path_start = config_.base_url.find('/', scheme_end);
  const std::string origin = config_.base_url.substr(0, path_start);
  std::string prefix =
      path_start == std::string::npos ? "" : config_.base_url.substr(path_start);
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
  const std::string path = (prefix.size() >= 3 && prefix.ends_with("/v1"))
                               ? prefix + "/chat/completions"
                               : prefix + "/v1/chat/completions";

  const nlohmann::json body = {
      {"model", config_.model},
      {"temperature", request.temperature},
      {"messages",
       {{{"role", "system"}, {"content", request.system}},
        {{"role", "user"}, {"content", request.user}}}}};
  const std::string payload = body.dump();

  httplib::Client client(origin);
  const auto secs = config_.timeout.count() / 1000;
  const auto usecs = (config_.timeout.count() % 1000) * 1000;
  client.set_connection_timeout(secs, usecs);
  client.set_read_timeout(secs, usecs);
  client.set_write_timeout(secs, usecs);
  httplib::Headers headers;
  if (!config_.api_key.empty()) {
    headers.emplace("Authorization", "Bearer " + config_.api_key);
  }

  attempts_ = 0;
  std::string last_problem;
  bool last_was_timeout = false;
  bool last_was_transport = false;
  for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
    if (attempt > 0) sleep_(config_.backoff_base * (1LL << (attempt - 1)));
    ++attempts_;
    auto res = client.Post(path, headers, payload, "application/json");
    if (!res) {
      const auto err = res.error();
      last_was_timeout = err == httplib::Error::Read || err == httplib::Error::Write ||
                         err == httplib::Error::ConnectionTimeout;
      last_was_transport = true;
      last_problem = httplib::to_string(err);
      continue;
    }
    last_was_transport = false;
    last_was_timeout = false;
    const int status = res->status;
    if (status == 401 || status == 403) {
      throw EndpointError(EndpointError::Kind::kAuth,
                          "LLM endpoint rejected credentials (HTTP " +
                              std::to_string(status) + ")");
    }
    if (status == 429 || status >= 500) {
      last_problem = "HTTP " + std::to_string(status);
      continue;
    }
    if (status != 200) {
      throw EndpointError(EndpointError::Kind::kProtocol,
                          "unexpected HTTP " + std::to_string(status));
    }
    try {
      const auto j = nlohmann::json::parse(res->body);
      return j.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const std::exception& e) {
      throw EndpointError(EndpointError::Kind::kProtocol,
                          std::string("malformed chat completion body: ") + e.what());
    }
  }
  if (last_was_timeout) {
    throw EndpointError(EndpointError::Kind::kTimeout,
                        "LLM endpoint timed out: " + last_problem);
  }
  if (last_was_transport) {
    throw EndpointError(EndpointError::Kind::kUnavailable,
                        "LLM endpoint unavailable: " + last_problem);
  }
  throw EndpointError(EndpointError::Kind::kRetryExhausted,
                      "LLM endpoint kept failing after " +
                          std::to_string(attempts_) + " attempts: " + last_problem);
}

MockChatBackend::MockChatBackend(std::vector<std::string> responses)
    : responses_(std::move(responses)) {}

MockChatBackend MockChatBackend::from_directory(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) {
    throw std::runtime_error("mock fixture directory not found: " + dir.string());
  }
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file()) files.push_back(entry.path());
  }
  auto leading = [](const std::filesystem::path& p) {
    const std::string name = p.filename().string();
    std::size_t i = 0;
    while (i < name.size() && std::isdigit(static_cast<unsigned char>(name[i]))) ++i;
    return i == 0 ? std::numeric_limits<long long>::max()
                  : std::stoll(name.substr(0, std::min<std::size_t>(i, 18)));
  };
  std::sort(files.begin(), files.end(), [&](const auto& a, const auto& b) {
    const auto na = leading(a);
    const auto nb = leading(b);
    return na != nb ? na < nb : a.filename() < b.filename();
  });
  std::vector<std::string> responses;
  for (const auto& f : files) responses.push_back(metrics::read_text(f));
  return MockChatBackend(std::move(responses));
}

std::string MockChatBackend::chat(const ChatRequest& request) {
  std::lock_guard lock(mu_);
  requests_.push_back(request);
  if (cursor_ >= responses_.size()) {
    throw EndpointError(EndpointError::Kind::kMockExhausted,
                        "mock LLM script exhausted after " +
                            std::to_string(responses_.size()) + " responses");
  }
  return responses_[cursor_++];
}

std::size_t MockChatBackend::cursor() const {
  std::lock_guard lock(mu_);
  return cursor_;
}

std::vector<ChatRequest> MockChatBackend::requests() const {
  std::lock_guard lock(mu_);
  return requests_;
}

std::vector<std::string> generate_candidates(ChatBackend& backend,
                                             const PromptBundle& bundle, int k,
                                             double temperature) {
  if (k < 1) throw std::invalid_argument("generate_candidates: k must be >= 1");
  const std::string reply =
      backend.chat({kSystemPrompt, render_generation_prompt(bundle, k), temperature});
  auto blocks = extract_code_blocks(reply);
  if (blocks.empty()) {
    throw EndpointError(EndpointError::Kind::kEmptyGeneration,
                        "response contained no fenced code block");
  }
  if (blocks.size() > static_cast<std::size_t>(k)) {
    blocks.resize(static_cast<std::size_t>(k));
  }
  return blocks;
}

ScoreGeneration generate_score_expr(ChatBackend& backend, const PromptBundle& bundle,
                                    double temperature) {
  ScoreGeneration out;
  const std::string reply =
      backend.chat({kSystemPrompt, render_score_prompt(bundle), temperature});
  const auto blocks = extract_code_blocks(reply);
  if (blocks.empty()) {
    out.fell_back = true;
    out.note = "no fenced block in score response; using built-in fitness";
    out.text = fpe::kBuiltinScoreText;
    return out;
  }
  out.text = blocks.front();
  const auto parsed = dsl::parse(out.text);
  if (!parsed) {
    out.fell_back = true;
    out.note = "score expression does not parse (" + parsed.error().message() +
               "); using built-in fitness";
    return out;
  }
  try {
    out.expr = fpe::ScoreExpr(parsed.expr());
  } catch (const std::invalid_argument& e) {
    out.fell_back = true;
    out.note = std::string(e.what()) + "; using built-in fitness";
  }
  return out;
}

}  // namespace e2cfd::llm
