#include "e2cfd/config.hpp"

#include <fstream>
#include <set>

namespace e2cfd {

using nlohmann::json;

ConfigError::ConfigError(std::vector<std::string> diagnostics)
    : std::runtime_error([&] {
        std::string m = "invalid configuration:";
        for (const auto& d : diagnostics) m += "\n  " + d;
        return m;
      }()),
      diagnostics_(std::move(diagnostics)) {}

namespace {

// Reads one JSON object section, recording type errors and unknown keys.
class Section {
 public:
  Section(const json& root, std::string name, std::vector<std::string>& diags)
      : name_(std::move(name)), diags_(diags) {
    if (!root.contains(name_)) return;
    const json& s = root.at(name_);
    if (!s.is_object()) {
      diags_.push_back(name_ + ": expected an object");
      return;
    }
    obj_ = &s;
  }
  Section(const json* obj, std::string name, std::vector<std::string>& diags)
      : obj_(obj), name_(std::move(name)), diags_(diags) {}

  ~Section() {
    if (!obj_) return;
    for (const auto& [key, value] : obj_->items()) {
      if (!seen_.count(key)) diags_.push_back(name_ + "." + key + ": unknown key");
    }
  }

  const json* raw(const std::string& key) {
    seen_.insert(key);
    if (!obj_ || !obj_->contains(key)) return nullptr;
    return &obj_->at(key);
  }

  void number(const std::string& key, double& out) {
    if (const json* v = raw(key)) {
      if (v->is_number()) {
        out = v->get<double>();
      } else {
        diags_.push_back(path(key) + ": expected a number");
      }
    }
  }

  template <typename Int>
  void integer(const std::string& key, Int& out) {
    if (const json* v = raw(key)) {
      if (v->is_number_integer()) {
        out = v->get<Int>();
      } else {
        diags_.push_back(path(key) + ": expected an integer");
      }
    }
  }

  void boolean(const std::string& key, bool& out) {
    if (const json* v = raw(key)) {
      if (v->is_boolean()) {
        out = v->get<bool>();
      } else {
        diags_.push_back(path(key) + ": expected a boolean");
      }
    }
  }

  void string(const std::string& key, std::string& out,
              std::initializer_list<const char*> allowed = {}) {
    if (const json* v = raw(key)) {
      if (!v->is_string()) {
        diags_.push_back(path(key) + ": expected a string");
        return;
      }
      const auto s = v->get<std::string>();
      if (allowed.size() > 0) {
        bool ok = false;
        for (const char* a : allowed) ok = ok || s == a;
        if (!ok) {
          std::string list;
          for (const char* a : allowed) list += std::string(list.empty() ? "" : "|") + a;
          diags_.push_back(path(key) + ": expected one of " + list);
          return;
        }
      }
      out = s;
    }
  }

  std::string path(const std::string& key) const { return name_ + "." + key; }
  std::vector<std::string>& diags() { return diags_; }

 private:
  const json* obj_ = nullptr;
  std::string name_;
  std::vector<std::string>& diags_;
  std::set<std::string> seen_;
};

std::filesystem::path resolve(const std::filesystem::path& base,
                              const std::filesystem::path& p) {
  if (p.empty() || p.is_absolute() || base.empty()) return p;
  return (base / p).lexically_normal();
}

bool read_vec2(const json& v, Vec2& out) {
  if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number()) {
    return false;
  }
  out = {v[0].get<double>(), v[1].get<double>()};
  return true;
}

void read_circle(const json& v, const std::string& where, Circle& out,
                 std::vector<std::string>& diags) {
  if (!v.is_object()) {
    diags.push_back(where + ": expected an object with center and radius");
    return;
  }
  Section s(&v, where, diags);
  if (const json* c = s.raw("center"); c && !read_vec2(*c, out.center)) {
    diags.push_back(where + ".center: expected [x, y]");
  }
  s.number("radius", out.radius);
}

}  // namespace

RunConfig config_from_json(const json& j, const std::filesystem::path& base_dir) {
  std::vector<std::string> diags;
  RunConfig c;
  if (!j.is_object()) throw ConfigError({"configuration root must be an object"});
  {
    Section root(&j, "config", diags);
    int version = 0;
    if (!j.contains("schema_version")) {
      diags.push_back("schema_version: missing");
    }
    root.integer("schema_version", version);
    if (j.contains("schema_version") && version != kConfigSchemaVersion) {
      diags.push_back("schema_version: expected " +
                      std::to_string(kConfigSchemaVersion));
    }
    for (const char* key :
         {"env", "ppo", "evolution", "llm", "safety", "output", "review"}) {
      root.raw(key);
    }
  }

  {
    Section s(j, "env", diags);
    s.number("arena_half_extent", c.env.arena_half_extent);
    if (const json* hz = s.raw("hazards")) {
      if (!hz->is_array()) {
        diags.push_back("env.hazards: expected an array");
      } else {
        c.env.hazards.clear();
        for (std::size_t i = 0; i < hz->size(); ++i) {
          Circle circle;
          read_circle((*hz)[i], "env.hazards[" + std::to_string(i) + "]", circle, diags);
          c.env.hazards.push_back(circle);
        }
      }
    }
    if (const json* g = s.raw("goal")) read_circle(*g, "env.goal", c.env.goal, diags);
    s.number("dt", c.env.dt);
    s.number("accel_gain", c.env.accel_gain);
    s.number("max_speed", c.env.max_speed);
    s.number("goal_bonus", c.env.goal_bonus);
    s.number("progress_coefficient", c.env.progress_coefficient);
  }

  {
    Section s(j, "ppo", diags);
    auto& p = c.ppo;
    s.integer("epochs", p.epochs);
    s.integer("steps_per_epoch", p.steps_per_epoch);
    s.integer("max_episode_steps", p.max_episode_steps);
    s.number("gamma", p.gamma);
    s.number("gae_lambda", p.gae_lambda);
    s.number("clip_ratio", p.clip_ratio);
    s.number("policy_lr", p.policy_lr);
    s.number("value_lr", p.value_lr);
    s.integer("update_iters", p.update_iters);
    s.integer("minibatch_size", p.minibatch_size);
    s.number("entropy_coefficient", p.entropy_coefficient);
    s.number("target_kl", p.target_kl);
    s.number("shaping_scale", p.shaping_scale);
    s.integer("seed", p.seed);
    s.number("lagrange_initial", c.lagrange.lambda);
    s.number("lagrange_lr", c.lagrange.lambda_lr);
    if (const json* h = s.raw("hidden")) {
      if (!h->is_array()) {
        diags.push_back("ppo.hidden: expected an array of integers");
      } else {
        p.hidden.clear();
        for (const auto& v : *h) {
          if (!v.is_number_integer()) {
            diags.push_back("ppo.hidden: expected an array of integers");
            break;
          }
          p.hidden.push_back(v.get<int>());
        }
      }
    }
  }
  c.env.max_episode_steps = c.ppo.max_episode_steps;

  {
    Section s(j, "evolution", diags);
    auto& e = c.evolution;
    s.integer("iterations", e.iterations);
    s.integer("population", e.population);
    s.integer("t1", e.t1);
    s.integer("t2", e.t2);
    s.integer("eval_episodes", e.eval_episodes);
    s.boolean("llm_enabled", e.llm_enabled);
    s.string("score_expr", e.score_expr);
    s.integer("workers", e.workers);
    s.integer("lint_probes", e.lint_probes);
    s.number("lint_margin", e.lint_margin);
    s.integer("seed", e.seed);
    if (const json* lib = s.raw("seed_library")) {
      if (!lib->is_array()) {
        diags.push_back("evolution.seed_library: expected an array of paths");
      } else {
        e.seed_library.clear();
        for (const auto& v : *lib) {
          if (!v.is_string()) {
            diags.push_back("evolution.seed_library: expected an array of paths");
            break;
          }
          e.seed_library.push_back(resolve(base_dir, v.get<std::string>()));
        }
      }
    }
  }

  {
    Section s(j, "llm", diags);
    auto& l = c.llm;
    s.string("mode", l.mode, {"live", "mock"});
    s.string("base_url", l.endpoint.base_url);
    s.string("model", l.endpoint.model);
    s.number("temperature", l.endpoint.temperature);
    double timeout_s = static_cast<double>(l.endpoint.timeout.count()) / 1000.0;
    s.number("timeout_s", timeout_s);
    l.endpoint.timeout = std::chrono::milliseconds(static_cast<long long>(timeout_s * 1000));
    s.integer("max_retries", l.endpoint.max_retries);
    long long backoff = l.endpoint.backoff_base.count();
    s.integer("backoff_base_ms", backoff);
    l.endpoint.backoff_base = std::chrono::milliseconds(backoff);
    std::string fixtures;
    s.string("fixtures", fixtures);
    if (!fixtures.empty()) l.fixtures = resolve(base_dir, fixtures);
  }

  {
    Section s(j, "safety", diags);
    std::string kind = "traditional";
    double d = 10.0;
    double eps = 0.0;
    s.string("kind", kind, {"traditional", "zero_violation", "almost_surely"});
    s.number("d", d);
    s.number("epsilon", eps);
    s.number("n", c.safety.n);
    try {
      if (kind == "traditional") {
        c.safety.requirement = SafetyRequirement::traditional(d);
      } else if (kind == "zero_violation") {
        c.safety.requirement = SafetyRequirement::zero_violation();
      } else {
        c.safety.requirement = SafetyRequirement::almost_surely(d, eps);
      }
    } catch (const std::invalid_argument& e) {
      diags.push_back(std::string("safety: ") + e.what());
    }
    if (!(c.safety.n > 0.0)) diags.push_back("safety.n: must be > 0");
  }
  c.lagrange.cost_limit = c.safety.requirement.threshold();

  {
    Section s(j, "output", diags);
    std::string dir;
    s.string("dir", dir);
    if (!dir.empty()) c.output.dir = dir;
    c.output.dir = resolve(base_dir, c.output.dir);
    s.string("run_id", c.output.run_id);
    if (c.output.run_id.empty() ||
        c.output.run_id.find_first_of("/\\") != std::string::npos) {
      diags.push_back("output.run_id: must be a non-empty name without slashes");
    }
  }

  {
    Section s(j, "review", diags);
    s.string("mode", c.review.mode, {"auto", "interactive", "remote"});
    s.number("timeout_s", c.review.timeout_s);
    std::string fallback = c.review.fallback_to_auto ? "auto" : "reject";
    s.string("fallback", fallback, {"auto", "reject"});
    c.review.fallback_to_auto = fallback == "auto";
    if (!(c.review.timeout_s > 0.0)) diags.push_back("review.timeout_s: must be > 0");
  }

  // Semantic checks.
  try {
    c.env.validate();
  } catch (const std::exception& e) {
    diags.push_back(std::string("env: ") + e.what());
  }
  try {
    c.ppo.validate();
  } catch (const std::exception& e) {
    diags.push_back(e.what());
  }
  const auto& e = c.evolution;
  if (e.iterations < 1) diags.push_back("evolution.iterations: must be >= 1");
  if (e.population < 1) diags.push_back("evolution.population: must be >= 1");
  if (!(0 < e.t1 && e.t1 < e.t2)) diags.push_back("evolution: need 0 < t1 < t2");
  if (e.eval_episodes < 1) diags.push_back("evolution.eval_episodes: must be >= 1");
  if (e.workers < 1) diags.push_back("evolution.workers: must be >= 1");
  if (c.llm.mode == "mock" && e.llm_enabled && c.llm.fixtures.empty()) {
    diags.push_back("llm.fixtures: required when llm.mode is mock");
  }
  try {
    c.llm.endpoint.validate();
  } catch (const std::exception& ex) {
    diags.push_back(ex.what());
  }

  if (!diags.empty()) throw ConfigError(std::move(diags));
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError({"cannot open " + path.string()});
  json j;
  try {
    j = json::parse(is);
  } catch (const json::parse_error& e) {
    throw ConfigError({path.string() + ": " + e.what()});
  }
  RunConfig c = config_from_json(j, std::filesystem::absolute(path).parent_path());
  c.llm.endpoint.apply_environment();
  return c;
}

json config_to_json(const RunConfig& c) {
  json hazards = json::array();
  for (const auto& h : c.env.hazards) {
    hazards.push_back({{"center", {h.center[0], h.center[1]}}, {"radius", h.radius}});
  }
  json seeds = json::array();
  for (const auto& p : c.evolution.seed_library) seeds.push_back(p.string());
  std::string kind = "traditional";
  if (c.safety.requirement.kind == SafetyRequirement::Kind::kZeroViolation) {
    kind = "zero_violation";
  } else if (c.safety.requirement.kind == SafetyRequirement::Kind::kAlmostSurely) {
    kind = "almost_surely";
  }
  return {
      {"schema_version", kConfigSchemaVersion},
      {"env",
       {{"arena_half_extent", c.env.arena_half_extent},
        {"hazards", hazards},
        {"goal",
         {{"center", {c.env.goal.center[0], c.env.goal.center[1]}},
          {"radius", c.env.goal.radius}}},
        {"dt", c.env.dt},
        {"accel_gain", c.env.accel_gain},
        {"max_speed", c.env.max_speed},
        {"goal_bonus", c.env.goal_bonus},
        {"progress_coefficient", c.env.progress_coefficient}}},
      {"ppo",
       {{"epochs", c.ppo.epochs},
        {"steps_per_epoch", c.ppo.steps_per_epoch},
        {"max_episode_steps", c.ppo.max_episode_steps},
        {"gamma", c.ppo.gamma},
        {"gae_lambda", c.ppo.gae_lambda},
        {"clip_ratio", c.ppo.clip_ratio},
        {"policy_lr", c.ppo.policy_lr},
        {"value_lr", c.ppo.value_lr},
        {"update_iters", c.ppo.update_iters},
        {"minibatch_size", c.ppo.minibatch_size},
        {"entropy_coefficient", c.ppo.entropy_coefficient},
        {"target_kl", c.ppo.target_kl},
        {"hidden", c.ppo.hidden},
        {"shaping_scale", c.ppo.shaping_scale},
        {"seed", c.ppo.seed},
        {"lagrange_initial", c.lagrange.lambda},
        {"lagrange_lr", c.lagrange.lambda_lr}}},
      {"evolution",
       {{"iterations", c.evolution.iterations},
        {"population", c.evolution.population},
        {"t1", c.evolution.t1},
        {"t2", c.evolution.t2},
        {"eval_episodes", c.evolution.eval_episodes},
        {"llm_enabled", c.evolution.llm_enabled},
        {"seed_library", seeds},
        {"score_expr", c.evolution.score_expr},
        {"workers", c.evolution.workers},
        {"lint_probes", c.evolution.lint_probes},
        {"lint_margin", c.evolution.lint_margin},
        {"seed", c.evolution.seed}}},
      {"llm",
       {{"mode", c.llm.mode},
        {"base_url", c.llm.endpoint.base_url},
        {"model", c.llm.endpoint.model},
        {"temperature", c.llm.endpoint.temperature},
        {"timeout_s", static_cast<double>(c.llm.endpoint.timeout.count()) / 1000.0},
        {"max_retries", c.llm.endpoint.max_retries},
        {"backoff_base_ms", c.llm.endpoint.backoff_base.count()},
        {"fixtures", c.llm.fixtures.string()}}},
      {"safety",
       {{"kind", kind},
        {"d", c.safety.requirement.d},
        {"epsilon", c.safety.requirement.epsilon},
        {"n", c.safety.n}}},
      {"output", {{"dir", c.output.dir.string()}, {"run_id", c.output.run_id}}},
      {"review",
       {{"mode", c.review.mode},
        {"timeout_s", c.review.timeout_s},
        {"fallback", c.review.fallback_to_auto ? "auto" : "reject"}}},
  };
}

}  // namespace e2cfd
