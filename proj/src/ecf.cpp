#include "e2cfd/ecf.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <random>

namespace e2cfd::ecf {

bool CandidateRecord::has_error() const {
  for (const auto& f : lint_findings) {
    if (f.severity == Severity::kError) return true;
  }
  return false;
}

std::string to_string(Origin o) {
  switch (o) {
    case Origin::kLlm: return "llm";
    case Origin::kSeed: return "seed";
    case Origin::kWeighted: return "weighted";
  }
  return "?";
}

namespace {
constexpr std::pair<Status, const char*> kStatusNames[] = {
    {Status::kGenerated, "generated"},
    {Status::kSyntaxFailed, "syntax_failed"},
    {Status::kLintFailed, "lint_failed"},
    {Status::kPendingReview, "pending_review"},
    {Status::kApproved, "approved"},
    {Status::kRejected, "rejected"},
    {Status::kEvaluated, "evaluated"},
};
}  // namespace

std::string to_string(Status s) {
  for (const auto& [st, name] : kStatusNames) {
    if (st == s) return name;
  }
  return "?";
}

std::optional<Status> status_from_string(std::string_view s) {
  for (const auto& [st, name] : kStatusNames) {
    if (s == name) return st;
  }
  return std::nullopt;
}

std::string to_string(Severity s) {
  switch (s) {
    case Severity::kInfo: return "info";
    case Severity::kWarning: return "warning";
    case Severity::kError: return "error";
  }
  return "?";
}

std::string to_string(Verdict v) {
  return v == Verdict::kApprove ? "approve" : "reject";
}

std::string to_string(ReviewerKind k) {
  switch (k) {
    case ReviewerKind::kAuto: return "auto";
    case ReviewerKind::kInteractive: return "interactive";
    case ReviewerKind::kRemote: return "remote";
  }
  return "?";
}

nlohmann::json to_json(const CandidateRecord& r) {
  nlohmann::json j;
  j["id"] = r.id;
  j["source_text"] = r.source_text;
  j["expression"] = r.ast ? nlohmann::json(dsl::pretty(*r.ast)) : nlohmann::json();
  j["origin"] = to_string(r.origin);
  j["status"] = to_string(r.status);
  j["findings"] = nlohmann::json::array();
  for (const auto& f : r.lint_findings) {
    j["findings"].push_back(
        {{"rule", f.rule}, {"severity", to_string(f.severity)}, {"message", f.message}});
  }
  if (r.fpe_metrics) {
    const auto& m = *r.fpe_metrics;
    j["fpe_metrics"] = {{"avg_return", m.avg_return}, {"avg_cost", m.avg_cost},
                        {"tcr", m.tcr},               {"her", m.her},
                        {"episodes", m.episodes},     {"wall_clock_s", m.wall_clock_s}};
  } else {
    j["fpe_metrics"] = nullptr;
  }
  j["fitness"] = r.fitness ? nlohmann::json(*r.fitness) : nlohmann::json();
  return j;
}

std::vector<std::pair<double, double>> feature_ranges(const EnvConfig& env) {
  const double h = env.arena_half_extent;
  const double diag = 2.0 * std::sqrt(2.0) * h;
  double max_r = 0.0;
  for (const auto& c : env.hazards) max_r = std::max(max_r, c.radius);
  const double v = env.max_speed;
  const double step = env.max_speed * env.dt;
  std::vector<std::pair<double, double>> r(kNumFeatures);
  r[kX] = {-h, h};
  r[kY] = {-h, h};
  r[kVx] = {-v, v};
  r[kVy] = {-v, v};
  r[kGoalDx] = {-2 * h, 2 * h};
  r[kGoalDy] = {-2 * h, 2 * h};
  r[kDistGoal] = {0.0, diag};
  r[kDistHazardMin] = {-max_r, diag};
  r[kInHazard] = {0.0, 1.0};
  r[kSpeed] = {0.0, v};
  r[kProgress] = {-step, step};
  return r;
}

std::vector<dsl::FeatureMap> probe_maps(const EnvConfig& env) {
  const auto ranges = feature_ranges(env);
  const auto& names = feature_registry();
  std::vector<dsl::FeatureMap> maps;
  for (unsigned k = 0; k < 15; ++k) {
    dsl::FeatureMap m;
    for (std::size_t j = 0; j < names.size(); ++j) {
      const bool high = (((k >> (j % 4)) & 1u) ^ ((j / 4) & 1u)) != 0;
      m[names[j]] = high ? ranges[j].second : ranges[j].first;
    }
    maps.push_back(std::move(m));
  }
  dsl::FeatureMap centroid;
  for (std::size_t j = 0; j < names.size(); ++j) {
    centroid[names[j]] = 0.5 * (ranges[j].first + ranges[j].second);
  }
  maps.push_back(std::move(centroid));
  return maps;
}

CandidateRecord syntax_check(std::string id, std::string text,
                             const EnvConfig& env, Origin origin) {
  CandidateRecord r;
  r.id = std::move(id);
  r.source_text = std::move(text);
  r.origin = origin;
  const auto parsed = dsl::parse(r.source_text);
  if (!parsed) {
    const auto& e = parsed.error();
    r.status = Status::kSyntaxFailed;
    r.lint_findings.push_back(
        {e.kind == dsl::ParseError::Kind::kLimitExceeded ? "limit-exceeded"
                                                         : "syntax",
         Severity::kError, e.message()});
    return r;
  }
  r.ast = parsed.expr();
  const auto& registry = feature_registry();
  for (const auto& name : dsl::free_features(*r.ast)) {
    if (std::find(registry.begin(), registry.end(), name) == registry.end()) {
      r.lint_findings.push_back({"unknown-feature", Severity::kError,
                                 "feature '" + name + "' is not in the registry"});
    }
  }
  if (r.has_error()) {
    r.status = Status::kLintFailed;
    return r;
  }
  for (const auto& probe : probe_maps(env)) {
    double v = 0.0;
    try {
      v = dsl::evaluate(*r.ast, probe);
    } catch (const std::exception& e) {
      r.lint_findings.push_back({"probe-failed", Severity::kError, e.what()});
      break;
    }
    if (!std::isfinite(v)) {
      r.lint_findings.push_back(
          {"non-finite", Severity::kError, "probe evaluation is not finite"});
      break;
    }
  }
  r.status = r.has_error() ? Status::kLintFailed : Status::kPendingReview;
  return r;
}

std::vector<Finding> semantic_lint(const dsl::CostExpr& ast, const EnvConfig& env,
                                   const LintOptions& options) {
  std::vector<Finding> findings;
  const dsl::BoundExpr bound(ast, feature_registry());
  std::mt19937_64 rng(options.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double h = env.arena_half_extent;
  auto value_at = [&](Vec2 p) {
    const Observation o = features_at(env, p, {0.0, 0.0}, 0.0);
    return bound(std::span<const double>(o.data(), o.size()));
  };

  double max_abs = 0.0;
  double inside_sum = 0.0;
  int inside_n = 0;
  if (!env.hazards.empty()) {
    for (int i = 0; i < options.probes; ++i) {
      const auto& c = env.hazards[static_cast<std::size_t>(i) % env.hazards.size()];
      const double r = c.radius * std::sqrt(unit(rng)) * 0.999;
      const double a = 2.0 * 3.14159265358979323846 * unit(rng);
      const double v = value_at({c.center[0] + r * std::cos(a), c.center[1] + r * std::sin(a)});
      inside_sum += v;
      ++inside_n;
      max_abs = std::max(max_abs, std::fabs(v));
    }
  }
  double outside_sum = 0.0;
  int outside_n = 0;
  for (int attempt = 0; outside_n < options.probes && attempt < 100 * options.probes;
       ++attempt) {
    const Vec2 p{-h + 2 * h * unit(rng), -h + 2 * h * unit(rng)};
    if (hazard_distance(env, p) < 0.0) continue;
    const double v = value_at(p);
    outside_sum += v;
    ++outside_n;
    max_abs = std::max(max_abs, std::fabs(v));
  }

  if (inside_n > 0 && outside_n > 0) {
    const double in_mean = inside_sum / inside_n;
    const double out_mean = outside_sum / outside_n;
    if (in_mean > out_mean + options.margin) {
      findings.push_back({"rewards-hazard", Severity::kError,
                          "mean value inside hazards (" + std::to_string(in_mean) +
                              ") exceeds the safe-region mean (" +
                              std::to_string(out_mean) + ")"});
    }
  }
  if (max_abs > options.magnitude_limit) {
    findings.push_back({"unbounded-magnitude", Severity::kWarning,
                        "probe magnitude " + std::to_string(max_abs) +
                            " exceeds " + std::to_string(options.magnitude_limit)});
  }
  return findings;
}

ReviewDecision AutoReviewer::review(const CandidateRecord& record) {
  ReviewDecision d;
  d.candidate_id = record.id;
  d.reviewer = ReviewerKind::kAuto;
  if (record.has_error()) {
    d.verdict = Verdict::kReject;
    for (const auto& f : record.lint_findings) {
      if (f.severity == Severity::kError) {
        d.note = f.rule;
        break;
      }
    }
  } else {
    d.verdict = Verdict::kApprove;
  }
  return d;
}

ReviewDecision InteractiveReviewer::review(const CandidateRecord& record) {
  out_ << "candidate " << record.id << " (" << to_string(record.origin) << ")\n  "
       << (record.ast ? dsl::pretty(*record.ast) : record.source_text) << '\n';
  for (const auto& f : record.lint_findings) {
    out_ << "  [" << to_string(f.severity) << "] " << f.rule << ": " << f.message
         << '\n';
  }
  ReviewDecision d;
  d.candidate_id = record.id;
  d.reviewer = ReviewerKind::kInteractive;
  while (true) {
    out_ << "approve? [y/n] " << std::flush;
    std::string line;
    if (!std::getline(in_, line)) {
      // Closed input: fall back to the automatic rule.
      d.verdict = record.has_error() ? Verdict::kReject : Verdict::kApprove;
      d.note = "input closed";
      return d;
    }
    if (line == "y" || line == "Y" || line == "yes") {
      d.verdict = Verdict::kApprove;
      return d;
    }
    if (line == "n" || line == "N" || line == "no") {
      d.verdict = Verdict::kReject;
      return d;
    }
  }
}

void ReviewQueue::park(const CandidateRecord& record) {
  std::lock_guard lock(mu_);
  auto& e = entries_[record.id];
  e.record = record;
  e.decision.reset();
}

std::optional<ReviewDecision> ReviewQueue::wait(const std::string& id,
                                                std::chrono::milliseconds timeout) {
  std::unique_lock lock(mu_);
  auto ready = [&] {
    auto it = entries_.find(id);
    return it != entries_.end() && it->second.decision.has_value();
  };
  if (!cv_.wait_for(lock, timeout, ready)) return std::nullopt;
  return entries_.at(id).decision;
}

ReviewQueue::DecideResult ReviewQueue::decide(const std::string& id,
                                              Verdict verdict, std::string note,
                                              ReviewerKind reviewer) {
  {
    std::lock_guard lock(mu_);
    auto it = entries_.find(id);
    if (it == entries_.end()) return DecideResult::kNotFound;
    if (it->second.decision) return DecideResult::kAlreadyDecided;
    it->second.decision = ReviewDecision{id, verdict, std::move(note), reviewer};
    it->second.record.status =
        verdict == Verdict::kApprove ? Status::kApproved : Status::kRejected;
  }
  cv_.notify_all();
  return DecideResult::kAccepted;
}

void ReviewQueue::close(const ReviewDecision& decision) {
  {
    std::lock_guard lock(mu_);
    auto it = entries_.find(decision.candidate_id);
    if (it == entries_.end() || it->second.decision) return;
    it->second.decision = decision;
    it->second.record.status = decision.verdict == Verdict::kApprove
                                   ? Status::kApproved
                                   : Status::kRejected;
  }
  cv_.notify_all();
}

std::vector<CandidateRecord> ReviewQueue::pending() const {
  std::lock_guard lock(mu_);
  std::vector<CandidateRecord> out;
  for (const auto& [id, e] : entries_) {
    if (!e.decision) out.push_back(e.record);
  }
  return out;
}

std::optional<CandidateRecord> ReviewQueue::find(const std::string& id) const {
  std::lock_guard lock(mu_);
  auto it = entries_.find(id);
  if (it == entries_.end()) return std::nullopt;
  return it->second.record;
}

std::optional<ReviewDecision> ReviewQueue::decision(const std::string& id) const {
  std::lock_guard lock(mu_);
  auto it = entries_.find(id);
  if (it == entries_.end()) return std::nullopt;
  return it->second.decision;
}

ReviewDecision RemoteReviewer::review(const CandidateRecord& record) {
  queue_->park(record);
  last_timed_out_ = false;
  if (auto d = queue_->wait(record.id, timeout_)) return *d;
  last_timed_out_ = true;
  ReviewDecision d;
  if (fallback_) {
    d = AutoReviewer().review(record);
    d.note = "remote review timed out; auto verdict";
  } else {
    d.candidate_id = record.id;
    d.verdict = Verdict::kReject;
    d.reviewer = ReviewerKind::kAuto;
    d.note = "remote review timed out";
  }
  queue_->close(d);
  // A decision may have raced the timeout; the queue keeps the first one.
  return *queue_->decision(record.id);
}

void apply(CandidateRecord& record, const ReviewDecision& decision) {
  if (record.status != Status::kPendingReview) {
    throw std::logic_error("candidate " + record.id + " is not pending review");
  }
  record.status =
      decision.verdict == Verdict::kApprove ? Status::kApproved : Status::kRejected;
}

std::optional<ReviewDecision> filter(CandidateRecord& record, const EnvConfig& env,
                                     Reviewer& reviewer, const LintOptions& lint) {
  if (record.status == Status::kGenerated) {
    record = syntax_check(record.id, record.source_text, env, record.origin);
  }
  if (record.status != Status::kPendingReview) return std::nullopt;
  auto findings = semantic_lint(*record.ast, env, lint);
  record.lint_findings.insert(record.lint_findings.end(), findings.begin(),
                              findings.end());
  ReviewDecision d = reviewer.review(record);
  apply(record, d);
  return d;
}

}  // namespace e2cfd::ecf
