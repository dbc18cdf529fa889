#ifndef E2CFD_ECF_HPP_
#define E2CFD_ECF_HPP_

#include <chrono>
#include <condition_variable>
#include <iosfwd>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "e2cfd/dsl.hpp"
#include "e2cfd/env.hpp"
#include "e2cfd/fpe.hpp"

// Error code filtering: mechanical syntax/validity checks followed by a
// review step that rejects candidates contradicting the safety intent.
namespace e2cfd::ecf {

enum class Origin { kLlm, kSeed, kWeighted };
enum class Status {
  kGenerated,
  kSyntaxFailed,
  kLintFailed,
  kPendingReview,
  kApproved,
  kRejected,
  kEvaluated,
};
enum class Severity { kInfo, kWarning, kError };

struct Finding {
  std::string rule;
  Severity severity = Severity::kInfo;
  std::string message;
};

struct CandidateRecord {
  std::string id;
  std::string source_text;
  std::optional<dsl::CostExpr> ast;
  Origin origin = Origin::kLlm;
  Status status = Status::kGenerated;
  std::vector<Finding> lint_findings;
  std::optional<fpe::MetricsAggregate> fpe_metrics;
  std::optional<double> fitness;

  bool has_error() const;
};

std::string to_string(Origin o);
std::string to_string(Status s);
std::string to_string(Severity s);
std::optional<Status> status_from_string(std::string_view s);

nlohmann::json to_json(const CandidateRecord& r);

// Per-feature [lo, hi] envelope of the environment, aligned with
// feature_registry().
std::vector<std::pair<double, double>> feature_ranges(const EnvConfig& env);

// The 16 probe bindings used by syntax_check: 15 fixed corner patterns of the
// feature ranges plus the centroid.
std::vector<dsl::FeatureMap> probe_maps(const EnvConfig& env);

// Parses `text`, checks its features against the environment registry and
// probes evaluation. Never throws; failures are encoded in status/findings.
CandidateRecord syntax_check(std::string id, std::string text,
                             const EnvConfig& env, Origin origin = Origin::kLlm);

struct LintOptions {
  int probes = 64;
  double margin = 0.0;
  double magnitude_limit = 1e4;
  std::uint64_t seed = 0x11a7;
};

// Probe rules: "rewards-hazard" (error) when the mean value inside hazards
// exceeds the mean in the safe region by more than the margin;
// "unbounded-magnitude" (warning) when any probe exceeds the magnitude limit.
std::vector<Finding> semantic_lint(const dsl::CostExpr& ast, const EnvConfig& env,
                                   const LintOptions& options = {});

enum class Verdict { kApprove, kReject };
enum class ReviewerKind { kAuto, kInteractive, kRemote };

std::string to_string(Verdict v);
std::string to_string(ReviewerKind k);

struct ReviewDecision {
  std::string candidate_id;
  Verdict verdict = Verdict::kApprove;
  std::string note;
  ReviewerKind reviewer = ReviewerKind::kAuto;
};

class Reviewer {
 public:
  virtual ~Reviewer() = default;
  // `record` has status pending_review.
  virtual ReviewDecision review(const CandidateRecord& record) = 0;
};

// Approves iff the record carries no error-severity finding.
class AutoReviewer : public Reviewer {
 public:
  ReviewDecision review(const CandidateRecord& record) override;
};

class InteractiveReviewer : public Reviewer {
 public:
  InteractiveReviewer(std::istream& in, std::ostream& out) : in_(in), out_(out) {}
  ReviewDecision review(const CandidateRecord& record) override;

 private:
  std::istream& in_;
  std::ostream& out_;
};

// Hand-off point between the evolution loop (producer) and the HTTP API
// (consumer). Decisions are accepted once per candidate id.
class ReviewQueue {
 public:
  enum class DecideResult { kAccepted, kAlreadyDecided, kNotFound };

  void park(const CandidateRecord& record);
  // Blocks until a decision arrives or the timeout elapses.
  std::optional<ReviewDecision> wait(const std::string& id,
                                     std::chrono::milliseconds timeout);
  DecideResult decide(const std::string& id, Verdict verdict, std::string note,
                      ReviewerKind reviewer = ReviewerKind::kRemote);
  // Records a decision taken elsewhere (timeout fallback) so later API
  // decisions are refused.
  void close(const ReviewDecision& decision);

  std::vector<CandidateRecord> pending() const;
  std::optional<CandidateRecord> find(const std::string& id) const;
  std::optional<ReviewDecision> decision(const std::string& id) const;

 private:
  struct Entry {
    CandidateRecord record;
    std::optional<ReviewDecision> decision;
  };
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::map<std::string, Entry> entries_;
};

// Parks the candidate on the queue; on timeout falls back to the auto verdict
// (or rejects when fallback is disabled).
class RemoteReviewer : public Reviewer {
 public:
  RemoteReviewer(std::shared_ptr<ReviewQueue> queue,
                 std::chrono::milliseconds timeout, bool fallback_to_auto = true)
      : queue_(std::move(queue)), timeout_(timeout), fallback_(fallback_to_auto) {}
  ReviewDecision review(const CandidateRecord& record) override;

  bool last_timed_out() const { return last_timed_out_; }

 private:
  std::shared_ptr<ReviewQueue> queue_;
  std::chrono::milliseconds timeout_;
  bool fallback_;
  bool last_timed_out_ = false;
};

// Applies a decision to a pending record: approved or rejected.
void apply(CandidateRecord& record, const ReviewDecision& decision);

// Full gate: syntax_check, semantic_lint (error findings make the candidate
// reviewable-but-doomed in auto mode), then review. Returns the decision when
// a review happened.
std::optional<ReviewDecision> filter(CandidateRecord& record, const EnvConfig& env,
                                     Reviewer& reviewer,
                                     const LintOptions& lint = {});

}  // namespace e2cfd::ecf

#endif  // E2CFD_ECF_HPP_
