#include "e2cfd/evolution.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>

#include "e2cfd/metrics.hpp"

namespace e2cfd::evolution {

using nlohmann::json;

std::vector<double> normalize_scores(std::span<const double> scores) {
  if (scores.empty()) throw std::invalid_argument("normalize_scores: no scores");
  for (double s : scores) {
    if (!std::isfinite(s)) {
      throw std::invalid_argument("normalize_scores: non-finite score");
    }
  }
  const auto [lo, hi] = std::minmax_element(scores.begin(), scores.end());
  const double min = *lo;
  std::vector<double> w(scores.size());
  if (*lo == *hi) {
    std::fill(w.begin(), w.end(), 1.0 / static_cast<double>(scores.size()));
    return w;
  }
  double total = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    w[i] = scores[i] - min;
    total += w[i];
  }
  for (double& x : w) x /= total;
  return w;
}

RunStore::RunStore(std::filesystem::path dir) : dir_(std::move(dir)) {
  std::filesystem::create_directories(dir_ / "candidates");
}

namespace {

// Readers (the HTTP service) never observe half-written files.
void write_atomic(const std::filesystem::path& path, const std::string& text) {
  auto tmp = path;
  tmp += ".tmp";
  metrics::write_text(tmp, text);
  std::filesystem::rename(tmp, path);
}

}  // namespace

void RunStore::write_config(const json& config) {
  write_atomic(dir_ / "run.json", config.dump(2) + "\n");
}

void RunStore::save_candidate(const ecf::CandidateRecord& r) {
  std::lock_guard lock(mu_);
  write_atomic(dir_ / "candidates" / (r.id + ".cost"), r.source_text + "\n");
  write_atomic(dir_ / "candidates" / (r.id + ".json"), ecf::to_json(r).dump(2) + "\n");
}

void RunStore::audit(json event) {
  std::lock_guard lock(mu_);
  event["seq"] = ++seq_;
  std::ofstream os(dir_ / "audit.log", std::ios::app);
  os << event.dump() << '\n';
}

void RunStore::append_metrics(int iteration, const std::string& candidate,
                              const std::string& phase, int epochs,
                              const fpe::MetricsAggregate& m, double score) {
  std::lock_guard lock(mu_);
  const auto path = dir_ / "metrics.csv";
  const bool fresh = !std::filesystem::exists(path);
  std::ofstream os(path, std::ios::app);
  os.precision(17);
  if (fresh) {
    os << "iteration,candidate,phase,epochs,avg_return,avg_cost,tcr,her,episodes,"
          "score,wall_clock_s\n";
  }
  os << iteration << ',' << candidate << ',' << phase << ',' << epochs << ','
     << m.avg_return << ',' << m.avg_cost << ',' << m.tcr << ',' << m.her << ','
     << m.episodes << ',' << score << ',' << m.wall_clock_s << '\n';
}

void RunStore::append_curve(const std::string& candidate, const std::string& phase,
                            std::span<const ppo::EpochStats> curve) {
  std::lock_guard lock(mu_);
  const auto path = dir_ / "curves.csv";
  const bool fresh = !std::filesystem::exists(path);
  std::ofstream os(path, std::ios::app);
  os.precision(17);
  if (fresh) {
    os << "candidate,phase,epoch,avg_return,avg_cost,avg_shaped_return,episodes,tcr,"
          "her,wall_clock_s\n";
  }
  for (const auto& e : curve) {
    os << candidate << ',' << phase << ',' << e.epoch << ',' << e.avg_return << ','
       << e.avg_cost << ',' << e.avg_shaped_return << ',' << e.episodes << ','
       << e.tcr << ',' << e.her << ',' << e.wall_clock_s << '\n';
  }
}

void RunStore::write_best(const dsl::CostExpr& expr) {
  write_atomic(dir_ / "best.cost", dsl::pretty(expr) + "\n");
}

void RunStore::write_state(const json& state) {
  write_atomic(dir_ / "state.json", state.dump(2) + "\n");
}

std::vector<std::string> load_seed_library(
    std::span<const std::filesystem::path> paths, const EnvConfig& env) {
  std::vector<std::string> out;
  std::vector<std::string> problems;
  for (const auto& p : paths) {
    std::string text;
    try {
      text = metrics::read_text(p);
    } catch (const std::exception& e) {
      problems.push_back(e.what());
      continue;
    }
    while (!text.empty() && (text.back() == '\n' || text.back() == '\r')) text.pop_back();
    const auto r = ecf::syntax_check("seed", text, env, ecf::Origin::kSeed);
    if (r.status != ecf::Status::kPendingReview) {
      std::string why = r.lint_findings.empty() ? "" : r.lint_findings[0].message;
      problems.push_back("seed " + p.string() + " fails the syntax check: " + why);
      continue;
    }
    out.push_back(text);
  }
  if (!problems.empty()) throw ConfigError(problems);
  return out;
}

json to_json(const BestRecord& best) {
  json j;
  j["f_w_best"] = best.f_w_best ? json(dsl::pretty(*best.f_w_best)) : json();
  j["p_best"] = std::isfinite(best.p_best) ? json(best.p_best) : json();
  j["iteration"] = best.iteration;
  j["components"] = best.components;
  if (best.metrics) {
    j["metrics"] = {{"avg_return", best.metrics->avg_return},
                    {"avg_cost", best.metrics->avg_cost},
                    {"tcr", best.metrics->tcr},
                    {"her", best.metrics->her},
                    {"episodes", best.metrics->episodes},
                    {"wall_clock_s", best.metrics->wall_clock_s}};
  } else {
    j["metrics"] = nullptr;
  }
  return j;
}

std::unique_ptr<llm::ChatBackend> make_backend(const RunConfig& config) {
  const bool needed =
      config.evolution.llm_enabled || config.evolution.score_expr == "llm";
  if (!needed) return nullptr;
  if (config.llm.mode == "mock") {
    std::error_code ec;
    if (!std::filesystem::is_directory(config.llm.fixtures, ec)) {
      throw ConfigError({"llm.fixtures: not a directory: " + config.llm.fixtures.string()});
    }
    // Non-movable (mutex); the prvalue initializes the heap object directly.
    return std::unique_ptr<llm::ChatBackend>(
        new llm::MockChatBackend(llm::MockChatBackend::from_directory(config.llm.fixtures)));
  }
  try {
    config.llm.endpoint.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError({e.what()});
  }
  return std::make_unique<llm::HttpChatBackend>(config.llm.endpoint);
}

Evolution::Evolution(RunConfig config, llm::ChatBackend* backend,
                     ecf::Reviewer& reviewer, RunStore* store)
    : config_(std::move(config)), backend_(backend), reviewer_(reviewer), store_(store) {
  seeds_ = load_seed_library(config_.evolution.seed_library, config_.env);
  if (config_.evolution.llm_enabled && backend_ == nullptr) {
    throw std::invalid_argument("generator enabled but no chat backend supplied");
  }
}

void Evolution::audit(json event) {
  if (store_) store_->audit(std::move(event));
}

void Evolution::transition(const ecf::CandidateRecord& r) {
  if (store_) store_->save_candidate(r);
  audit({{"event", "status"}, {"candidate", r.id}, {"status", ecf::to_string(r.status)}});
}

fpe::ScoreExpr Evolution::resolve_score_expr() {
  const std::string& spec = config_.evolution.score_expr;
  if (spec == "builtin") return fpe::ScoreExpr::builtin();
  if (spec == "llm") {
    if (backend_ == nullptr) {
      throw std::invalid_argument("score_expr=llm requires a chat backend");
    }
    const auto bundle = llm::make_bundle(config_.env, config_.safety.requirement,
                                         std::nullopt);
    auto gen = llm::generate_score_expr(*backend_, bundle,
                                        config_.llm.endpoint.temperature);
    audit({{"event", "score_expr"},
           {"text", gen.text},
           {"fallback", gen.fell_back},
           {"note", gen.note},
           {"expression", dsl::pretty(gen.expr.expr())}});
    return gen.expr;
  }
  return fpe::ScoreExpr(dsl::parse_or_throw(spec));
}

std::vector<ecf::CandidateRecord> Evolution::population(int iteration,
                                                        const BestRecord& best) {
  const auto k = static_cast<std::size_t>(config_.evolution.population);
  std::vector<std::pair<std::string, ecf::Origin>> texts;
  if (iteration == 1 || !config_.evolution.llm_enabled) {
    for (std::size_t i = 0; i < seeds_.size() && texts.size() < k; ++i) {
      texts.emplace_back(seeds_[i], ecf::Origin::kSeed);
    }
  }
  if (config_.evolution.llm_enabled && texts.size() < k) {
    const auto bundle =
        llm::make_bundle(config_.env, config_.safety.requirement, best.f_w_best);
    try {
      const auto blocks = llm::generate_candidates(
          *backend_, bundle, static_cast<int>(k - texts.size()),
          config_.llm.endpoint.temperature);
      for (const auto& b : blocks) texts.emplace_back(b, ecf::Origin::kLlm);
    } catch (const llm::EndpointError& e) {
      if (e.kind() != llm::EndpointError::Kind::kEmptyGeneration) throw;
      audit({{"event", "empty_generation"}, {"iteration", iteration}, {"detail", e.what()}});
    }
  }
  // Pad from the seed library.
  for (std::size_t i = 0; texts.size() < k && !seeds_.empty(); ++i) {
    texts.emplace_back(seeds_[i % seeds_.size()], ecf::Origin::kSeed);
  }

  std::vector<ecf::CandidateRecord> out;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    ecf::CandidateRecord r;
    r.id = config_.output.run_id + "-i" + std::to_string(iteration) + "-c" +
           std::to_string(i);
    r.source_text = texts[i].first;
    r.origin = texts[i].second;
    r.status = ecf::Status::kGenerated;
    out.push_back(std::move(r));
  }
  return out;
}

EvolutionResult Evolution::run() {
  const auto start = std::chrono::steady_clock::now();
  auto elapsed = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
        .count();
  };
  if (store_) store_->write_config(config_to_json(config_));

  EvolutionResult result;
  json iterations_state = json::array();
  auto write_state = [&](const std::string& status) {
    if (!store_) return;
    store_->write_state({{"status", status},
                         {"run_id", config_.output.run_id},
                         {"best", to_json(result.best)},
                         {"iterations", iterations_state},
                         {"score_expr", result.score_expr},
                         {"wall_clock_s", elapsed()}});
  };

  audit({{"event", "run_started"}, {"run_id", config_.output.run_id}});
  write_state("running");
  const fpe::ScoreExpr score_expr = resolve_score_expr();
  result.score_expr = dsl::pretty(score_expr.expr());

  const double d = config_.safety.requirement.threshold();
  const double n = config_.safety.n;
  const fpe::EvalPhase early{"early", config_.evolution.t1,
                             config_.evolution.eval_episodes};
  const fpe::EvalPhase late{"late", config_.evolution.t2,
                            config_.evolution.eval_episodes};
  const std::uint64_t fpe_seed = config_.ppo.seed;
  const ecf::LintOptions lint{config_.evolution.lint_probes,
                              config_.evolution.lint_margin, 1e4, 0x11a7};

  BestRecord& best = result.best;
  for (int it = 1; it <= config_.evolution.iterations; ++it) {
    IterationSummary summary;
    summary.iteration = it;
    audit({{"event", "iteration_started"}, {"iteration", it}});

    auto candidates = population(it, best);
    for (auto& c : candidates) {
      summary.candidate_ids.push_back(c.id);
      transition(c);
    }

    // Error code filtering.
    std::vector<ecf::CandidateRecord*> approved;
    for (auto& c : candidates) {
      c = ecf::syntax_check(c.id, c.source_text, config_.env, c.origin);
      if (c.status == ecf::Status::kPendingReview) {
        auto findings = ecf::semantic_lint(*c.ast, config_.env, lint);
        c.lint_findings.insert(c.lint_findings.end(), findings.begin(), findings.end());
      }
      transition(c);
      if (c.status != ecf::Status::kPendingReview) continue;
      const ecf::ReviewDecision decision = reviewer_.review(c);
      audit({{"event", "review_decision"},
             {"candidate", c.id},
             {"verdict", ecf::to_string(decision.verdict)},
             {"reviewer", ecf::to_string(decision.reviewer)},
             {"note", decision.note}});
      ecf::apply(c, decision);
      transition(c);
      if (c.status == ecf::Status::kApproved) approved.push_back(&c);
    }

    if (approved.empty()) {
      summary.skipped = true;
      audit({{"event", "iteration_skipped"}, {"iteration", it},
             {"reason", "no candidate survived filtering"}});
      iterations_state.push_back({{"iteration", it}, {"status", "skipped"},
                                  {"candidates", summary.candidate_ids}});
      result.iterations.push_back(std::move(summary));
      write_state("running");
      continue;
    }

    // Early-phase evaluation of the survivors.
    for (auto* c : approved) {
      summary.approved_ids.push_back(c->id);
      audit({{"event", "fpe_started"}, {"candidate", c->id}, {"phase", "early"},
             {"status", ecf::to_string(c->status)}});
    }
    const auto results = fpe::parallel_map<fpe::FpeResult>(
        approved.size(), config_.evolution.workers, [&](std::size_t i) {
          return fpe::fpe_run(*approved[i]->ast, early, config_.env, config_.ppo,
                              fpe_seed);
        });
    std::vector<dsl::CostExpr> base;
    for (std::size_t i = 0; i < approved.size(); ++i) {
      auto& c = *approved[i];
      const auto& r = results[i];
      const double s = r.failed ? -n : fpe::score(r.metrics, score_expr, d, n);
      c.fpe_metrics = r.metrics;
      c.fitness = s;
      c.status = ecf::Status::kEvaluated;
      transition(c);
      if (store_) {
        store_->append_metrics(it, c.id, "early", early.epochs, r.metrics, s);
        store_->append_curve(c.id, "early", r.curve);
      }
      audit({{"event", "fpe_result"}, {"candidate", c.id}, {"phase", "early"},
             {"score", s}, {"failed", r.failed}, {"tcr", r.metrics.tcr},
             {"her", r.metrics.her}, {"avg_return", r.metrics.avg_return},
             {"avg_cost", r.metrics.avg_cost}, {"wall_clock_s", r.metrics.wall_clock_s}});
      summary.scores.push_back(s);
      base.push_back(*c.ast);
    }

    // Weighting function.
    summary.weights = normalize_scores(summary.scores);
    const dsl::CostExpr f_w = dsl::weighted_sum(base, summary.weights);
    audit({{"event", "weights"}, {"iteration", it}, {"candidates", summary.approved_ids},
           {"scores", summary.scores}, {"weights", summary.weights}});

    ecf::CandidateRecord weighted;
    weighted.id = config_.output.run_id + "-i" + std::to_string(it) + "-w";
    weighted.source_text = dsl::pretty(f_w);
    weighted.ast = f_w;
    weighted.origin = ecf::Origin::kWeighted;
    weighted.status = ecf::Status::kApproved;
    summary.weighted_id = weighted.id;
    transition(weighted);

    audit({{"event", "fpe_started"}, {"candidate", weighted.id}, {"phase", "late"},
           {"status", ecf::to_string(weighted.status)}});
    fpe::FpeResult late_result =
        fpe::fpe_run(f_w, late, config_.env, config_.ppo, fpe_seed);
    const double p_tmp = late_result.failed
                             ? -n
                             : fpe::score(late_result.metrics, score_expr, d, n);
    weighted.fpe_metrics = late_result.metrics;
    weighted.fitness = p_tmp;
    weighted.status = ecf::Status::kEvaluated;
    transition(weighted);
    if (store_) {
      store_->append_metrics(it, weighted.id, "late", late.epochs, late_result.metrics,
                             p_tmp);
      store_->append_curve(weighted.id, "late", late_result.curve);
    }
    summary.p_tmp = p_tmp;

    const bool improved = p_tmp > best.p_best;
    if (improved) {
      best.f_w_best = f_w;
      best.p_best = p_tmp;
      best.iteration = it;
      best.components = summary.approved_ids;
      best.metrics = late_result.metrics;
      if (store_) {
        store_->write_best(f_w);
        nn::save_policy(late_result.policy, store_->dir() / "best_policy.bin");
      }
    }
    audit({{"event", improved ? "best_updated" : "best_retained"},
           {"iteration", it},
           {"candidate", weighted.id},
           {"expression", weighted.source_text},
           {"p_tmp", p_tmp},
           {"p_best", best.p_best},
           {"tcr", late_result.metrics.tcr},
           {"her", late_result.metrics.her},
           {"wall_clock_s", late_result.metrics.wall_clock_s}});
    iterations_state.push_back({{"iteration", it},
                                {"status", "completed"},
                                {"candidates", summary.candidate_ids},
                                {"approved", summary.approved_ids},
                                {"scores", summary.scores},
                                {"weights", summary.weights},
                                {"weighted", weighted.id},
                                {"p_tmp", p_tmp},
                                {"p_best", best.p_best}});
    result.iterations.push_back(std::move(summary));
    write_state("running");
  }

  result.wall_clock_s = elapsed();
  if (!best.f_w_best) {
    audit({{"event", "run_failed"}, {"reason", "no viable candidate"}});
    write_state("failed");
    throw NoViableCandidate("no iteration produced an approved candidate");
  }
  audit({{"event", "run_finished"}, {"p_best", best.p_best},
         {"wall_clock_s", result.wall_clock_s}});
  write_state("finished");
  return result;
}

}  // namespace e2cfd::evolution
