// e2cfd command-line entry point.
//
// Exit codes: 0 ok, 1 usage, 2 config, 3 io, 4 candidate/parse, 5 llm,
// 6 no viable candidate or run failure.

#include <atomic>
#include <csignal>
#include <filesystem>
#include <iostream>
#include <thread>

#include <CLI11.hpp>

#include "e2cfd/config.hpp"
#include "e2cfd/evolution.hpp"
#include "e2cfd/metrics.hpp"
#include "e2cfd/service.hpp"
#include "e2cfd/summary.hpp"

namespace fs = std::filesystem;
using namespace e2cfd;

namespace {

enum Exit { kOk = 0, kUsage = 1, kConfig = 2, kIo = 3, kCandidate = 4, kLlm = 5, kRun = 6 };

struct Failure : std::runtime_error {
  Failure(Exit c, const std::string& what) : std::runtime_error(what), code(c) {}
  Exit code;
};

std::string read_file(const fs::path& p) {
  try {
    return metrics::read_text(p);
  } catch (const std::exception& e) {
    throw Failure(kIo, e.what());
  }
}

void write_file(const fs::path& p, const std::string& text) {
  try {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    metrics::write_text(p, text);
  } catch (const std::exception& e) {
    throw Failure(kIo, e.what());
  }
}

// Cost files may hold composite functions (best.cost), hence the wider limits.
dsl::CostExpr load_cost(const fs::path& p) {
  auto text = read_file(p);
  while (!text.empty() && (text.back() == '\n' || text.back() == '\r')) text.pop_back();
  const auto parsed = dsl::parse(text, dsl::Limits::composite());
  if (!parsed.ok()) {
    throw Failure(kCandidate, p.string() + ": " + parsed.error().message());
  }
  const auto& names = feature_registry();
  for (const auto& f : dsl::free_features(parsed.expr())) {
    if (std::find(names.begin(), names.end(), f) == names.end()) {
      throw Failure(kCandidate, p.string() + ": unknown feature '" + f + "'");
    }
  }
  return parsed.expr();
}

std::unique_ptr<ecf::Reviewer> make_reviewer(const RunConfig& c,
                                             std::shared_ptr<ecf::ReviewQueue> queue) {
  if (c.review.mode == "interactive") {
    return std::make_unique<ecf::InteractiveReviewer>(std::cin, std::cout);
  }
  if (c.review.mode == "remote") {
    if (!queue) {
      throw ConfigError({"review.mode=remote needs the HTTP API: use `serve --evolve`"});
    }
    return std::make_unique<ecf::RemoteReviewer>(
        queue, std::chrono::milliseconds(static_cast<long long>(c.review.timeout_s * 1000)),
        c.review.fallback_to_auto);
  }
  return std::make_unique<ecf::AutoReviewer>();
}

void print_best(const evolution::EvolutionResult& r, const fs::path& dir) {
  const auto& b = r.best;
  std::cout << "best (iteration " << b.iteration << ", p_best " << b.p_best
            << "): " << dsl::pretty(*b.f_w_best) << "\n";
  if (b.metrics) {
    std::cout << "late-phase tcr " << b.metrics->tcr << " her " << b.metrics->her
              << "\n";
  }
  std::cout << "wall clock " << r.wall_clock_s << " s, run directory " << dir.string()
            << "\n";
}

int cmd_train(const fs::path& config_path, const std::string& algo,
              const std::string& cost_path, const std::string& out_dir) {
  RunConfig c = load_config(config_path);
  ppo::TrainOptions opt;
  opt.algorithm = algo == "ppo-lag" ? ppo::Algorithm::kPpoLagrangian : ppo::Algorithm::kPpo;
  opt.lagrange = c.lagrange;
  if (!cost_path.empty()) opt.shaping = load_cost(cost_path);
  const fs::path dir = out_dir.empty() ? c.output.run_dir() : fs::path(out_dir);

  const auto report = ppo::train(c.env, c.ppo, opt);
  if (report.failed) throw Failure(kRun, "training failed: " + report.failure);
  const auto episodes = ppo::evaluate_policy(c.env, report.policy,
                                             c.evolution.eval_episodes, c.ppo.gamma);
  const auto summary = metrics::summarize(algo, report, episodes);
  try {
    fs::create_directories(dir);
    ppo::write_report_csv(report, dir / "summary.csv");
    nn::save_policy(report.policy, dir / "policy.bin");
  } catch (const std::exception& e) {
    throw Failure(kIo, e.what());
  }
  write_file(dir / "summary.json", metrics::to_json(summary).dump(2) + "\n");
  std::cout << algo << ": " << report.epochs.size() << " epochs in "
            << report.wall_clock_s << " s, eval tcr " << summary.tcr << " her "
            << summary.her << " -> " << dir.string() << "\n";
  return kOk;
}

int cmd_evolve(const fs::path& config_path) {
  RunConfig c = load_config(config_path);
  auto backend = evolution::make_backend(c);
  auto reviewer = make_reviewer(c, nullptr);
  evolution::RunStore store(c.output.run_dir());
  evolution::Evolution evo(c, backend.get(), *reviewer, &store);
  const auto result = evo.run();
  print_best(result, store.dir());
  return kOk;
}

int cmd_eval(const fs::path& config_path, const fs::path& policy_path, int episodes) {
  RunConfig c = load_config(config_path);
  nn::GaussianPolicy policy;
  try {
    policy = nn::load_policy(policy_path);
  } catch (const std::exception& e) {
    throw Failure(kIo, e.what());
  }
  if (policy.mean_net().layer_sizes().front() != static_cast<int>(kNumFeatures)) {
    throw Failure(kIo, "checkpoint observation size does not match the environment");
  }
  const auto eps = ppo::evaluate_policy(c.env, policy, episodes, c.ppo.gamma);
  const auto rates = metrics::compute_rates(eps);
  const auto dist = metrics::cost_distribution(eps);
  double ret = 0.0;
  for (const auto& e : eps) ret += e.j_r;
  nlohmann::json j{{"episodes", episodes},
                   {"tcr", rates.tcr},
                   {"her", rates.her},
                   {"avg_return", ret / episodes},
                   {"cost_distribution",
                    {{"min", dist.min}, {"q25", dist.q25}, {"median", dist.median},
                     {"q75", dist.q75}, {"max", dist.max}, {"outliers", dist.outliers}}}};
  std::cout << j.dump(2) << "\n";
  return kOk;
}

int cmd_heatmap(const fs::path& config_path, const fs::path& cost_path,
                const fs::path& out, const std::string& pgm, int resolution) {
  RunConfig c = load_config(config_path);
  const auto expr = load_cost(cost_path);
  const auto grid = metrics::heatmap(expr, c.env, resolution);
  write_file(out, metrics::heatmap_csv(grid));
  if (!pgm.empty()) write_file(pgm, metrics::heatmap_pgm(grid));
  std::cout << "wrote " << out.string() << "\n";
  return kOk;
}

std::atomic<service::Service*> g_service{nullptr};

void on_signal(int) {
  if (auto* s = g_service.load()) s->stop();
}

int cmd_serve(const fs::path& config_path, const std::string& addr, bool evolve,
              bool exit_after_run) {
  RunConfig c = load_config(config_path);
  const auto colon = addr.rfind(':');
  if (colon == std::string::npos) throw Failure(kUsage, "--addr must be HOST:PORT");
  const std::string host = addr.substr(0, colon);
  int port = 0;
  try {
    port = std::stoi(addr.substr(colon + 1));
  } catch (const std::exception&) {
    throw Failure(kUsage, "--addr must be HOST:PORT");
  }

  auto queue = std::make_shared<ecf::ReviewQueue>();
  std::unique_ptr<evolution::RunStore> store;
  if (evolve) store = std::make_unique<evolution::RunStore>(c.output.run_dir());

  service::ServiceOptions opt;
  opt.runs_root = c.output.dir;
  opt.env = c.env;
  opt.queue = queue;
  opt.live_store = store.get();
  service::Service svc(opt);
  const int bound = svc.bind(host, port);
  if (bound < 0) throw Failure(kIo, "cannot bind " + addr);
  g_service = &svc;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  std::cout << "listening on " << host << ":" << bound << std::endl;

  int code = kOk;
  std::thread worker;
  if (evolve) {
    auto backend = evolution::make_backend(c);
    auto reviewer = make_reviewer(c, queue);
    worker = std::thread([&, backend = std::move(backend),
                          reviewer = std::move(reviewer)]() mutable {
      try {
        evolution::Evolution evo(c, backend.get(), *reviewer, store.get());
        print_best(evo.run(), store->dir());
      } catch (const evolution::NoViableCandidate& e) {
        std::cerr << "error: " << e.what() << "\n";
        code = kRun;
      } catch (const llm::EndpointError& e) {
        std::cerr << "llm error: " << e.what() << "\n";
        code = kLlm;
      } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        code = kRun;
      }
      if (exit_after_run) svc.stop();
    });
  }
  svc.listen_after_bind();
  g_service = nullptr;
  if (worker.joinable()) worker.join();
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Evolutionary cost function design for safe reinforcement learning"};
  app.require_subcommand(1);

  std::string config, algo = "ppo", cost, out, policy, pgm, addr = "127.0.0.1:8080";
  int episodes = 20, resolution = 64;
  bool serve_evolve = false, exit_after_run = false;

  auto* train = app.add_subcommand("train", "Train one policy (PPO or PPO-Lagrangian)");
  train->add_option("--config", config, "Run configuration (JSON)")->required();
  train->add_option("--algo", algo, "ppo or ppo-lag")
      ->check(CLI::IsMember({"ppo", "ppo-lag"}));
  train->add_option("--cost", cost, "Cost expression file used for reward shaping");
  train->add_option("--out", out, "Output directory (default output.dir/output.run_id)");

  auto* evolve = app.add_subcommand("evolve", "Run the evolutionary search");
  evolve->add_option("--config", config, "Run configuration (JSON)")->required();

  auto* eval = app.add_subcommand("eval", "Evaluate a policy checkpoint");
  eval->add_option("--policy", policy, "Checkpoint file")->required();
  eval->add_option("--config", config, "Run configuration (JSON)")->required();
  eval->add_option("--episodes", episodes, "Evaluation episodes")
      ->check(CLI::PositiveNumber);

  auto* heat = app.add_subcommand("heatmap", "Export a cost-function heatmap");
  heat->add_option("--cost", cost, "Cost expression file")->required();
  heat->add_option("--config", config, "Run configuration (JSON)")->required();
  heat->add_option("--out", out, "CSV output path")->required();
  heat->add_option("--pgm", pgm, "Also write a PGM image");
  heat->add_option("--resolution", resolution, "Cells per axis")
      ->check(CLI::Range(1, 4096));

  auto* serve = app.add_subcommand("serve", "Serve the JSON API");
  serve->add_option("--config", config, "Run configuration (JSON)")->required();
  serve->add_option("--addr", addr, "HOST:PORT");
  serve->add_flag("--evolve", serve_evolve, "Run the evolutionary search under the server");
  serve->add_flag("--exit-after-run", exit_after_run, "Stop serving when the run ends");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (*train) return cmd_train(config, algo, cost, out);
    if (*evolve) return cmd_evolve(config);
    if (*eval) return cmd_eval(config, policy, episodes);
    if (*heat) return cmd_heatmap(config, cost, out, pgm, resolution);
    if (*serve) return cmd_serve(config, addr, serve_evolve, exit_after_run);
  } catch (const Failure& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.code;
  } catch (const ConfigError& e) {
    std::cerr << "invalid configuration:\n";
    for (const auto& d : e.diagnostics()) std::cerr << "  " << d << "\n";
    return kConfig;
  } catch (const InvalidConfig& e) {
    std::cerr << "invalid configuration: " << e.what() << "\n";
    return kConfig;
  } catch (const llm::EndpointError& e) {
    std::cerr << "llm error: " << e.what() << "\n";
    return kLlm;
  } catch (const evolution::NoViableCandidate& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRun;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRun;
  }
  return kUsage;
}
