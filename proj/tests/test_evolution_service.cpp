#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <thread>

#include "e2cfd/evolution.hpp"
#include "e2cfd/metrics.hpp"
#include "e2cfd/service.hpp"

// After Eigen: resolv.h defines a _res macro.
#include <httplib.h>

using namespace e2cfd;
using namespace std::chrono_literals;
using nlohmann::json;

namespace {

std::filesystem::path fresh_dir(const std::string& name) {
  const auto d = std::filesystem::temp_directory_path() / ("e2cfd_" + name);
  std::filesystem::remove_all(d);
  std::filesystem::create_directories(d);
  return d;
}

std::filesystem::path write_seed(const std::filesystem::path& dir, const std::string& name,
                                 const std::string& text) {
  const auto p = dir / (name + ".cost");
  metrics::write_text(p, text + "\n");
  return p;
}

RunConfig tiny_config(const std::filesystem::path& root, const std::string& run_id) {
  RunConfig c;
  c.ppo.steps_per_epoch = 300;
  c.ppo.max_episode_steps = 100;
  c.env.max_episode_steps = 100;
  c.ppo.minibatch_size = 100;
  c.ppo.update_iters = 2;
  c.ppo.hidden = {8, 8};
  c.ppo.seed = 5;
  c.evolution.iterations = 2;
  c.evolution.population = 2;
  c.evolution.t1 = 1;
  c.evolution.t2 = 2;
  c.evolution.eval_episodes = 3;
  c.evolution.llm_enabled = false;
  c.output.dir = root;
  c.output.run_id = run_id;
  return c;
}

std::vector<json> read_audit(const std::filesystem::path& run_dir) {
  std::ifstream is(run_dir / "audit.log");
  std::vector<json> out;
  std::string line;
  while (std::getline(is, line)) out.push_back(json::parse(line));
  return out;
}

std::vector<json> events(const std::vector<json>& audit, const std::string& name) {
  std::vector<json> out;
  for (const auto& e : audit) {
    if (e["event"] == name) out.push_back(e);
  }
  return out;
}

evolution::EvolutionResult run_evolution(const RunConfig& c, llm::ChatBackend* backend = nullptr) {
  ecf::AutoReviewer reviewer;
  evolution::RunStore store(c.output.run_dir());
  evolution::Evolution evo(c, backend, reviewer, &store);
  return evo.run();
}

}  // namespace

TEST_CASE("normalize_scores examples") {
  using evolution::normalize_scores;
  const std::vector<double> a = {2, 3, 5};
  const auto wa = normalize_scores(a);
  CHECK(wa[0] == 0.0);
  CHECK(wa[1] == doctest::Approx(0.25));
  CHECK(wa[2] == doctest::Approx(0.75));
  const std::vector<double> flat = {7, 7, 7};
  for (double w : normalize_scores(flat)) CHECK(w == doctest::Approx(1.0 / 3));
  const std::vector<double> penalised = {-1e6, 4, 6};
  const auto wp = normalize_scores(penalised);
  CHECK(wp[0] == 0.0);
  CHECK(wp[1] == doctest::Approx(1000004.0 / 2000010.0));
  CHECK(wp[2] == doctest::Approx(1000006.0 / 2000010.0));
  CHECK_THROWS_AS(normalize_scores(std::vector<double>{}), std::invalid_argument);
  CHECK_THROWS_AS(normalize_scores(std::vector<double>{1, NAN}), std::invalid_argument);
}

TEST_CASE("seed library must parse") {
  const auto dir = fresh_dir("seedlib");
  const std::vector<std::filesystem::path> good = {write_seed(dir, "a", "-in_hazard")};
  CHECK(evolution::load_seed_library(good, EnvConfig{}) == std::vector<std::string>{"-in_hazard"});
  const std::vector<std::filesystem::path> bad = {write_seed(dir, "b", "-in_hazard +")};
  CHECK_THROWS_AS(evolution::load_seed_library(bad, EnvConfig{}), ConfigError);
}

TEST_CASE("single seed evolution") {
  const auto root = fresh_dir("evo_single");
  auto c = tiny_config(root, "single");
  c.evolution.population = 1;
  c.evolution.iterations = 1;
  c.evolution.seed_library = {write_seed(root, "s", "-in_hazard")};
  const auto r = run_evolution(c);
  REQUIRE(r.best.f_w_best.has_value());
  CHECK(r.iterations.size() == 1);
  REQUIRE(r.iterations[0].weights.size() == 1);
  CHECK(r.iterations[0].weights[0] == 1.0);
  // With one candidate f^w is the candidate itself.
  CHECK(dsl::evaluate(*r.best.f_w_best, {{"in_hazard", 1.0}}) == -1.0);
  const auto run_dir = c.output.run_dir();
  for (const char* f : {"run.json", "state.json", "best.cost", "best_policy.bin", "metrics.csv",
                        "curves.csv", "audit.log"}) {
    CHECK_MESSAGE(std::filesystem::exists(run_dir / f), f);
  }
  const auto state = json::parse(metrics::read_text(run_dir / "state.json"));
  CHECK(state["status"] == "finished");
}

TEST_CASE("rejected and broken candidates never reach FPE") {
  const auto root = fresh_dir("evo_gate");
  auto c = tiny_config(root, "gate");
  c.evolution.iterations = 1;
  c.evolution.population = 3;
  c.evolution.seed_library = {write_seed(root, "good", "-in_hazard"),
                              write_seed(root, "bad", "5 * in_hazard"),
                              write_seed(root, "step", "-0.01")};
  const auto r = run_evolution(c);
  CHECK(r.iterations[0].approved_ids.size() == 2);
  const auto audit = read_audit(c.output.run_dir());
  std::map<std::string, std::string> status;
  for (const auto& e : events(audit, "status")) status[e["candidate"]] = e["status"];
  for (const auto& e : events(audit, "fpe_started")) {
    CHECK(e["status"] == "approved");
    CHECK(status[e["candidate"]] != "rejected");
  }
  CHECK(events(audit, "fpe_started").size() == 3);  // two early, one late
  long long seq = -1;
  for (const auto& e : audit) {
    CHECK(e["seq"].get<long long>() > seq);
    seq = e["seq"];
  }
}

TEST_CASE("evolution with the mock generator") {
  const auto root = fresh_dir("evo_mock");
  auto c = tiny_config(root, "mock");
  c.evolution.llm_enabled = true;
  c.evolution.seed_library = {write_seed(root, "s", "-in_hazard")};
  llm::MockChatBackend backend({"```\n-2 * in_hazard\n```\n```\n-0.05 * speed\n```",
                                "```\n-in_hazard - 0.01\n```\n```\n-in_hazard * * 2\n```"});
  const auto r = run_evolution(c, &backend);
  REQUIRE(r.iterations.size() == 2);
  // Iteration one fills from the seed library and asks for the rest.
  CHECK(r.iterations[0].candidate_ids.size() == 2);
  REQUIRE(backend.requests().size() == 2);
  CHECK(backend.requests()[0].user.find("Best function so far") == std::string::npos);
  const auto& it1 = r.iterations[0];
  REQUIRE(it1.weighted_id.has_value());
  // The second prompt carries the best weighted function found in iteration one.
  const auto audit = read_audit(c.output.run_dir());
  const auto best_events = events(audit, "best_updated");
  REQUIRE_FALSE(best_events.empty());
  std::string first_best = best_events.front()["expression"];
  CHECK(backend.requests()[1].user.find(first_best) != std::string::npos);
  // p_best never decreases.
  double last = -std::numeric_limits<double>::infinity();
  for (const auto& e : audit) {
    if (e["event"] == "best_updated" || e["event"] == "best_retained") {
      CHECK(e["p_best"].get<double>() >= last);
      last = e["p_best"];
    }
  }
  CHECK(r.best.p_best == last);
  // The broken generated candidate is recorded but not trained.
  CHECK(r.iterations[1].approved_ids.size() == 1);
}

TEST_CASE("iterations without approvals are skipped and an empty run fails") {
  const auto root = fresh_dir("evo_skip");
  auto c = tiny_config(root, "skip");
  c.evolution.iterations = 1;
  c.evolution.seed_library = {write_seed(root, "bad", "5 * in_hazard")};
  ecf::AutoReviewer reviewer;
  evolution::RunStore store(c.output.run_dir());
  evolution::Evolution evo(c, nullptr, reviewer, &store);
  CHECK_THROWS_AS(evo.run(), evolution::NoViableCandidate);
  const auto audit = read_audit(c.output.run_dir());
  CHECK(events(audit, "iteration_skipped").size() == 1);
  CHECK(events(audit, "fpe_started").empty());
  CHECK(json::parse(metrics::read_text(c.output.run_dir() / "state.json"))["status"] == "failed");
}

TEST_CASE("generator enabled without a backend is refused") {
  const auto root = fresh_dir("evo_nobackend");
  auto c = tiny_config(root, "nb");
  c.evolution.llm_enabled = true;
  ecf::AutoReviewer reviewer;
  CHECK_THROWS_AS(evolution::Evolution(c, nullptr, reviewer, nullptr), std::invalid_argument);
}

// Review API.

namespace {

struct RunningService {
  service::Service svc;
  std::thread thread;
  int port;

  explicit RunningService(service::ServiceOptions o) : svc(std::move(o)) {
    port = svc.bind("127.0.0.1", 0);
    REQUIRE(port > 0);
    thread = std::thread([this] { svc.listen_after_bind(); });
    svc.wait_until_ready();
  }
  ~RunningService() {
    svc.stop();
    thread.join();
  }
  httplib::Client client() const {
    httplib::Client c("127.0.0.1", port);
    c.set_read_timeout(30, 0);
    return c;
  }
};

json body(const httplib::Result& r) { return json::parse(r->body); }

}  // namespace

TEST_CASE("review API over a finished run") {
  const auto root = fresh_dir("svc_runs");
  auto c = tiny_config(root, "svc");
  c.evolution.iterations = 1;
  c.evolution.population = 2;
  c.evolution.seed_library = {write_seed(root, "a", "-in_hazard"),
                              write_seed(root, "b", "5 * in_hazard")};
  run_evolution(c);

  service::ServiceOptions o;
  o.runs_root = root;
  RunningService s(o);
  auto cli = s.client();

  auto r = cli.Get("/api/runs");
  REQUIRE(r);
  CHECK(r->status == 200);
  CHECK(r->get_header_value("Access-Control-Allow-Origin") == "*");
  const auto runs = body(r)["runs"];
  REQUIRE(runs.size() == 1);
  CHECK(runs[0]["id"] == "svc");
  CHECK(runs[0]["status"] == "finished");

  r = cli.Get("/api/runs/svc");
  CHECK(r->status == 200);
  CHECK(body(r)["config"]["evolution"]["population"] == 2);
  CHECK(cli.Get("/api/runs/nope")->status == 404);

  r = cli.Get("/api/runs/svc/metrics");
  CHECK(r->status == 200);
  CHECK(body(r)["fpe"].size() == 2);  // one early row plus the late row
  CHECK_FALSE(body(r)["curves"].empty());

  r = cli.Get("/api/candidates?status=rejected");
  REQUIRE(r->status == 200);
  const auto rejected = body(r)["candidates"];
  REQUIRE(rejected.size() == 1);
  const std::string rid = rejected[0]["id"];
  CHECK(cli.Get("/api/candidates?status=whatever")->status == 400);

  r = cli.Get("/api/candidates/" + rid);
  CHECK(r->status == 200);
  CHECK(body(r)["source_text"] == "5 * in_hazard");
  CHECK(cli.Get("/api/candidates/ghost")->status == 404);

  r = cli.Get("/api/candidates/" + rid + "/heatmap?resolution=8");
  REQUIRE(r->status == 200);
  const auto hm = body(r);
  CHECK(hm["values"].size() == 8);
  CHECK(hm["hazards"].size() == 2);
  CHECK(cli.Get("/api/candidates/" + rid + "/heatmap?resolution=0")->status == 400);

  // Decisions on candidates that are not awaiting review conflict.
  r = cli.Post("/api/candidates/" + rid + "/decision", R"({"verdict":"approve"})",
               "application/json");
  CHECK(r->status == 409);
  r = cli.Post("/api/candidates/ghost/decision", R"({"verdict":"approve"})", "application/json");
  CHECK(r->status == 404);
  r = cli.Post("/api/candidates/" + rid + "/decision", R"({"verdict":"maybe"})",
               "application/json");
  CHECK(r->status == 400);
  r = cli.Post("/api/candidates/" + rid + "/decision", "not json", "application/json");
  CHECK(r->status == 400);

  auto pre = cli.Options("/api/runs");
  REQUIRE(pre);
  CHECK(pre->status == 204);
}

TEST_CASE("remote review through the API unblocks the loop") {
  const auto root = fresh_dir("svc_live");
  auto c = tiny_config(root, "live");
  c.evolution.iterations = 1;
  c.evolution.population = 1;
  c.evolution.seed_library = {write_seed(root, "a", "-in_hazard")};
  auto queue = std::make_shared<ecf::ReviewQueue>();
  evolution::RunStore store(c.output.run_dir());

  service::ServiceOptions o;
  o.runs_root = root;
  o.queue = queue;
  o.live_store = &store;
  RunningService s(o);

  ecf::RemoteReviewer reviewer(queue, 60s);
  evolution::Evolution evo(c, nullptr, reviewer, &store);
  std::optional<evolution::EvolutionResult> result;
  std::thread loop([&] { result = evo.run(); });

  auto cli = s.client();
  std::string id;
  for (int i = 0; i < 2000 && id.empty(); ++i) {
    auto r = cli.Get("/api/candidates?status=pending_review");
    if (r && r->status == 200 && !body(r)["candidates"].empty()) {
      id = body(r)["candidates"][0]["id"];
    } else {
      std::this_thread::sleep_for(5ms);
    }
  }
  REQUIRE_FALSE(id.empty());
  auto r = cli.Post("/api/candidates/" + id + "/decision",
                    R"({"verdict":"approve","note":"looks safe"})", "application/json");
  REQUIRE(r);
  CHECK(r->status == 200);
  CHECK(body(r)["status"] == "approved");
  r = cli.Post("/api/candidates/" + id + "/decision", R"({"verdict":"reject"})",
               "application/json");
  CHECK(r->status == 409);
  loop.join();
  REQUIRE(result.has_value());
  CHECK_FALSE(reviewer.last_timed_out());
  const auto audit = read_audit(c.output.run_dir());
  const auto api = events(audit, "api_decision");
  REQUIRE(api.size() == 2);
  CHECK(api[0]["outcome"] == "accepted");
  CHECK(api[0]["note"] == "looks safe");
  CHECK(api[1]["outcome"] == "conflict");
  const auto review = events(audit, "review_decision");
  REQUIRE(review.size() == 1);
  CHECK(review[0]["reviewer"] == "remote");
}
