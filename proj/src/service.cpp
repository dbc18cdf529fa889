#include "e2cfd/service.hpp"

#include <algorithm>
#include <cstdlib>
#include <map>
#include <sstream>

#include <httplib.h>

#include "e2cfd/config.hpp"
#include "e2cfd/metrics.hpp"

namespace e2cfd::service {

using nlohmann::json;

namespace {

constexpr const char* kId = "([A-Za-z0-9_.-]+)";

bool safe_id(const std::string& id) {
  return !id.empty() && id != "." && id != ".." && id.find("..") == std::string::npos;
}

void send(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& message) {
  send(res, status, {{"error", message}});
}

std::optional<json> read_json(const std::filesystem::path& path) {
  std::error_code ec;
  if (!std::filesystem::is_regular_file(path, ec)) return std::nullopt;
  try {
    return json::parse(metrics::read_text(path));
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

// CSV with a header row into an array of objects; numeric cells become numbers.
json csv_rows(const std::filesystem::path& path) {
  json rows = json::array();
  std::error_code ec;
  if (!std::filesystem::is_regular_file(path, ec)) return rows;
  std::istringstream in(metrics::read_text(path));
  std::string line;
  std::vector<std::string> header;
  auto split = [](const std::string& s) {
    std::vector<std::string> cells;
    std::stringstream ss(s);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    return cells;
  };
  if (!std::getline(in, line)) return rows;
  header = split(line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split(line);
    json row = json::object();
    for (std::size_t i = 0; i < header.size() && i < cells.size(); ++i) {
      const char* begin = cells[i].c_str();
      char* end = nullptr;
      const double v = std::strtod(begin, &end);
      if (end != begin && *end == '\0') {
        row[header[i]] = v;
      } else {
        row[header[i]] = cells[i];
      }
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace

struct Service::Impl {
  ServiceOptions opt;
  httplib::Server server;

  std::vector<std::filesystem::path> run_dirs() const {
    std::vector<std::filesystem::path> out;
    std::error_code ec;
    if (!std::filesystem::is_directory(opt.runs_root, ec)) return out;
    for (const auto& e : std::filesystem::directory_iterator(opt.runs_root, ec)) {
      if (e.is_directory() && std::filesystem::exists(e.path() / "state.json")) {
        out.push_back(e.path());
      }
    }
    std::sort(out.begin(), out.end());
    return out;
  }

  std::optional<std::filesystem::path> candidate_file(const std::string& id) const {
    for (const auto& d : run_dirs()) {
      auto p = d / "candidates" / (id + ".json");
      if (std::filesystem::exists(p)) return p;
    }
    return std::nullopt;
  }

  // Live queue entries win over the persisted copy.
  std::optional<json> candidate(const std::string& id) const {
    if (opt.queue) {
      if (auto r = opt.queue->find(id)) return ecf::to_json(*r);
    }
    if (auto p = candidate_file(id)) return read_json(*p);
    return std::nullopt;
  }

  EnvConfig env_for(const std::filesystem::path& candidate_path) const {
    const auto run_json = candidate_path.parent_path().parent_path() / "run.json";
    if (auto j = read_json(run_json)) {
      try {
        return config_from_json(*j, run_json.parent_path()).env;
      } catch (const std::exception&) {
      }
    }
    return opt.env;
  }

  void audit(json event) {
    if (opt.live_store) opt.live_store->audit(std::move(event));
  }

  void routes();
};

void Service::Impl::routes() {
  server.set_default_headers({
      {"Access-Control-Allow-Origin", opt.cors_origin},
      {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"},
      {"Access-Control-Allow-Headers", "Content-Type"},
  });
  server.Options(R"(/api/.*)", [](const httplib::Request&, httplib::Response& res) {
    res.status = 204;
  });
  server.set_error_handler([](const httplib::Request&, httplib::Response& res) {
    if (res.body.empty()) {
      send_error(res, res.status, res.status == 404 ? "not found" : "error");
    }
  });
  server.set_exception_handler(
      [](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
        std::string what = "internal error";
        try {
          std::rethrow_exception(ep);
        } catch (const std::exception& e) {
          what = e.what();
        } catch (...) {
        }
        send_error(res, 500, what);
      });

  server.Get("/api/runs", [this](const httplib::Request&, httplib::Response& res) {
    json runs = json::array();
    for (const auto& d : run_dirs()) {
      const auto state = read_json(d / "state.json").value_or(json::object());
      json best = state.value("best", json::object());
      runs.push_back({{"id", d.filename().string()},
                      {"status", state.value("status", "unknown")},
                      {"p_best", best.value("p_best", json())},
                      {"wall_clock_s", state.value("wall_clock_s", json())}});
    }
    send(res, 200, {{"runs", runs}});
  });

  server.Get(std::string("/api/runs/") + kId,
             [this](const httplib::Request& req, httplib::Response& res) {
               const std::string id = req.matches[1];
               const auto dir = opt.runs_root / id;
               if (!safe_id(id) || !std::filesystem::exists(dir / "state.json")) {
                 return send_error(res, 404, "unknown run " + id);
               }
               const auto state = read_json(dir / "state.json").value_or(json::object());
               send(res, 200,
                    {{"id", id},
                     {"status", state.value("status", "unknown")},
                     {"config", read_json(dir / "run.json").value_or(json())},
                     {"best", state.value("best", json())},
                     {"iterations", state.value("iterations", json::array())},
                     {"score_expr", state.value("score_expr", json())},
                     {"wall_clock_s", state.value("wall_clock_s", json())}});
             });

  server.Get(std::string("/api/runs/") + kId + "/metrics",
             [this](const httplib::Request& req, httplib::Response& res) {
               const std::string id = req.matches[1];
               const auto dir = opt.runs_root / id;
               if (!safe_id(id) || !std::filesystem::exists(dir / "state.json")) {
                 return send_error(res, 404, "unknown run " + id);
               }
               send(res, 200,
                    {{"id", id},
                     {"fpe", csv_rows(dir / "metrics.csv")},
                     {"curves", csv_rows(dir / "curves.csv")}});
             });

  server.Get("/api/candidates", [this](const httplib::Request& req,
                                       httplib::Response& res) {
    std::optional<ecf::Status> filter;
    if (req.has_param("status")) {
      filter = ecf::status_from_string(req.get_param_value("status"));
      if (!filter) return send_error(res, 400, "unknown status filter");
    }
    std::map<std::string, json> found;
    for (const auto& d : run_dirs()) {
      std::error_code ec;
      for (const auto& e :
           std::filesystem::directory_iterator(d / "candidates", ec)) {
        if (e.path().extension() != ".json") continue;
        if (auto j = read_json(e.path())) found[j->value("id", "")] = *j;
      }
    }
    if (opt.queue) {
      for (const auto& r : opt.queue->pending()) found[r.id] = ecf::to_json(r);
    }
    json out = json::array();
    for (auto& [id, j] : found) {
      if (filter && j.value("status", "") != ecf::to_string(*filter)) continue;
      out.push_back(std::move(j));
    }
    send(res, 200, {{"candidates", out}});
  });

  server.Get(std::string("/api/candidates/") + kId,
             [this](const httplib::Request& req, httplib::Response& res) {
               const std::string id = req.matches[1];
               auto j = safe_id(id) ? candidate(id) : std::nullopt;
               if (!j) return send_error(res, 404, "unknown candidate " + id);
               send(res, 200, *j);
             });

  server.Get(std::string("/api/candidates/") + kId + "/heatmap",
             [this](const httplib::Request& req, httplib::Response& res) {
               const std::string id = req.matches[1];
               auto j = safe_id(id) ? candidate(id) : std::nullopt;
               if (!j) return send_error(res, 404, "unknown candidate " + id);
               int resolution = opt.heatmap_resolution;
               if (req.has_param("resolution")) {
                 try {
                   resolution = std::stoi(req.get_param_value("resolution"));
                 } catch (const std::exception&) {
                   resolution = 0;
                 }
                 if (resolution < 1 || resolution > 256) {
                   return send_error(res, 400, "resolution must be in [1, 256]");
                 }
               }
               const auto parsed = dsl::parse(j->value("source_text", ""),
                                              dsl::Limits::composite());
               if (!parsed.ok()) {
                 return send_error(res, 409, "candidate does not parse: " +
                                                 parsed.error().message());
               }
               const auto path = candidate_file(id);
               const EnvConfig env = path ? env_for(*path) : opt.env;
               metrics::HeatmapGrid grid;
               try {
                 grid = metrics::heatmap(parsed.expr(), env, resolution);
               } catch (const dsl::UnboundFeature& e) {
                 return send_error(res, 409, e.what());
               }
               auto axis = [](const metrics::Axis& a) {
                 return json{{"min", a.min}, {"max", a.max}, {"resolution", a.resolution}};
               };
               json hazards = json::array();
               for (const auto& h : env.hazards) {
                 hazards.push_back({{"x", h.center[0]}, {"y", h.center[1]},
                                    {"radius", h.radius}});
               }
               send(res, 200,
                    {{"id", id},
                     {"x", axis(grid.x)},
                     {"y", axis(grid.y)},
                     {"values", grid.values},
                     {"hazards", hazards},
                     {"goal", {{"x", env.goal.center[0]},
                               {"y", env.goal.center[1]},
                               {"radius", env.goal.radius}}}});
             });

  server.Post(std::string("/api/candidates/") + kId + "/decision",
              [this](const httplib::Request& req, httplib::Response& res) {
                const std::string id = req.matches[1];
                json body;
                try {
                  body = json::parse(req.body);
                } catch (const json::exception&) {
                  return send_error(res, 400, "body is not JSON");
                }
                if (!body.is_object() || !body.contains("verdict") ||
                    !body["verdict"].is_string()) {
                  return send_error(res, 400, "verdict must be \"approve\" or \"reject\"");
                }
                const std::string v = body["verdict"];
                if (v != "approve" && v != "reject") {
                  return send_error(res, 400, "verdict must be \"approve\" or \"reject\"");
                }
                std::string note;
                if (body.contains("note")) {
                  if (!body["note"].is_string()) {
                    return send_error(res, 400, "note must be a string");
                  }
                  note = body["note"];
                }
                for (const auto& [key, _] : body.items()) {
                  if (key != "verdict" && key != "note") {
                    return send_error(res, 400, "unknown field " + key);
                  }
                }
                const auto verdict =
                    v == "approve" ? ecf::Verdict::kApprove : ecf::Verdict::kReject;
                auto outcome = ecf::ReviewQueue::DecideResult::kNotFound;
                if (opt.queue) outcome = opt.queue->decide(id, verdict, note);
                if (outcome == ecf::ReviewQueue::DecideResult::kNotFound) {
                  // Not live: a persisted candidate has already left review.
                  if (safe_id(id) && candidate_file(id)) {
                    outcome = ecf::ReviewQueue::DecideResult::kAlreadyDecided;
                  } else {
                    return send_error(res, 404, "unknown candidate " + id);
                  }
                }
                const bool accepted = outcome == ecf::ReviewQueue::DecideResult::kAccepted;
                audit({{"event", "api_decision"},
                       {"candidate", id},
                       {"verdict", v},
                       {"note", note},
                       {"outcome", accepted ? "accepted" : "conflict"}});
                if (!accepted) return send_error(res, 409, "candidate already decided");
                send(res, 200,
                     {{"id", id},
                      {"verdict", v},
                      {"status", v == "approve" ? "approved" : "rejected"}});
              });
}

Service::Service(ServiceOptions options) : impl_(std::make_unique<Impl>()) {
  impl_->opt = std::move(options);
  impl_->routes();
}

Service::~Service() { stop(); }

int Service::bind(const std::string& host, int port) {
  if (port == 0) return impl_->server.bind_to_any_port(host);
  return impl_->server.bind_to_port(host, port) ? port : -1;
}

bool Service::listen_after_bind() { return impl_->server.listen_after_bind(); }

void Service::stop() {
  if (impl_) impl_->server.stop();
}

void Service::wait_until_ready() const { impl_->server.wait_until_ready(); }

}  // namespace e2cfd::service
