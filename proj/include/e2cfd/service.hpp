#ifndef E2CFD_SERVICE_HPP_
#define E2CFD_SERVICE_HPP_

#include <filesystem>
#include <memory>
#include <string>

#include "e2cfd/ecf.hpp"
#include "e2cfd/env.hpp"
#include "e2cfd/evolution.hpp"

namespace e2cfd::service {

struct ServiceOptions {
  std::filesystem::path runs_root = "runs";
  // Used for heatmaps when a run has no readable run.json.
  EnvConfig env;
  // Live review hand-off; null when no run is in progress under this server.
  std::shared_ptr<ecf::ReviewQueue> queue;
  // Audit sink for API decisions of the live run.
  evolution::RunStore* live_store = nullptr;
  std::string cors_origin = "*";
  int heatmap_resolution = 32;
};

// JSON API over the run directories plus the live review queue.
class Service {
 public:
  explicit Service(ServiceOptions options);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  // Returns the bound port, or -1. Port 0 picks a free port.
  int bind(const std::string& host, int port);
  // Blocks until stop().
  bool listen_after_bind();
  void stop();
  void wait_until_ready() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace e2cfd::service

#endif  // E2CFD_SERVICE_HPP_
