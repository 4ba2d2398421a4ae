#pragma once

#include <cstddef>
#include <filesystem>
#include <memory>
#include <string>

namespace httplib {
class Server;
}

namespace evotune {

struct ServiceOptions {
  std::filesystem::path data_dir = "evotune-data";
  std::size_t max_upload_bytes = std::size_t{32} << 20;
  std::filesystem::path static_dir;  // served at / when set
  std::size_t workers = 0;           // default pool size for jobs that do not set one
  int max_iter = 500;
};

// Dataset store, FIFO tuning-job runner and model registry behind the HTTP API.
//
//   POST /api/datasets                 CSV upload (multipart or raw body)
//   GET  /api/datasets/{id}
//   POST /api/jobs                     {dataset_id, target, space?, settings?, ...}
//   GET  /api/jobs, /api/jobs/{id}
//   GET  /api/jobs/{id}/events         server-sent events, replayed then live
//   GET  /api/models/{job_id}          model download
//   POST /api/models/{job_id}/predict  {rows: [{column: value}]}
//
// State lives in flat files under data_dir and is reloaded on construction;
// jobs that were running when the process stopped come back as failed.
class Service {
 public:
  explicit Service(ServiceOptions options);
  ~Service();

  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  void register_routes(httplib::Server& server);

  // "pending", "running", "done", "failed", or empty for an unknown id.
  std::string job_state(const std::string& job_id) const;

  // Blocks until the queue is empty and no job is running.
  void wait_idle() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// Runs the API on host:port until the process is stopped.
int serve(const ServiceOptions& options, const std::string& host, int port);

}  // namespace evotune
