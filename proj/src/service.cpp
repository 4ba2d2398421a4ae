#include "evotune/service.hpp"

#include <chrono>
#include <condition_variable>
#include <deque>
#include <fstream>
#include <map>
#include <mutex>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include <fmt/format.h>
#include <json.hpp>

#include "evotune/errors.hpp"
#include "evotune/model_io.hpp"
#include "evotune/tuning.hpp"

// after Eigen: <resolv.h> defines _res
#include <httplib.h>

namespace evotune {

namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;

struct HttpError : std::runtime_error {
  HttpError(int status, std::string message, json extra = json::object())
      : std::runtime_error(message), status(status), extra(std::move(extra)) {}
  int status;
  json extra;
};

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& message, json extra = json::object()) {
  extra["error"] = message;
  send_json(res, status, extra);
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error(fmt::format("cannot read '{}'", path.string()));
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_atomic(const fs::path& path, std::string_view content) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw std::runtime_error(fmt::format("cannot write '{}'", tmp.string()));
  }
  fs::rename(tmp, path);
}

json parse_body(const httplib::Request& req) {
  try {
    return json::parse(req.body);
  } catch (const json::exception& e) {
    throw HttpError(400, fmt::format("request body is not valid JSON: {}", e.what()));
  }
}

bool valid_id(const std::string& id) {
  return !id.empty() && id.size() <= 64 &&
         std::all_of(id.begin(), id.end(), [](char c) { return std::isxdigit(static_cast<unsigned char>(c)); });
}

struct DatasetInfo {
  std::string id;
  json meta;  // dataset_id, filename, n_rows, columns
};

struct Job {
  std::string id;
  std::string dataset_id;
  json request;
  std::uint64_t seq = 0;
  std::string state = "pending";
  std::string error;
  std::vector<json> events;  // generation events, then one summary event

  json to_json() const {
    return {{"job_id", id},   {"dataset_id", dataset_id}, {"seq", seq},       {"state", state},
            {"error", error.empty() ? json(nullptr) : json(error)}, {"request", request}, {"events", events}};
  }

  json status() const {
    json s{{"job_id", id},
           {"dataset_id", dataset_id},
           {"state", state},
           {"error", error.empty() ? json(nullptr) : json(error)},
           {"generations_done", 0},
           {"summary", nullptr}};
    int gens = 0;
    for (const auto& e : events) {
      if (e.value("type", "") == "generation") ++gens;
      else s["summary"] = e;
    }
    s["generations_done"] = gens;
    return s;
  }
};

}  // namespace

struct Service::Impl {
  ServiceOptions options;
  fs::path datasets_dir, jobs_dir, models_dir;

  mutable std::mutex mutex;
  mutable std::condition_variable changed;  // new events, state changes, queue changes
  std::map<std::string, DatasetInfo> datasets;
  std::map<std::string, std::shared_ptr<Job>> jobs;
  std::map<std::string, std::shared_ptr<const SavedModel>> models;
  std::deque<std::string> queue;
  std::uint64_t next_seq = 1;
  bool busy = false;
  bool stopping = false;
  std::mt19937_64 id_rng{std::random_device{}()};
  std::thread runner;

  explicit Impl(ServiceOptions opts) : options(std::move(opts)) {
    datasets_dir = options.data_dir / "datasets";
    jobs_dir = options.data_dir / "jobs";
    models_dir = options.data_dir / "models";
    for (const auto& d : {datasets_dir, jobs_dir, models_dir}) fs::create_directories(d);
    load_state();
    runner = std::thread([this] { run_loop(); });
  }

  ~Impl() {
    {
      std::lock_guard lock(mutex);
      stopping = true;
    }
    changed.notify_all();
    runner.join();
  }

  std::string new_id() {
    return fmt::format("{:016x}", id_rng());
  }

  void load_state() {
    for (const auto& entry : fs::directory_iterator(datasets_dir)) {
      if (entry.path().extension() != ".json") continue;
      try {
        json meta = json::parse(read_file(entry.path()));
        const std::string id = meta.at("dataset_id").get<std::string>();
        if (fs::exists(datasets_dir / (id + ".csv"))) datasets[id] = DatasetInfo{id, std::move(meta)};
      } catch (const std::exception&) {
        // unreadable metadata: the dataset is skipped
      }
    }
    std::vector<std::shared_ptr<Job>> pending;
    for (const auto& entry : fs::directory_iterator(jobs_dir)) {
      if (entry.path().extension() != ".json") continue;
      try {
        const json j = json::parse(read_file(entry.path()));
        auto job = std::make_shared<Job>();
        job->id = j.at("job_id").get<std::string>();
        job->dataset_id = j.at("dataset_id").get<std::string>();
        job->request = j.at("request");
        job->seq = j.value("seq", std::uint64_t{0});
        job->state = j.at("state").get<std::string>();
        if (j.contains("error") && j["error"].is_string()) job->error = j["error"].get<std::string>();
        job->events = j.at("events").get<std::vector<json>>();
        if (job->state == "running") {
          job->state = "failed";
          job->error = "interrupted";
          job->events.push_back({{"type", "summary"}, {"state", "failed"}, {"error", job->error}});
          persist(*job);
        } else if (job->state == "pending") {
          pending.push_back(job);
        }
        next_seq = std::max(next_seq, job->seq + 1);
        jobs[job->id] = std::move(job);
      } catch (const std::exception&) {
        // unreadable job record: skipped
      }
    }
    std::sort(pending.begin(), pending.end(), [](const auto& a, const auto& b) { return a->seq < b->seq; });
    for (const auto& job : pending) queue.push_back(job->id);
  }

  void persist(const Job& job) const { write_file_atomic(jobs_dir / (job.id + ".json"), job.to_json().dump()); }

  void push_event(Job& job, json event) {
    {
      std::lock_guard lock(mutex);
      job.events.push_back(std::move(event));
      persist(job);
    }
    changed.notify_all();
  }

  void set_state(Job& job, std::string state) {
    {
      std::lock_guard lock(mutex);
      job.state = std::move(state);
      persist(job);
    }
    changed.notify_all();
  }

  void run_loop() {
    for (;;) {
      std::shared_ptr<Job> job;
      {
        std::unique_lock lock(mutex);
        changed.wait(lock, [this] { return stopping || !queue.empty(); });
        if (stopping) return;
        job = jobs.at(queue.front());
        queue.pop_front();
        busy = true;
      }
      run_job(*job);
      {
        std::lock_guard lock(mutex);
        busy = false;
      }
      changed.notify_all();
    }
  }

  TuneRequest build_request(const json& body) const {
    TuneRequest req;
    req.max_iter = options.max_iter;
    req.settings.workers = options.workers;
    req.pipeline.target = body.at("target").get<std::string>();
    if (body.contains("space") && !body["space"].is_null()) req.space = search_space_from_json(body["space"]);
    if (body.contains("settings") && !body["settings"].is_null()) {
      req.settings = ga_settings_from_json(body["settings"], req.settings);
    }
    req.pipeline.split_seed = req.settings.master_seed;
    req.pipeline.use_kpca = body.value("use_kpca", true);
    req.pipeline.holdout_fitness = body.value("holdout_fitness", false);
    req.pipeline.standardize = body.value("standardize", true);
    req.pipeline.knn_k = body.value("knn_k", 5);
    req.pipeline.variance_target = body.value("variance_target", 0.95);
    if (body.contains("gamma") && !body["gamma"].is_null()) req.pipeline.gamma = body["gamma"].get<double>();
    if (body.contains("drop_columns")) req.pipeline.drop_columns = body["drop_columns"].get<std::vector<std::string>>();
    req.pipeline.validate();
    req.space.validate();
    return req;
  }

  void run_job(Job& job) {
    set_state(job, "running");
    try {
      const TabularDataset raw = load_csv_file((datasets_dir / (job.dataset_id + ".csv")).string());
      const TuneRequest request = build_request(job.request);
      RunHooks hooks;
      hooks.on_generation = [&](const GenerationStats& g) {
        json e = to_json(g);
        e["type"] = "generation";
        push_event(job, std::move(e));
      };
      TuneOutcome outcome = tune(raw, request, hooks);
      outcome.model.metadata["job_id"] = job.id;
      outcome.model.metadata["dataset_id"] = job.dataset_id;
      save_model(outcome.model, (models_dir / (job.id + ".json")).string());
      json summary = summary_json(outcome);
      summary["type"] = "summary";
      summary["state"] = "done";
      summary["error"] = nullptr;
      {
        std::lock_guard lock(mutex);
        models[job.id] = std::make_shared<const SavedModel>(std::move(outcome.model));
        job.events.push_back(std::move(summary));
        job.state = "done";
        persist(job);
      }
    } catch (const std::exception& e) {
      std::lock_guard lock(mutex);
      job.error = e.what();
      job.events.push_back({{"type", "summary"}, {"state", "failed"}, {"error", job.error}});
      job.state = "failed";
      persist(job);
    }
    changed.notify_all();
  }

  std::shared_ptr<Job> find_job(const std::string& id) const {
    std::lock_guard lock(mutex);
    auto it = jobs.find(id);
    if (it == jobs.end()) throw HttpError(404, fmt::format("unknown job '{}'", id));
    return it->second;
  }

  std::shared_ptr<const SavedModel> finished_model(const std::string& id) {
    auto job = find_job(id);
    std::lock_guard lock(mutex);
    if (job->state != "done") throw HttpError(409, fmt::format("job '{}' is {}", id, job->state));
    auto it = models.find(id);
    if (it != models.end()) return it->second;
    auto model = std::make_shared<const SavedModel>(load_model((models_dir / (id + ".json")).string()));
    models[id] = model;
    return model;
  }

  // ---- handlers ----

  void upload_dataset(const httplib::Request& req, httplib::Response& res) {
    std::string content;
    std::string filename = "upload.csv";
    if (req.is_multipart_form_data()) {
      if (req.has_file("file")) {
        const auto f = req.get_file_value("file");
        content = f.content;
        if (!f.filename.empty()) filename = f.filename;
      } else if (!req.files.empty()) {
        content = req.files.begin()->second.content;
        if (!req.files.begin()->second.filename.empty()) filename = req.files.begin()->second.filename;
      }
    } else {
      content = req.body;
    }
    if (content.empty()) throw HttpError(400, "empty upload");

    TabularDataset ds;
    try {
      std::istringstream in(content);
      ds = load_csv(in);
    } catch (const ParseError& e) {
      throw HttpError(400, e.what(), {{"row", e.line()}});
    } catch (const InvalidInput& e) {
      throw HttpError(400, e.what());
    }

    json columns = json::array();
    for (std::size_t c = 0; c < ds.n_cols(); ++c) {
      columns.push_back({{"name", ds.column_names[c]},
                         {"kind", to_string(ds.column_kinds[c])},
                         {"missing_count", ds.missing_count(c)}});
    }
    std::string id;
    {
      std::lock_guard lock(mutex);
      id = new_id();
    }
    json meta{{"dataset_id", id}, {"filename", filename}, {"n_rows", ds.n_rows()}, {"columns", std::move(columns)}};
    write_file_atomic(datasets_dir / (id + ".csv"), content);
    write_file_atomic(datasets_dir / (id + ".json"), meta.dump());
    {
      std::lock_guard lock(mutex);
      datasets[id] = DatasetInfo{id, meta};
    }
    send_json(res, 201, meta);
  }

  void get_dataset(const httplib::Request& req, httplib::Response& res) {
    const auto& id = req.path_params.at("id");
    std::lock_guard lock(mutex);
    auto it = datasets.find(id);
    if (it == datasets.end()) throw HttpError(404, fmt::format("unknown dataset '{}'", id));
    send_json(res, 200, it->second.meta);
  }

  void create_job(const httplib::Request& req, httplib::Response& res) {
    const json body = parse_body(req);
    if (!body.is_object()) throw HttpError(400, "request body must be a JSON object");
    static const std::set<std::string> known{"dataset_id", "target",        "space",      "settings",
                                             "use_kpca",   "holdout_fitness", "drop_columns", "standardize",
                                             "knn_k",      "variance_target", "gamma"};
    for (const auto& [key, _] : body.items()) {
      if (!known.contains(key)) throw HttpError(422, fmt::format("unknown field '{}'", key));
    }
    if (!body.contains("dataset_id") || !body["dataset_id"].is_string()) {
      throw HttpError(422, "dataset_id is required");
    }
    if (!body.contains("target") || !body["target"].is_string()) throw HttpError(422, "target is required");
    const auto dataset_id = body["dataset_id"].get<std::string>();
    json columns;
    {
      std::lock_guard lock(mutex);
      auto it = datasets.find(dataset_id);
      if (it == datasets.end()) throw HttpError(404, fmt::format("unknown dataset '{}'", dataset_id));
      columns = it->second.meta.at("columns");
    }
    const auto target = body["target"].get<std::string>();
    const bool has_target = std::any_of(columns.begin(), columns.end(),
                                        [&](const json& c) { return c.at("name").get<std::string>() == target; });
    if (!has_target) throw HttpError(422, fmt::format("dataset has no column '{}'", target));
    try {
      build_request(body);
    } catch (const InvalidInput& e) {
      throw HttpError(422, e.what());
    } catch (const json::exception& e) {
      throw HttpError(422, e.what());
    }

    auto job = std::make_shared<Job>();
    job->dataset_id = dataset_id;
    job->request = body;
    {
      std::lock_guard lock(mutex);
      job->id = new_id();
      job->seq = next_seq++;
      persist(*job);
      jobs[job->id] = job;
      queue.push_back(job->id);
    }
    changed.notify_all();
    send_json(res, 202, {{"job_id", job->id}, {"state", "pending"}});
  }

  void list_jobs(httplib::Response& res) const {
    std::vector<std::shared_ptr<Job>> all;
    {
      std::lock_guard lock(mutex);
      for (const auto& [_, j] : jobs) all.push_back(j);
    }
    std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) { return a->seq < b->seq; });
    json out = json::array();
    std::lock_guard lock(mutex);
    for (const auto& j : all) {
      json s = j->status();
      s.erase("summary");
      out.push_back(std::move(s));
    }
    send_json(res, 200, {{"jobs", std::move(out)}});
  }

  void job_status(const httplib::Request& req, httplib::Response& res) const {
    auto job = find_job(req.path_params.at("id"));
    std::lock_guard lock(mutex);
    send_json(res, 200, job->status());
  }

  void job_events(const httplib::Request& req, httplib::Response& res) {
    auto job = find_job(req.path_params.at("id"));
    res.set_header("Cache-Control", "no-cache");
    res.set_chunked_content_provider(
        "text/event-stream", [this, job, sent = std::size_t{0}](std::size_t, httplib::DataSink& sink) mutable {
          std::vector<json> fresh;
          {
            std::unique_lock lock(mutex);
            changed.wait_for(lock, std::chrono::milliseconds(200),
                             [&] { return stopping || job->events.size() > sent; });
            fresh.assign(job->events.begin() + static_cast<std::ptrdiff_t>(sent), job->events.end());
            sent = job->events.size();
          }
          for (const auto& e : fresh) {
            const std::string line = "data: " + e.dump() + "\n\n";
            if (!sink.write(line.data(), line.size())) return false;
            if (e.value("type", "") == "summary") {
              sink.done();
              return true;
            }
          }
          return sink.is_writable();
        });
  }

  void download_model(const httplib::Request& req, httplib::Response& res) {
    const auto& id = req.path_params.at("id");
    auto model = finished_model(id);
    res.status = 200;
    res.set_header("Content-Disposition", fmt::format("attachment; filename=\"evotune-model-{}.json\"", id));
    res.set_content(read_file(models_dir / (id + ".json")), "application/json");
  }

  void predict(const httplib::Request& req, httplib::Response& res) {
    auto model = finished_model(req.path_params.at("id"));
    const json body = parse_body(req);
    if (!body.is_object() || !body.contains("rows") || !body["rows"].is_array()) {
      throw HttpError(422, "body must be {\"rows\": [...]}");
    }
    const json& rows = body["rows"];
    if (rows.empty()) throw HttpError(422, "rows is empty");

    const Preprocessor& pre = model->preprocessor;
    std::set<std::string> allowed{pre.target};
    for (const auto& c : model->metadata.value("dropped_columns", std::vector<std::string>{})) allowed.insert(c);
    for (const auto& c : pre.columns) allowed.insert(c.name);

    std::set<std::string> missing, unknown;
    TabularDataset ds;
    for (const auto& c : pre.columns) {
      ds.column_names.push_back(c.name);
      ds.column_kinds.push_back(c.kind);
    }
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const json& row = rows[r];
      if (!row.is_object()) throw HttpError(422, fmt::format("row {} is not an object", r + 1));
      for (const auto& [key, _] : row.items()) {
        if (!allowed.contains(key)) unknown.insert(key);
      }
      for (const auto& c : pre.columns) {
        auto it = row.find(c.name);
        if (it == row.end()) {
          missing.insert(c.name);
          ds.cells.emplace_back();
        } else if (it->is_null()) {
          ds.cells.emplace_back();
        } else if (it->is_string()) {
          const auto text = it->get<std::string>();
          if (default_missing_tokens().contains(text)) ds.cells.emplace_back();
          else ds.cells.emplace_back(text);
        } else if (it->is_number()) {
          ds.cells.emplace_back(it->dump());
        } else {
          throw HttpError(422, fmt::format("row {} column '{}': expected a string, number or null", r + 1, c.name));
        }
      }
    }
    if (!missing.empty() || !unknown.empty()) {
      throw HttpError(422, "rows do not match the model's columns",
                      {{"missing_columns", missing}, {"unknown_columns", unknown}});
    }

    Eigen::MatrixXd proba;
    try {
      proba = model->predict_proba(ds);
    } catch (const InvalidInput& e) {
      throw HttpError(422, e.what());
    }
    json predictions = json::array();
    json probabilities = json::array();
    for (Eigen::Index r = 0; r < proba.rows(); ++r) {
      Eigen::Index best = 0;
      for (Eigen::Index c = 1; c < proba.cols(); ++c) {
        if (proba(r, c) > proba(r, best)) best = c;
      }
      predictions.push_back(pre.class_names[static_cast<std::size_t>(best)]);
      std::vector<double> p(proba.cols());
      for (Eigen::Index c = 0; c < proba.cols(); ++c) p[static_cast<std::size_t>(c)] = proba(r, c);
      probabilities.push_back(p);
    }
    send_json(res, 200,
              {{"predictions", std::move(predictions)},
               {"probabilities", std::move(probabilities)},
               {"class_names", pre.class_names}});
  }
};

Service::Service(ServiceOptions options) : impl_(std::make_unique<Impl>(std::move(options))) {}

Service::~Service() = default;

std::string Service::job_state(const std::string& job_id) const {
  std::lock_guard lock(impl_->mutex);
  auto it = impl_->jobs.find(job_id);
  return it == impl_->jobs.end() ? std::string{} : it->second->state;
}

void Service::wait_idle() const {
  std::unique_lock lock(impl_->mutex);
  impl_->changed.wait(lock, [this] { return impl_->queue.empty() && !impl_->busy; });
}

void Service::register_routes(httplib::Server& server) {
  Impl* impl = impl_.get();
  auto wrap = [](auto fn) {
    return [fn](const httplib::Request& req, httplib::Response& res) {
      try {
        fn(req, res);
      } catch (const HttpError& e) {
        send_error(res, e.status, e.what(), e.extra);
      } catch (const InvalidInput& e) {
        send_error(res, 422, e.what());
      } catch (const std::exception& e) {
        send_error(res, 500, e.what());
      }
    };
  };
  auto checked_id = [](const httplib::Request& req) {
    const auto& id = req.path_params.at("id");
    if (!valid_id(id)) throw HttpError(404, fmt::format("unknown id '{}'", id));
  };

  server.set_payload_max_length(impl->options.max_upload_bytes);
  server.set_error_handler([](const httplib::Request&, httplib::Response& res) {
    if (res.body.empty()) {
      send_error(res, res.status, res.status == 413 ? "upload exceeds the size limit" : httplib::status_message(res.status));
    }
  });

  server.Post("/api/datasets", wrap([impl](const auto& req, auto& res) { impl->upload_dataset(req, res); }));
  server.Get("/api/datasets/:id", wrap([impl, checked_id](const auto& req, auto& res) {
               checked_id(req);
               impl->get_dataset(req, res);
             }));
  server.Post("/api/jobs", wrap([impl](const auto& req, auto& res) { impl->create_job(req, res); }));
  server.Get("/api/jobs", wrap([impl](const auto&, auto& res) { impl->list_jobs(res); }));
  server.Get("/api/jobs/:id", wrap([impl, checked_id](const auto& req, auto& res) {
               checked_id(req);
               impl->job_status(req, res);
             }));
  server.Get("/api/jobs/:id/events", wrap([impl, checked_id](const auto& req, auto& res) {
               checked_id(req);
               impl->job_events(req, res);
             }));
  server.Get("/api/models/:id", wrap([impl, checked_id](const auto& req, auto& res) {
               checked_id(req);
               impl->download_model(req, res);
             }));
  server.Post("/api/models/:id/predict", wrap([impl, checked_id](const auto& req, auto& res) {
                checked_id(req);
                impl->predict(req, res);
              }));
  if (!impl->options.static_dir.empty()) server.set_mount_point("/", impl->options.static_dir.string());
}

int serve(const ServiceOptions& options, const std::string& host, int port) {
  Service service(options);
  httplib::Server server;
  service.register_routes(server);
  fmt::print(stderr, "listening on http://{}:{} (data dir {})\n", host, port, options.data_dir.string());
  if (!server.listen(host, port)) {
    fmt::print(stderr, "cannot listen on {}:{}\n", host, port);
    return 1;
  }
  return 0;
}

}  // namespace evotune
