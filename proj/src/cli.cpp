#include "evotune/cli.hpp"

#include <charconv>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ranges.h>
#include <json.hpp>

#include "evotune/bench.hpp"
#include "evotune/errors.hpp"
#include "evotune/model_io.hpp"
#include "evotune/service.hpp"
#include "evotune/tuning.hpp"
#include "evotune/worker_pool.hpp"

namespace evotune {

namespace {

struct TuneFlags {
  std::string data;
  std::string target;
  std::uint64_t seed = 0;
  std::size_t workers = 0;
  int generations = 10;
  int population = 10;
  double mutation_rate = 0.1;
  double elite_fraction = 0.5;
  bool no_kpca = false;
  bool no_standardize = false;
  double variance_target = 0.95;
  std::optional<double> gamma;
  std::string space;
  bool holdout_fitness = false;
  std::vector<std::string> drop_columns;
  int knn_k = 5;
  int max_iter = 500;
  bool memoize = false;
};

void add_tune_flags(CLI::App& cmd, TuneFlags& f) {
  cmd.add_option("--data", f.data, "CSV file")->required();
  cmd.add_option("--target", f.target, "Target column")->required();
  cmd.add_option("--seed", f.seed, "Master seed (GA, split, weights)");
  cmd.add_option("--workers", f.workers, "Parallel fitness workers (0: all cores; env EVOTUNE_WORKERS)");
  cmd.add_option("--generations", f.generations, "Number of generations");
  cmd.add_option("--population", f.population, "Population size");
  cmd.add_option("--mutation-rate", f.mutation_rate, "Per-offspring mutation probability");
  cmd.add_option("--elite-fraction", f.elite_fraction, "Fraction kept as parents");
  cmd.add_flag("--no-kpca", f.no_kpca, "Skip kernel PCA");
  cmd.add_flag("--no-standardize", f.no_standardize, "Skip z-score scaling");
  cmd.add_option("--variance-target", f.variance_target, "KPCA cumulative explained variance");
  cmd.add_option("--gamma", f.gamma, "RBF gamma (default 1 / feature count)");
  cmd.add_option("--space", f.space, "Search space JSON (inline or file path)");
  cmd.add_flag("--holdout-fitness", f.holdout_fitness, "Score fitness on a validation split of the training rows");
  cmd.add_option("--drop-columns", f.drop_columns, "Columns to ignore")->delimiter(',');
  cmd.add_option("--knn-k", f.knn_k, "Neighbours for KNN imputation");
  cmd.add_option("--max-iter", f.max_iter, "Training epochs per network");
  cmd.add_flag("--memoize", f.memoize, "Reuse fitness of repeated chromosomes");
}

std::size_t workers_from_env() {
  const char* env = std::getenv("EVOTUNE_WORKERS");
  if (!env || !*env) return 0;
  std::size_t value = 0;
  const auto [ptr, ec] = std::from_chars(env, env + std::strlen(env), value);
  if (ec != std::errc{} || *ptr != '\0') throw InvalidInput(fmt::format("EVOTUNE_WORKERS='{}' is not a count", env));
  return value;
}

SearchSpace read_space(const std::string& text) {
  if (text.empty()) return SearchSpace::defaults();
  std::string doc = text;
  if (text.find_first_not_of(" \t\r\n") != std::string::npos && text[text.find_first_not_of(" \t\r\n")] != '{') {
    std::ifstream in(text);
    if (!in) throw InvalidInput(fmt::format("cannot open search space file '{}'", text));
    std::ostringstream ss;
    ss << in.rdbuf();
    doc = ss.str();
  }
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(doc);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(fmt::format("invalid search space JSON: {}", e.what()));
  }
  return search_space_from_json(j);
}

TuneRequest make_request(const TuneFlags& f, const CLI::App& cmd) {
  TuneRequest req;
  req.pipeline.target = f.target;
  req.pipeline.drop_columns = f.drop_columns;
  req.pipeline.knn_k = f.knn_k;
  req.pipeline.standardize = !f.no_standardize;
  req.pipeline.use_kpca = !f.no_kpca;
  req.pipeline.gamma = f.gamma;
  req.pipeline.variance_target = f.variance_target;
  req.pipeline.split_seed = f.seed;
  req.pipeline.holdout_fitness = f.holdout_fitness;
  req.pipeline.validate();

  req.space = read_space(f.space);
  req.settings.population_size = f.population;
  req.settings.generations = f.generations;
  req.settings.mutation_rate = f.mutation_rate;
  req.settings.elite_fraction = f.elite_fraction;
  req.settings.master_seed = f.seed;
  req.settings.memoize = f.memoize;
  req.settings.workers = cmd.count("--workers") > 0 ? f.workers : workers_from_env();
  req.settings.validate();
  if (f.max_iter < 1) throw InvalidInput("max-iter must be >= 1");
  req.max_iter = f.max_iter;
  return req;
}

std::string generation_line(const GenerationStats& g) {
  return fmt::format("gen {}: min={:.4f} max={:.4f} best={:.4f} best_so_far={:.4f}", g.generation, g.min, g.max,
                     g.best_in_generation, g.best_so_far);
}

int cmd_tune(const TuneFlags& f, const CLI::App& cmd, const std::string& out_path, std::ostream& out) {
  const TuneRequest req = make_request(f, cmd);
  const TabularDataset raw = load_csv_file(f.data);
  RunHooks hooks;
  hooks.on_generation = [&out](const GenerationStats& g) { out << generation_line(g) << '\n' << std::flush; };
  const TuneOutcome o = tune(raw, req, hooks);

  const Chromosome& best = o.result.best;
  out << fmt::format("optimal: hidden=({}) activation={} learning_rate={} solver={}\n",
                     fmt::join(best.hidden_layers, ", "), to_string(best.activation), best.learning_rate,
                     to_string(best.solver));
  out << fmt::format("best fitness: {:.4f}\n", o.result.best_fitness);
  out << fmt::format("miga time: {:.2f} s ({})\n", o.miga_time_s, to_string(o.result.mode));
  out << fmt::format("training time: {:.2f} s\n", o.training_time_s);
  out << fmt::format("features: {} -> {} (train {} rows, test {} rows)\n", o.data.preprocessor.feature_names.size(),
                     o.data.preprocessor.output_dim(), o.data.split.train_x.rows(), o.data.split.test_x.rows());
  out << fmt::format("test accuracy: {:.4f}\n", o.test_accuracy);
  out << "confusion matrix:\n" << render_confusion(o.confusion);
  out << "classification report:\n" << render_report(o.report);
  if (!out_path.empty()) {
    save_model(o.model, out_path);
    out << fmt::format("model written to {}\n", out_path);
  }
  return 0;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) {
    if (c == '"') q += '"';
    q += c;
  }
  return q + '"';
}

int cmd_predict(const std::string& model_path, const std::string& data, bool proba, const std::string& out_path,
                std::ostream& out) {
  const SavedModel model = load_model(model_path);
  const TabularDataset rows = load_csv_file(data);
  if (rows.n_rows() == 0) throw InvalidInput(fmt::format("'{}' has no data rows", data));
  const Eigen::MatrixXd p = model.predict_proba(rows);
  const auto& classes = model.preprocessor.class_names;

  std::ostringstream csv;
  csv << "prediction";
  if (proba) {
    for (const auto& c : classes) csv << ',' << csv_field("p_" + c);
  }
  csv << '\n';
  for (Eigen::Index r = 0; r < p.rows(); ++r) {
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < p.cols(); ++c) {
      if (p(r, c) > p(r, best)) best = c;
    }
    csv << csv_field(classes[static_cast<std::size_t>(best)]);
    if (proba) {
      for (Eigen::Index c = 0; c < p.cols(); ++c) csv << fmt::format(",{:.17g}", p(r, c));
    }
    csv << '\n';
  }
  if (out_path.empty()) {
    out << csv.str();
  } else {
    std::ofstream f(out_path, std::ios::binary);
    if (!f) throw std::runtime_error(fmt::format("cannot write '{}'", out_path));
    f << csv.str();
  }
  return 0;
}

int cmd_benchmark(const TuneFlags& f, const CLI::App& cmd, std::string format, const std::string& reports_dir,
                  std::ostream& out) {
  if (format != "markdown" && format != "csv" && format != "json") {
    throw InvalidInput(fmt::format("unknown format '{}'", format));
  }
  TuneRequest req = make_request(f, cmd);
  const std::size_t workers = WorkerPool::resolve(req.settings.workers);
  const TabularDataset raw = load_csv_file(f.data);
  const PreparedData data = prepare(raw, req.pipeline);
  const std::string name = std::filesystem::path(f.data).stem().string();
  const BenchmarkOutcome b = run_benchmark(name, data.tuning, req.space, req.settings, workers, req.max_iter);
  const std::vector<TimingRecord> records{b.timing};

  if (format == "json") {
    nlohmann::json j = to_json(b.timing);
    j["best_fitness"] = b.parallel.best_fitness;
    j["best"] = to_json(b.parallel.best);
    out << j.dump(2) << '\n';
  } else if (format == "csv") {
    out << render_timing_csv(records);
  } else {
    out << render_timing_markdown(records) << '\n' << render_generation_table(b.parallel.history);
  }
  if (!reports_dir.empty()) write_reports(reports_dir, name + "-timing", records, b.parallel.history);
  return 0;
}

int cmd_inspect(const std::string& data, const std::string& model_path, std::ostream& out) {
  if (!data.empty()) {
    const TabularDataset ds = load_csv_file(data);
    out << fmt::format("{} rows, {} columns, {} missing cells\n", ds.n_rows(), ds.n_cols(), ds.missing_count());
    for (std::size_t c = 0; c < ds.n_cols(); ++c) {
      out << fmt::format("  {:<24} {:<12} missing={}\n", ds.column_names[c], to_string(ds.column_kinds[c]),
                         ds.missing_count(c));
    }
  }
  if (!model_path.empty()) {
    const SavedModel m = load_model(model_path);
    const auto& pre = m.preprocessor;
    out << fmt::format("target: {} (classes: {})\n", pre.target, fmt::join(pre.class_names, ", "));
    out << fmt::format("input columns: {}\n", pre.columns.size());
    out << fmt::format("encoded features: {}\n", pre.feature_names.size());
    out << fmt::format("standardized: {}\n", pre.standardization ? "yes" : "no");
    if (pre.kpca) {
      out << fmt::format("kpca: gamma={} components={}\n", pre.kpca->gamma, pre.kpca->n_components);
    } else {
      out << "kpca: none\n";
    }
    out << fmt::format("mlp: hidden=({}) activation={} learning_rate={} solver={}\n",
                       fmt::join(m.config.hidden_layers, ", "), to_string(m.config.activation),
                       m.config.learning_rate_init, to_string(m.config.solver));
  }
  if (data.empty() && model_path.empty()) throw InvalidInput("inspect needs --data or --model");
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Genetic-algorithm hyperparameter tuning for MLP classifiers", "evotune"};
  app.require_subcommand(1);

  TuneFlags tune_flags;
  std::string tune_out;
  auto* tune_cmd = app.add_subcommand("tune", "Search hyperparameters and train the best network");
  add_tune_flags(*tune_cmd, tune_flags);
  tune_cmd->add_option("--out", tune_out, "Write the trained model here");

  std::string model_path, predict_data, predict_out;
  bool proba = false;
  auto* predict_cmd = app.add_subcommand("predict", "Classify rows with a saved model");
  predict_cmd->add_option("--model", model_path, "Model file")->required();
  predict_cmd->add_option("--data", predict_data, "CSV file")->required();
  predict_cmd->add_flag("--proba", proba, "Add one probability column per class");
  predict_cmd->add_option("--out", predict_out, "Write CSV here instead of stdout");

  TuneFlags bench_flags;
  std::string format = "markdown";
  bool as_json = false;
  std::string reports_dir = "reports";
  auto* bench_cmd = app.add_subcommand("benchmark", "Time sequential against parallel tuning");
  add_tune_flags(*bench_cmd, bench_flags);
  bench_cmd->add_option("--format", format, "markdown, csv or json");
  bench_cmd->add_flag("--json", as_json, "Same as --format json");
  bench_cmd->add_option("--reports-dir", reports_dir, "Directory for Markdown/CSV reports ('' to skip)");

  std::string inspect_data, inspect_model;
  auto* inspect_cmd = app.add_subcommand("inspect", "Describe a CSV file or a saved model");
  inspect_cmd->add_option("--data", inspect_data, "CSV file");
  inspect_cmd->add_option("--model", inspect_model, "Model file");

  ServiceOptions service;
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string data_dir = "evotune-data", static_dir;
  std::size_t max_upload_mb = 32;
  auto* serve_cmd = app.add_subcommand("serve", "Run the HTTP API");
  serve_cmd->add_option("--host", host, "Bind address");
  serve_cmd->add_option("--port", port, "Port");
  serve_cmd->add_option("--data-dir", data_dir, "Where datasets, jobs and models are kept");
  serve_cmd->add_option("--static-dir", static_dir, "Serve UI assets from here");
  serve_cmd->add_option("--max-upload-mb", max_upload_mb, "Upload size limit");
  serve_cmd->add_option("--workers", service.workers, "Default fitness workers per job");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(std::move(reversed));
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*tune_cmd) return cmd_tune(tune_flags, *tune_cmd, tune_out, out);
    if (*predict_cmd) return cmd_predict(model_path, predict_data, proba, predict_out, out);
    if (*bench_cmd) return cmd_benchmark(bench_flags, *bench_cmd, as_json ? "json" : format, reports_dir, out);
    if (*inspect_cmd) return cmd_inspect(inspect_data, inspect_model, out);
    if (*serve_cmd) {
      service.data_dir = data_dir;
      service.static_dir = static_dir;
      service.max_upload_bytes = max_upload_mb << 20;
      if (serve_cmd->count("--workers") == 0) service.workers = workers_from_env();
      return serve(service, host, port);
    }
  } catch (const InvalidInput& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

}  // namespace evotune
