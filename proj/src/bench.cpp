#include "evotune/bench.hpp"

#include <chrono>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <thread>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "evotune/worker_pool.hpp"

namespace evotune {

TimingRecord make_timing(std::string dataset_name, double sequential_s, double parallel_s, std::size_t workers) {
  TimingRecord t;
  t.dataset_name = std::move(dataset_name);
  t.sequential_s = sequential_s;
  t.parallel_s = parallel_s;
  t.workers = workers;
  t.reduction_pct = sequential_s > 0 ? 100.0 * (sequential_s - parallel_s) / sequential_s : 0.0;
  t.detected_cores = std::thread::hardware_concurrency();
  return t;
}

namespace {

bool bit_equal(double a, double b) { return std::memcmp(&a, &b, sizeof a) == 0; }

}  // namespace

bool same_history(std::span<const GenerationStats> a, std::span<const GenerationStats> b) {
  if (a.size() != b.size()) return false;
  for (std::size_t g = 0; g < a.size(); ++g) {
    if (a[g].population != b[g].population || a[g].fitnesses.size() != b[g].fitnesses.size()) return false;
    for (std::size_t i = 0; i < a[g].fitnesses.size(); ++i) {
      if (!bit_equal(a[g].fitnesses[i], b[g].fitnesses[i])) return false;
    }
    if (!bit_equal(a[g].best_so_far, b[g].best_so_far)) return false;
  }
  return true;
}

BenchmarkOutcome run_benchmark(const std::string& dataset_name, const PreparedSplit& split, const SearchSpace& space,
                               GaSettings settings, std::size_t workers, int max_iter) {
  using clock = std::chrono::steady_clock;
  workers = WorkerPool::resolve(workers);
  BenchmarkOutcome out;

  settings.workers = 1;
  auto t0 = clock::now();
  out.sequential = run_miga(space, settings, split, {}, max_iter);
  const double sequential_s = std::chrono::duration<double>(clock::now() - t0).count();

  settings.workers = workers;
  t0 = clock::now();
  out.parallel = run_miga(space, settings, split, {}, max_iter);
  const double parallel_s = std::chrono::duration<double>(clock::now() - t0).count();

  if (!same_history(out.sequential.history, out.parallel.history)) {
    throw DeterminismViolation(
        fmt::format("benchmark invalid: sequential and {}-worker runs produced different fitness histories", workers));
  }
  out.timing = make_timing(dataset_name, sequential_s, parallel_s, workers);
  return out;
}

std::string render_generation_table(std::span<const GenerationStats> history) {
  std::string out = "Generation  Min  Max  Best\n";
  for (const auto& g : history) {
    out += fmt::format("{}  {:.4f}  {:.4f}  {:.4f}\n", g.generation, g.min, g.max, g.best_in_generation);
  }
  return out;
}

std::string render_optimal_configs(std::span<const OptimalConfigRow> rows) {
  std::string out = "| Dataset | H/L | Activation | Learning Rate | Solver | Accuracy |\n";
  out += "|---|---|---|---|---|---|\n";
  for (const auto& r : rows) {
    out += fmt::format("| {} | {} | {} | {} | {} | {:.2f}% |\n", r.dataset_name, fmt::join(r.best.hidden_layers, ", "),
                       to_string(r.best.activation), r.best.learning_rate, to_string(r.best.solver),
                       100.0 * r.accuracy);
  }
  return out;
}

std::string render_timing_markdown(std::span<const TimingRecord> records) {
  std::string out = "| Dataset | Standard GA Time (s) | MIGA Time (s) | Reduction (%) | Workers | Cores |\n";
  out += "|---|---|---|---|---|---|\n";
  for (const auto& t : records) {
    out += fmt::format("| {} | {:.2f} | {:.2f} | {:.1f} | {} | {} |\n", t.dataset_name, t.sequential_s, t.parallel_s,
                       t.reduction_pct, t.workers, t.detected_cores);
  }
  return out;
}

std::string render_timing_csv(std::span<const TimingRecord> records) {
  std::string out = "dataset,sequential_s,parallel_s,reduction_pct,workers,detected_cores\n";
  for (const auto& t : records) {
    std::string name = t.dataset_name;
    if (name.find_first_of(",\"\n") != std::string::npos) {
      std::string quoted = "\"";
      for (char c : name) quoted += c == '"' ? std::string("\"\"") : std::string(1, c);
      name = quoted + "\"";
    }
    out += fmt::format("{},{:.6f},{:.6f},{:.3f},{},{}\n", name, t.sequential_s, t.parallel_s, t.reduction_pct,
                       t.workers, t.detected_cores);
  }
  return out;
}

nlohmann::json to_json(const TimingRecord& t) {
  return {{"dataset", t.dataset_name},   {"sequential_s", t.sequential_s}, {"parallel_s", t.parallel_s},
          {"reduction_pct", t.reduction_pct}, {"workers", t.workers},    {"detected_cores", t.detected_cores}};
}

void write_reports(const std::string& dir, const std::string& stem, std::span<const TimingRecord> records,
                   std::span<const GenerationStats> history) {
  std::filesystem::create_directories(dir);
  const auto base = std::filesystem::path(dir) / stem;
  {
    std::ofstream md(base.string() + ".md");
    md << "# Tuning time\n\n" << render_timing_markdown(records);
    if (!history.empty()) md << "\n# Generations\n\n```\n" << render_generation_table(history) << "```\n";
  }
  std::ofstream csv(base.string() + ".csv");
  csv << render_timing_csv(records);
}

}  // namespace evotune
