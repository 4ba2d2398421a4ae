#pragma once

#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "evotune/miga.hpp"

namespace evotune {

struct TimingRecord {
  std::string dataset_name;
  double sequential_s = 0;
  double parallel_s = 0;
  std::size_t workers = 1;
  double reduction_pct = 0;  // 100 * (sequential - parallel) / sequential
  unsigned detected_cores = 0;
};

TimingRecord make_timing(std::string dataset_name, double sequential_s, double parallel_s, std::size_t workers);

class DeterminismViolation : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct BenchmarkOutcome {
  TimingRecord timing;
  TuningResult sequential;
  TuningResult parallel;
};

// True when both runs visited the same populations with bit-identical fitness.
bool same_history(std::span<const GenerationStats> a, std::span<const GenerationStats> b);

// Times run_miga with one worker and with `workers` workers under the same
// master seed. Throws DeterminismViolation when the two histories differ.
BenchmarkOutcome run_benchmark(const std::string& dataset_name, const PreparedSplit& split, const SearchSpace& space,
                               GaSettings settings, std::size_t workers, int max_iter = 500);

// "Generation  Min  Max  Best" table, four decimals, Best = best in generation.
std::string render_generation_table(std::span<const GenerationStats> history);

// Optimal configuration row set: Dataset | H/L | Activation | Learning Rate | Solver | Accuracy
struct OptimalConfigRow {
  std::string dataset_name;
  Chromosome best;
  double accuracy = 0;
};
std::string render_optimal_configs(std::span<const OptimalConfigRow> rows);

std::string render_timing_markdown(std::span<const TimingRecord> records);
std::string render_timing_csv(std::span<const TimingRecord> records);
nlohmann::json to_json(const TimingRecord& t);

// Writes <dir>/<stem>.md and <dir>/<stem>.csv.
void write_reports(const std::string& dir, const std::string& stem, std::span<const TimingRecord> records,
                   std::span<const GenerationStats> history = {});

}  // namespace evotune
