#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "evotune/mlp.hpp"

namespace evotune {

class WorkerPool;

// Discrete hyperparameter space; one option list per gene.
struct SearchSpace {
  std::vector<std::vector<int>> hidden_layer_options;
  std::vector<Activation> activation_options;
  std::vector<double> learning_rate_options;
  std::vector<Solver> solver_options;

  // (50), (100), (150), (50,50), (100,100) x relu/tanh/logistic x
  // 0.001/0.01/0.1 x adam/sgd
  static SearchSpace defaults();

  // Throws InvalidInput on an empty list or an invalid option.
  void validate() const;
  std::size_t cardinality() const;
};

nlohmann::json to_json(const SearchSpace& space);
// Missing keys keep their default option lists.
SearchSpace search_space_from_json(const nlohmann::json& j);

struct Chromosome {
  std::vector<int> hidden_layers;
  Activation activation = Activation::relu;
  double learning_rate = 0.001;
  Solver solver = Solver::adam;

  auto operator<=>(const Chromosome&) const = default;
};

bool contains(const SearchSpace& space, const Chromosome& c);
std::string to_string(const Chromosome& c);
nlohmann::json to_json(const Chromosome& c);
Chromosome chromosome_from_json(const nlohmann::json& j);

// MLP configuration encoded by a chromosome.
MlpConfig to_config(const Chromosome& c, std::uint64_t seed, int max_iter = 500);

struct GaSettings {
  int population_size = 10;
  int generations = 10;
  double mutation_rate = 0.1;
  double elite_fraction = 0.5;
  std::size_t workers = 0;  // 0: one per hardware thread
  std::uint64_t master_seed = 0;
  // Reuse the first fitness seen for a chromosome in later generations.
  bool memoize = false;

  void validate() const;
};

nlohmann::json to_json(const GaSettings& s);
GaSettings ga_settings_from_json(const nlohmann::json& j, GaSettings base = {});

struct GenerationStats {
  int generation = 0;  // 1-based
  std::vector<Chromosome> population;
  std::vector<double> fitnesses;
  double min = 0;
  double max = 0;
  double best_in_generation = 0;
  Chromosome best_in_generation_chromosome;
  double best_so_far = 0;
  Chromosome best_chromosome_so_far;
  double wall_time_s = 0;
};

nlohmann::json to_json(const GenerationStats& g);

enum class RunMode { sequential, parallel };
std::string_view to_string(RunMode m);

// Outcome of the evolutionary loop alone.
struct GaOutcome {
  Chromosome best;
  double best_fitness = 0;
  std::uint64_t best_seed = 0;  // derived seed of the evaluation that set best_fitness
  std::vector<GenerationStats> history;
  double total_time_s = 0;
  RunMode mode = RunMode::parallel;
};

struct TuningResult : GaOutcome {
  MlpConfig final_config;
  MlpModel<double> final_model;
};

// Features ready for the classifier. Fitness is accuracy on the test half.
struct PreparedSplit {
  Eigen::MatrixXd train_x;
  Eigen::VectorXi train_y;
  Eigen::MatrixXd test_x;
  Eigen::VectorXi test_y;
  int class_count = 2;
};

using FitnessFn = std::function<double(const Chromosome&, std::uint64_t seed)>;
using ProgressFn = std::function<void(const GenerationStats&)>;
using IncidentFn = std::function<void(std::string_view)>;

struct RunHooks {
  ProgressFn on_generation;  // called on the orchestrating thread
  IncidentFn on_incident;    // failed evaluations, callback errors
};

// 64-bit mix of (master seed, generation, individual index).
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t generation, std::uint64_t index);

std::vector<Chromosome> init_population(const SearchSpace& space, int n, std::mt19937_64& rng);

// Test-set accuracy of the MLP configured by `chrom`; 0 when training diverges.
double fitness(const Chromosome& chrom, const PreparedSplit& split, std::uint64_t seed, int max_iter = 500);

// Fitness of every chromosome, in population order. `seeds` pairs with `pop`.
// With a null pool the evaluations run inline. Throwing evaluations score 0.
std::vector<double> evaluate_population(std::span<const Chromosome> pop, std::span<const std::uint64_t> seeds,
                                        const FitnessFn& fn, WorkerPool* pool, const IncidentFn& on_incident = {});
std::vector<double> evaluate_population(std::span<const Chromosome> pop, const PreparedSplit& split,
                                        const GaSettings& settings, int generation = 1, int max_iter = 500);

// Indices of the top ceil(fraction * n) individuals, best first; ties keep the
// lower index first.
std::vector<std::size_t> elite_indices(std::span<const double> fitnesses, double elite_fraction);
std::vector<Chromosome> select_elite(std::span<const Chromosome> pop, std::span<const double> fitnesses,
                                     double elite_fraction);

Chromosome uniform_crossover(const Chromosome& p1, const Chromosome& p2, std::mt19937_64& rng);

// With probability mu, resamples one uniformly chosen gene from its option list.
Chromosome mutate(const Chromosome& c, const SearchSpace& space, double mu, std::mt19937_64& rng);

// The evolutionary loop over an arbitrary fitness function.
GaOutcome run_ga(const SearchSpace& space, const GaSettings& settings, const FitnessFn& fn,
                 const RunHooks& hooks = {});

// run_ga with MLP test accuracy as fitness, then retrains the winner (with the
// seed that produced its best score) on the training split.
TuningResult run_miga(const SearchSpace& space, const GaSettings& settings, const PreparedSplit& split,
                      const RunHooks& hooks = {}, int max_iter = 500);

}  // namespace evotune
