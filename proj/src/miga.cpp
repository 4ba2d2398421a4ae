#include "evotune/miga.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <future>
#include <map>
#include <numeric>
#include <optional>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "evotune/errors.hpp"
#include "evotune/metrics.hpp"
#include "evotune/worker_pool.hpp"

namespace evotune {

SearchSpace SearchSpace::defaults() {
  return SearchSpace{
      {{50}, {100}, {150}, {50, 50}, {100, 100}},
      {Activation::relu, Activation::tanh, Activation::logistic},
      {0.001, 0.01, 0.1},
      {Solver::adam, Solver::sgd},
  };
}

void SearchSpace::validate() const {
  if (hidden_layer_options.empty()) throw InvalidInput("search space: hidden_layer_options is empty");
  if (activation_options.empty()) throw InvalidInput("search space: activation_options is empty");
  if (learning_rate_options.empty()) throw InvalidInput("search space: learning_rate_options is empty");
  if (solver_options.empty()) throw InvalidInput("search space: solver_options is empty");
  for (const auto& h : hidden_layer_options) {
    if (h.empty() || std::any_of(h.begin(), h.end(), [](int v) { return v < 1; })) {
      throw InvalidInput("search space: hidden layer sizes must be non-empty lists of positive counts");
    }
  }
  for (double lr : learning_rate_options) {
    if (!(lr > 0) || !std::isfinite(lr)) throw InvalidInput("search space: learning rates must be positive");
  }
}

std::size_t SearchSpace::cardinality() const {
  return hidden_layer_options.size() * activation_options.size() * learning_rate_options.size() *
         solver_options.size();
}

nlohmann::json to_json(const SearchSpace& space) {
  nlohmann::json acts = nlohmann::json::array();
  for (auto a : space.activation_options) acts.push_back(to_string(a));
  nlohmann::json solvers = nlohmann::json::array();
  for (auto s : space.solver_options) solvers.push_back(to_string(s));
  return {{"hidden_layer_options", space.hidden_layer_options},
          {"activation_options", std::move(acts)},
          {"learning_rate_options", space.learning_rate_options},
          {"solver_options", std::move(solvers)}};
}

namespace {

template <typename T>
T json_get(const nlohmann::json& j, std::string_view what) {
  try {
    return j.get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(fmt::format("{}: {}", what, e.what()));
  }
}

}  // namespace

SearchSpace search_space_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw InvalidInput("search space must be a JSON object");
  static const std::vector<std::string> known{"hidden_layer_options", "activation_options", "learning_rate_options",
                                              "solver_options"};
  for (const auto& [key, _] : j.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw InvalidInput(fmt::format("search space: unknown key '{}'", key));
    }
  }
  SearchSpace space = SearchSpace::defaults();
  if (auto it = j.find("hidden_layer_options"); it != j.end()) {
    if (!it->is_array()) throw InvalidInput("search space: hidden_layer_options must be an array");
    space.hidden_layer_options.clear();
    for (const auto& opt : *it) {
      if (opt.is_number_integer()) {
        space.hidden_layer_options.push_back({opt.get<int>()});
      } else {
        space.hidden_layer_options.push_back(json_get<std::vector<int>>(opt, "hidden_layer_options"));
      }
    }
  }
  if (auto it = j.find("activation_options"); it != j.end()) {
    space.activation_options.clear();
    for (const auto& a : json_get<std::vector<std::string>>(*it, "activation_options")) {
      space.activation_options.push_back(parse_activation(a));
    }
  }
  if (auto it = j.find("learning_rate_options"); it != j.end()) {
    space.learning_rate_options = json_get<std::vector<double>>(*it, "learning_rate_options");
  }
  if (auto it = j.find("solver_options"); it != j.end()) {
    space.solver_options.clear();
    for (const auto& s : json_get<std::vector<std::string>>(*it, "solver_options")) {
      space.solver_options.push_back(parse_solver(s));
    }
  }
  space.validate();
  return space;
}

bool contains(const SearchSpace& space, const Chromosome& c) {
  auto has = [](const auto& list, const auto& v) { return std::find(list.begin(), list.end(), v) != list.end(); };
  return has(space.hidden_layer_options, c.hidden_layers) && has(space.activation_options, c.activation) &&
         has(space.learning_rate_options, c.learning_rate) && has(space.solver_options, c.solver);
}

std::string to_string(const Chromosome& c) {
  return fmt::format("[({}), {}, {}, {}]", fmt::join(c.hidden_layers, ", "), to_string(c.activation),
                     c.learning_rate, to_string(c.solver));
}

nlohmann::json to_json(const Chromosome& c) {
  return {{"hidden_layers", c.hidden_layers},
          {"activation", to_string(c.activation)},
          {"learning_rate", c.learning_rate},
          {"solver", to_string(c.solver)}};
}

Chromosome chromosome_from_json(const nlohmann::json& j) {
  try {
    return Chromosome{j.at("hidden_layers").get<std::vector<int>>(),
                      parse_activation(j.at("activation").get<std::string>()), j.at("learning_rate").get<double>(),
                      parse_solver(j.at("solver").get<std::string>())};
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(fmt::format("chromosome: {}", e.what()));
  }
}

MlpConfig to_config(const Chromosome& c, std::uint64_t seed, int max_iter) {
  MlpConfig cfg;
  cfg.hidden_layers = c.hidden_layers;
  cfg.activation = c.activation;
  cfg.learning_rate_init = c.learning_rate;
  cfg.solver = c.solver;
  cfg.max_iter = max_iter;
  cfg.seed = seed;
  return cfg;
}

void GaSettings::validate() const {
  if (population_size < 2) throw InvalidInput("population_size must be >= 2");
  if (generations < 1) throw InvalidInput("generations must be >= 1");
  if (!(mutation_rate >= 0 && mutation_rate <= 1)) throw InvalidInput("mutation_rate must be in [0, 1]");
  if (!(elite_fraction > 0 && elite_fraction <= 1)) throw InvalidInput("elite_fraction must be in (0, 1]");
}

nlohmann::json to_json(const GaSettings& s) {
  return {{"population_size", s.population_size}, {"generations", s.generations},
          {"mutation_rate", s.mutation_rate},     {"elite_fraction", s.elite_fraction},
          {"workers", s.workers},                 {"master_seed", s.master_seed},
          {"memoize", s.memoize}};
}

GaSettings ga_settings_from_json(const nlohmann::json& j, GaSettings base) {
  if (!j.is_object()) throw InvalidInput("settings must be a JSON object");
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "population_size") base.population_size = v.get<int>();
      else if (key == "generations") base.generations = v.get<int>();
      else if (key == "mutation_rate") base.mutation_rate = v.get<double>();
      else if (key == "elite_fraction") base.elite_fraction = v.get<double>();
      else if (key == "workers") base.workers = v.get<std::size_t>();
      else if (key == "master_seed" || key == "seed") base.master_seed = v.get<std::uint64_t>();
      else if (key == "memoize") base.memoize = v.get<bool>();
      else throw InvalidInput(fmt::format("settings: unknown key '{}'", key));
    }
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(fmt::format("settings: {}", e.what()));
  }
  base.validate();
  return base;
}

nlohmann::json to_json(const GenerationStats& g) {
  nlohmann::json pop = nlohmann::json::array();
  for (const auto& c : g.population) pop.push_back(to_json(c));
  return {{"generation", g.generation},
          {"min", g.min},
          {"max", g.max},
          {"best_in_generation", g.best_in_generation},
          {"best_in_generation_chromosome", to_json(g.best_in_generation_chromosome)},
          {"best_so_far", g.best_so_far},
          {"best_chromosome_so_far", to_json(g.best_chromosome_so_far)},
          {"fitnesses", g.fitnesses},
          {"population", std::move(pop)},
          {"wall_time_s", g.wall_time_s}};
}

std::string_view to_string(RunMode m) { return m == RunMode::sequential ? "sequential" : "parallel"; }

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t generation, std::uint64_t index) {
  // splitmix64 finaliser applied to a running combination of the inputs
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  return mix(mix(mix(master) ^ generation) ^ index);
}

namespace {

template <typename T>
const T& pick(const std::vector<T>& options, std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> dist(0, options.size() - 1);
  return options[dist(rng)];
}

}  // namespace

std::vector<Chromosome> init_population(const SearchSpace& space, int n, std::mt19937_64& rng) {
  if (n < 2) throw InvalidInput("init_population: n must be >= 2");
  space.validate();
  std::vector<Chromosome> pop;
  pop.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    Chromosome c;
    c.hidden_layers = pick(space.hidden_layer_options, rng);
    c.activation = pick(space.activation_options, rng);
    c.learning_rate = pick(space.learning_rate_options, rng);
    c.solver = pick(space.solver_options, rng);
    pop.push_back(std::move(c));
  }
  return pop;
}

double fitness(const Chromosome& chrom, const PreparedSplit& split, std::uint64_t seed, int max_iter) {
  MlpModel<double> model;
  try {
    model = train<double>(to_config(chrom, seed, max_iter), split.train_x, split.train_y, split.class_count);
  } catch (const TrainingDiverged&) {
    return 0.0;
  }
  return accuracy(split.test_y, predict(model, split.test_x));
}

std::vector<double> evaluate_population(std::span<const Chromosome> pop, std::span<const std::uint64_t> seeds,
                                        const FitnessFn& fn, WorkerPool* pool, const IncidentFn& on_incident) {
  if (pop.empty()) throw InvalidInput("evaluate_population: empty population");
  if (seeds.size() != pop.size()) throw InvalidInput("evaluate_population: seed count mismatch");
  std::vector<double> out(pop.size(), 0.0);
  auto report = [&](std::size_t i, const char* what) {
    if (on_incident) on_incident(fmt::format("evaluation of individual {} failed: {}", i, what));
  };

  if (pool == nullptr || pool->size() <= 1) {
    for (std::size_t i = 0; i < pop.size(); ++i) {
      try {
        out[i] = fn(pop[i], seeds[i]);
      } catch (const std::exception& e) {
        report(i, e.what());
      } catch (...) {
        report(i, "unknown error");
      }
    }
    return out;
  }

  std::vector<std::future<double>> futures;
  futures.reserve(pop.size());
  for (std::size_t i = 0; i < pop.size(); ++i) {
    futures.push_back(pool->submit([&fn, &c = pop[i], s = seeds[i]] { return fn(c, s); }));
  }
  for (std::size_t i = 0; i < futures.size(); ++i) {
    try {
      out[i] = futures[i].get();
    } catch (const std::exception& e) {
      report(i, e.what());
    } catch (...) {
      report(i, "unknown error");
    }
  }
  return out;
}

std::vector<double> evaluate_population(std::span<const Chromosome> pop, const PreparedSplit& split,
                                        const GaSettings& settings, int generation, int max_iter) {
  std::vector<std::uint64_t> seeds;
  for (std::size_t i = 0; i < pop.size(); ++i) {
    seeds.push_back(derive_seed(settings.master_seed, static_cast<std::uint64_t>(generation), i));
  }
  WorkerPool pool(WorkerPool::resolve(settings.workers));
  FitnessFn fn = [&split, max_iter](const Chromosome& c, std::uint64_t s) { return fitness(c, split, s, max_iter); };
  return evaluate_population(pop, seeds, fn, &pool);
}

std::vector<std::size_t> elite_indices(std::span<const double> fitnesses, double elite_fraction) {
  if (!(elite_fraction > 0 && elite_fraction <= 1)) throw InvalidInput("elite_fraction must be in (0, 1]");
  std::vector<std::size_t> order(fitnesses.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return fitnesses[a] > fitnesses[b]; });
  const double exact = elite_fraction * static_cast<double>(fitnesses.size());
  auto count = static_cast<std::size_t>(std::ceil(exact - 1e-9));
  count = std::clamp<std::size_t>(count, fitnesses.empty() ? 0 : 1, fitnesses.size());
  order.resize(count);
  return order;
}

std::vector<Chromosome> select_elite(std::span<const Chromosome> pop, std::span<const double> fitnesses,
                                     double elite_fraction) {
  if (pop.size() != fitnesses.size()) throw InvalidInput("select_elite: size mismatch");
  std::vector<Chromosome> out;
  for (auto i : elite_indices(fitnesses, elite_fraction)) out.push_back(pop[i]);
  return out;
}

Chromosome uniform_crossover(const Chromosome& p1, const Chromosome& p2, std::mt19937_64& rng) {
  std::bernoulli_distribution coin(0.5);
  Chromosome child;
  child.hidden_layers = coin(rng) ? p1.hidden_layers : p2.hidden_layers;
  child.activation = coin(rng) ? p1.activation : p2.activation;
  child.learning_rate = coin(rng) ? p1.learning_rate : p2.learning_rate;
  child.solver = coin(rng) ? p1.solver : p2.solver;
  return child;
}

Chromosome mutate(const Chromosome& c, const SearchSpace& space, double mu, std::mt19937_64& rng) {
  if (!(mu >= 0 && mu <= 1)) throw InvalidInput("mutate: rate must be in [0, 1]");
  if (!std::bernoulli_distribution(mu)(rng)) return c;
  Chromosome out = c;
  switch (std::uniform_int_distribution<int>(0, 3)(rng)) {
    case 0: out.hidden_layers = pick(space.hidden_layer_options, rng); break;
    case 1: out.activation = pick(space.activation_options, rng); break;
    case 2: out.learning_rate = pick(space.learning_rate_options, rng); break;
    default: out.solver = pick(space.solver_options, rng); break;
  }
  return out;
}

GaOutcome run_ga(const SearchSpace& space, const GaSettings& settings, const FitnessFn& fn, const RunHooks& hooks) {
  settings.validate();
  space.validate();
  using clock = std::chrono::steady_clock;
  const auto run_start = clock::now();

  const std::size_t workers = WorkerPool::resolve(settings.workers);
  std::optional<WorkerPool> pool;
  if (workers > 1) pool.emplace(workers);

  GaOutcome out;
  out.mode = workers > 1 ? RunMode::parallel : RunMode::sequential;

  // Operator randomness is drawn only on this thread, so it is independent of
  // scheduling.
  std::mt19937_64 rng(derive_seed(settings.master_seed, 0, ~std::uint64_t{0}));
  std::vector<Chromosome> pop = init_population(space, settings.population_size, rng);
  std::map<Chromosome, std::pair<double, std::uint64_t>> memo;
  bool have_best = false;

  for (int g = 1; g <= settings.generations; ++g) {
    const auto gen_start = clock::now();
    std::vector<std::uint64_t> seeds(pop.size());
    for (std::size_t i = 0; i < pop.size(); ++i) {
      seeds[i] = derive_seed(settings.master_seed, static_cast<std::uint64_t>(g), i);
    }

    std::vector<double> fit(pop.size(), 0.0);
    if (settings.memoize) {
      // first occurrence (in this or an earlier generation) fixes the seed
      std::vector<Chromosome> todo;
      std::vector<std::uint64_t> todo_seeds;
      for (std::size_t i = 0; i < pop.size(); ++i) {
        if (!memo.contains(pop[i]) &&
            std::find(todo.begin(), todo.end(), pop[i]) == todo.end()) {
          todo.push_back(pop[i]);
          todo_seeds.push_back(seeds[i]);
        }
      }
      if (!todo.empty()) {
        auto scores = evaluate_population(todo, todo_seeds, fn, pool ? &*pool : nullptr, hooks.on_incident);
        for (std::size_t i = 0; i < todo.size(); ++i) memo.emplace(todo[i], std::pair{scores[i], todo_seeds[i]});
      }
      for (std::size_t i = 0; i < pop.size(); ++i) {
        const auto& [score, seed] = memo.at(pop[i]);
        fit[i] = score;
        seeds[i] = seed;
      }
    } else {
      fit = evaluate_population(pop, seeds, fn, pool ? &*pool : nullptr, hooks.on_incident);
    }

    GenerationStats stats;
    stats.generation = g;
    const auto [lo, hi] = std::minmax_element(fit.begin(), fit.end());
    stats.min = *lo;
    stats.max = *hi;
    stats.best_in_generation = *hi;
    // first index attaining the maximum
    const auto best_idx = static_cast<std::size_t>(std::find(fit.begin(), fit.end(), *hi) - fit.begin());
    stats.best_in_generation_chromosome = pop[best_idx];

    if (!have_best || fit[best_idx] > out.best_fitness) {
      out.best = pop[best_idx];
      out.best_fitness = fit[best_idx];
      out.best_seed = seeds[best_idx];
      have_best = true;
    }
    stats.best_so_far = out.best_fitness;
    stats.best_chromosome_so_far = out.best;
    stats.population = pop;
    stats.fitnesses = fit;

    if (g < settings.generations) {
      const auto parents = select_elite(pop, fit, settings.elite_fraction);
      std::uniform_int_distribution<std::size_t> parent(0, parents.size() - 1);
      std::vector<Chromosome> next;
      next.reserve(pop.size());
      while (next.size() < static_cast<std::size_t>(settings.population_size)) {
        const auto& a = parents[parent(rng)];
        const auto& b = parents[parent(rng)];
        next.push_back(uniform_crossover(a, b, rng));
      }
      for (auto& child : next) child = mutate(child, space, settings.mutation_rate, rng);
      pop = std::move(next);
    }

    stats.wall_time_s = std::chrono::duration<double>(clock::now() - gen_start).count();
    out.history.push_back(stats);
    if (hooks.on_generation) {
      try {
        hooks.on_generation(out.history.back());
      } catch (const std::exception& e) {
        if (hooks.on_incident) hooks.on_incident(fmt::format("progress callback failed: {}", e.what()));
      } catch (...) {
        if (hooks.on_incident) hooks.on_incident("progress callback failed");
      }
    }
  }
  out.total_time_s = std::chrono::duration<double>(clock::now() - run_start).count();
  return out;
}

TuningResult run_miga(const SearchSpace& space, const GaSettings& settings, const PreparedSplit& split,
                      const RunHooks& hooks, int max_iter) {
  if (split.train_x.rows() == 0 || split.test_x.rows() == 0) throw InvalidInput("run_miga: empty split");
  FitnessFn fn = [&split, max_iter](const Chromosome& c, std::uint64_t seed) {
    return fitness(c, split, seed, max_iter);
  };
  TuningResult result;
  static_cast<GaOutcome&>(result) = run_ga(space, settings, fn, hooks);
  result.final_config = to_config(result.best, result.best_seed, max_iter);
  try {
    result.final_model = train<double>(result.final_config, split.train_x, split.train_y, split.class_count);
  } catch (const TrainingDiverged&) {
    // every evaluation diverged; fall back to an untrained network
    result.final_model = init_weights<double>(result.final_config, split.train_x.cols(), split.class_count);
  }
  return result;
}

}  // namespace evotune
