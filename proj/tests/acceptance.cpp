// Acceptance runner: one PASS / FAIL / SKIP line per criterion.
//   evotune_acceptance <criterion>   exit 0 pass, 1 fail, 77 skip
//   evotune_acceptance all           every criterion in turn

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "evotune/bench.hpp"
#include "evotune/dataset.hpp"
#include "evotune/errors.hpp"
#include "evotune/kpca.hpp"
#include "evotune/miga.hpp"
#include "evotune/mlp.hpp"
#include "evotune/pipeline.hpp"
#include "evotune/tuning.hpp"
#include "oracles.hpp"
#include "test_paths.hpp"

using namespace evotune;

namespace {

enum class Status { pass, fail, skip };

struct Outcome {
  Status status;
  std::string detail;
};

Outcome pass(std::string d) { return {Status::pass, std::move(d)}; }
Outcome fail(std::string d) { return {Status::fail, std::move(d)}; }
Outcome skip(std::string d) { return {Status::skip, std::move(d)}; }

// Tolerances and thresholds.
constexpr double kCkdEverySeed = 0.975;
constexpr double kCkdBestSeed = 1.0;
constexpr double kWdbcEverySeed = 0.96;
constexpr double kWdbcBestSeed = 0.98;
constexpr double kParkinsonEverySeed = 0.87;
constexpr double kParkinsonBestSeed = 0.92;
constexpr double kMinReductionPct = 40.0;
constexpr unsigned kSpeedupCores = 4;
constexpr double kGradientRelError = 1e-4;
constexpr int kGradientNetworks = 100;
constexpr double kKpcaEigenTol = 1e-8;
constexpr double kKpcaProjectionTol = 1e-7;
constexpr double kKpcaMeanTol = 1e-8;
constexpr int kKpcaTrials = 100;
constexpr int kGaTrials = 1000;
constexpr int kSeeds = 5;

struct DatasetSpec {
  std::string name;
  std::string file;
  std::string target;
  std::vector<std::string> drop;
};

const DatasetSpec kCkd{"ckd", "ckd.csv", "classification", {"id"}};
const DatasetSpec kWdbc{"wdbc", "wdbc.csv", "diagnosis", {"id"}};
const DatasetSpec kParkinson{"parkinsons", "parkinsons.csv", "status", {"name"}};

std::optional<TabularDataset> load(const DatasetSpec& spec) {
  const auto path = data_file(spec.file);
  if (!std::filesystem::exists(path)) return std::nullopt;
  return load_csv_file(path);
}

TuneRequest request_for(const DatasetSpec& spec, const TabularDataset& raw, std::uint64_t seed) {
  TuneRequest r;
  r.pipeline.target = spec.target;
  for (const auto& c : spec.drop) {
    if (raw.find_column(c)) r.pipeline.drop_columns.push_back(c);
  }
  r.pipeline.split_seed = seed;
  r.settings.master_seed = seed;
  return r;
}

Outcome end_to_end(const DatasetSpec& spec, double every_seed, double best_seed) {
  const auto raw = load(spec);
  if (!raw) return skip(fmt::format("{} not found in the data directory", spec.file));
  std::vector<std::string> parts;
  double lowest = 1.0, highest = 0.0, slowest = 0.0;
  for (std::uint64_t seed = 0; seed < kSeeds; ++seed) {
    const auto start = std::chrono::steady_clock::now();
    const auto out = tune(*raw, request_for(spec, *raw, seed));
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const double best = out.result.history.back().best_so_far;
    lowest = std::min(lowest, best);
    highest = std::max(highest, best);
    slowest = std::max(slowest, secs);
    parts.push_back(fmt::format("seed {}: {:.4f} ({:.0f} s)", seed, best, secs));
  }
  std::string detail = fmt::format("{}; min {:.4f}, max {:.4f}, slowest seed {:.0f} s on {} cores",
                                   fmt::join(parts, ", "), lowest, highest, slowest,
                                   std::thread::hardware_concurrency());
  const bool ok = lowest >= every_seed && highest >= best_seed;
  return ok ? pass(detail)
            : fail(fmt::format("need every seed >= {} and one >= {}: {}", every_seed, best_seed, detail));
}

bool identical(const TuningResult& a, const TuningResult& b) {
  if (!same_history(a.history, b.history)) return false;
  if (a.best != b.best || a.best_seed != b.best_seed || a.best_fitness != b.best_fitness) return false;
  if (a.final_model.weights.size() != b.final_model.weights.size()) return false;
  for (std::size_t l = 0; l < a.final_model.weights.size(); ++l) {
    if (a.final_model.weights[l] != b.final_model.weights[l]) return false;
    if (a.final_model.biases[l] != b.final_model.biases[l]) return false;
  }
  return true;
}

Outcome speedup() {
  const auto raw = load(kWdbc);
  if (!raw) return skip("wdbc.csv not found in the data directory");
  const auto req = request_for(kWdbc, *raw, 0);
  const auto data = prepare(*raw, req.pipeline);
  const unsigned cores = std::thread::hardware_concurrency();
  const std::size_t workers = std::max<unsigned>(kSpeedupCores, cores);
  BenchmarkOutcome b;
  try {
    b = run_benchmark("wdbc", data.tuning, req.space, req.settings, workers, req.max_iter);
  } catch (const DeterminismViolation& e) {
    return fail(fmt::format("determinism gate: {}", e.what()));
  }
  if (!identical(b.sequential, b.parallel)) return fail("determinism gate: final models differ");
  const auto& t = b.timing;
  const std::string timing = fmt::format("sequential {:.1f} s, {} workers {:.1f} s, reduction {:.1f}%",
                                         t.sequential_s, workers, t.parallel_s, t.reduction_pct);
  if (cores < kSpeedupCores) {
    return skip(fmt::format("determinism gate passed; timing needs >= {} cores, {} detected ({})", kSpeedupCores,
                            cores, timing));
  }
  return t.reduction_pct >= kMinReductionPct
             ? pass(fmt::format("determinism gate passed; {}", timing))
             : fail(fmt::format("reduction below {}%: {}", kMinReductionPct, timing));
}

Outcome determinism() {
  std::vector<std::string> checked, missing;
  for (const auto* spec : {&kCkd, &kWdbc, &kParkinson}) {
    const auto raw = load(*spec);
    if (!raw) {
      missing.push_back(spec->name);
      continue;
    }
    const auto req = request_for(*spec, *raw, 7);
    const auto data = prepare(*raw, req.pipeline);
    std::optional<TuningResult> reference;
    for (std::size_t w : {1u, 2u, 8u}) {
      auto settings = req.settings;
      settings.workers = w;
      auto result = run_miga(req.space, settings, data.tuning, {}, req.max_iter);
      if (!reference) {
        reference = std::move(result);
      } else if (!identical(*reference, result)) {
        return fail(fmt::format("{}: workers=1 and workers={} differ", spec->name, w));
      }
    }
    checked.push_back(spec->name);
  }
  if (checked.empty()) return skip("no dataset available");
  const std::string detail = fmt::format("identical for workers 1, 2, 8 on {}", fmt::join(checked, ", "));
  if (!missing.empty()) return skip(fmt::format("{}; not run on {} (data unavailable)", detail, fmt::join(missing, ", ")));
  return pass(detail);
}

Outcome gradient_oracle() {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> width(1, 5), depth(1, 2), dim(1, 4), classes(2, 4), batch(1, 6);
  std::normal_distribution<double> g;
  const Activation acts[] = {Activation::relu, Activation::tanh, Activation::logistic};
  double worst = 0;
  int redraws = 0;
  for (int net = 0; net < kGradientNetworks; ++net) {
    const Activation act = acts[net % 3];
    for (;;) {
      MlpConfig cfg;
      cfg.hidden_layers.assign(static_cast<std::size_t>(depth(rng)), 0);
      for (auto& h : cfg.hidden_layers) h = width(rng);
      cfg.activation = act;
      cfg.seed = rng();
      const int d = dim(rng), k = classes(rng), n = batch(rng);
      auto model = init_weights<double>(cfg, d, k);
      for (auto& b : model.biases) {
        for (Eigen::Index i = 0; i < b.size(); ++i) b(i) = 0.3 * g(rng);
      }
      Eigen::MatrixXd x(n, d);
      for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = g(rng);
      Eigen::VectorXi y(n);
      for (int i = 0; i < n; ++i) y(i) = static_cast<int>(rng() % static_cast<std::uint64_t>(k));
      // finite differences are meaningless across a relu kink
      if (act == Activation::relu && oracle::min_abs_preactivation(model, x) < 1e-3) {
        ++redraws;
        continue;
      }
      const auto bp = backprop_grads(model, x, y);
      const auto fd = oracle::finite_difference(model, x, y);
      for (std::size_t l = 0; l < model.weights.size(); ++l) {
        for (Eigen::Index i = 0; i < bp.weights[l].size(); ++i) {
          worst = std::max(worst, oracle::rel_error(bp.weights[l](i), fd.weights[l](i)));
        }
        for (Eigen::Index i = 0; i < bp.biases[l].size(); ++i) {
          worst = std::max(worst, oracle::rel_error(bp.biases[l](i), fd.biases[l](i)));
        }
      }
      worst = std::max(worst, oracle::rel_error(bp.loss, oracle::loss(model, x, y)));
      break;
    }
  }
  const std::string detail = fmt::format("{} networks, worst relative error {:.2e} (limit {:.0e}), {} relu redraws",
                                         kGradientNetworks, worst, kGradientRelError, redraws);
  return worst <= kGradientRelError ? pass(detail) : fail(detail);
}

Outcome kpca_oracle() {
  std::mt19937_64 rng(77);
  std::normal_distribution<double> g;
  std::uniform_real_distribution<double> gamma_dist(0.1, 1.0);
  double eig_err = 0, proj_err = 0, mean_err = 0;
  for (int trial = 0; trial < kKpcaTrials; ++trial) {
    Eigen::MatrixXd x(5, 3);
    for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = g(rng);
    const double gamma = trial % 2 == 0 ? 1.0 / 3.0 : gamma_dist(rng);
    const auto model = fit_kpca(x, gamma, 0.95);
    const auto ref = oracle::kpca(oracle::to_rows(x), gamma, static_cast<std::size_t>(model.n_components));
    for (Eigen::Index i = 0; i < 5; ++i) {
      eig_err = std::max(eig_err, std::abs(model.eigenvalues(i) - std::max(ref.eigenvalues[i], 0.0)));
    }
    const Eigen::MatrixXd proj = transform(model, x);
    for (Eigen::Index c = 0; c < model.n_components; ++c) {
      const auto& r = ref.projections[static_cast<std::size_t>(c)];
      double same = 0, flipped = 0;
      for (Eigen::Index i = 0; i < 5; ++i) {
        same = std::max(same, std::abs(proj(i, c) - r[i]));
        flipped = std::max(flipped, std::abs(proj(i, c) + r[i]));
      }
      proj_err = std::max(proj_err, std::min(same, flipped));
    }
    mean_err = std::max(mean_err, proj.colwise().mean().cwiseAbs().maxCoeff());
  }
  const std::string detail =
      fmt::format("{} random 5x3 matrices: eigenvalue error {:.1e}, projection error {:.1e}, column mean {:.1e}",
                  kKpcaTrials, eig_err, proj_err, mean_err);
  const bool ok = eig_err <= kKpcaEigenTol && proj_err <= kKpcaProjectionTol && mean_err <= kKpcaMeanTol;
  return ok ? pass(detail) : fail(detail);
}

double synthetic_fitness(const Chromosome& c, std::uint64_t seed) {
  double s = 0.1 * static_cast<double>(c.hidden_layers.size()) + (c.activation == Activation::tanh ? 0.3 : 0.0) +
             c.learning_rate + (c.solver == Solver::adam ? 0.1 : 0.0);
  return s + static_cast<double>(seed % 997) * 1e-5;
}

Outcome ga_properties() {
  const auto space = SearchSpace::defaults();
  std::mt19937_64 rng(31);
  std::vector<std::string> problems;
  auto check = [&](bool ok, const std::string& what) {
    if (!ok && problems.size() < 5) problems.push_back(what);
  };
  for (int t = 0; t < kGaTrials; ++t) {
    const auto pop = init_population(space, 4, rng);
    for (const auto& c : pop) check(contains(space, c), "init_population left the space");
    const auto child = uniform_crossover(pop[0], pop[1], rng);
    check(contains(space, child), "crossover left the space");
    check(uniform_crossover(pop[2], pop[2], rng) == pop[2], "crossover of identical parents changed genes");
    const auto m = mutate(child, space, 1.0, rng);
    check(contains(space, m), "mutate left the space");
    const int diff = (m.hidden_layers != child.hidden_layers) + (m.activation != child.activation) +
                     (m.learning_rate != child.learning_rate) + (m.solver != child.solver);
    check(diff <= 1, "mutate with rate 1 changed more than one gene");
    check(mutate(child, space, 0.0, rng) == child, "mutate with rate 0 changed genes");
  }
  for (std::size_t p = 2; p <= 60; ++p) {
    std::vector<double> f(p);
    for (auto& v : f) v = std::uniform_real_distribution<double>(0, 1)(rng);
    std::vector<Chromosome> pop = init_population(space, static_cast<int>(p), rng);
    const auto elite = select_elite(pop, f, 0.5);
    check(elite.size() == (p + 1) / 2, fmt::format("select_elite returned {} of {}", elite.size(), p));
  }
  int runs = 0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    GaSettings s;
    s.master_seed = seed;
    s.workers = 1;
    s.mutation_rate = 0.1 + 0.018 * static_cast<double>(seed);
    const auto out = run_ga(space, s, synthetic_fitness);
    double prev = -1;
    for (const auto& g : out.history) {
      check(g.best_so_far >= prev, "best_so_far decreased");
      check(g.best_so_far >= g.max, "best_so_far below a generation maximum");
      for (const auto& c : g.population) check(contains(space, c), "offspring left the space");
      prev = g.best_so_far;
    }
    ++runs;
  }
  if (!problems.empty()) return fail(fmt::format("{}", fmt::join(problems, "; ")));
  return pass(fmt::format("{} operator trials, elite sizes for P = 2..60, {} monotone runs", kGaTrials, runs));
}

Outcome preprocessing() {
  std::vector<std::string> problems;
  auto check = [&](bool ok, const std::string& what) {
    if (!ok) problems.push_back(what);
  };
  const double nan = std::numeric_limits<double>::quiet_NaN();
  // (0,0) and (2,2) tie at distance sqrt(2) from (1,?): lower index first
  Eigen::MatrixXd a(3, 2);
  a << 0, 0, 2, 2, 1, nan;
  check(knn_impute(a, 1)(2, 1) == 0.0, "3-row tie case, k=1");
  check(knn_impute(a, 2)(2, 1) == 1.0, "3-row tie case, k=2");
  // (3,6) is nearer to (2,?) than (0,0)
  Eigen::MatrixXd b(3, 2);
  b << 0, 0, 3, 6, 2, nan;
  check(knn_impute(b, 1)(2, 1) == 6.0, "3-row nearest case, k=1");
  check(knn_impute(b, 2)(2, 1) == 3.0, "3-row nearest case, k=2");
  check(knn_impute(b, 5)(2, 1) == 3.0, "3-row nearest case, k > donors");
  // donors must observe the column being filled
  Eigen::MatrixXd c(3, 3);
  c << 1, nan, 5, 1, 4, nan, 9, 8, 7;
  const Eigen::MatrixXd ci = knn_impute(c, 1);
  check(ci(0, 1) == 4.0 && ci(1, 2) == 5.0, "3-row donor-eligibility case");

  auto block_sums_ok = [](const TabularDataset& ds, const std::string& target) {
    const auto enc = one_hot_encode(impute_missing(ds, target), target);
    std::map<std::string, std::vector<Eigen::Index>> blocks;
    for (Eigen::Index j = 0; j < static_cast<Eigen::Index>(enc.feature_names.size()); ++j) {
      const auto& name = enc.feature_names[static_cast<std::size_t>(j)];
      const auto eq = name.find('=');
      if (eq != std::string::npos) blocks[name.substr(0, eq)].push_back(j);
    }
    if (blocks.empty()) return false;
    for (const auto& [_, cols] : blocks) {
      for (Eigen::Index r = 0; r < enc.features.rows(); ++r) {
        double s = 0;
        for (auto j : cols) s += enc.features(r, j);
        if (s != 1.0) return false;
      }
    }
    return true;
  };
  check(block_sums_ok(load_csv_file(fixture("mini_ckd.csv")), "classification"), "one-hot block sums (fixture)");
  if (const auto ckd = load(kCkd)) {
    check(block_sums_ok(*ckd, "classification"), "one-hot block sums (CKD)");
  }

  EncodedMatrix m;
  m.features = Eigen::MatrixXd::Zero(400, 1);
  m.labels = Eigen::VectorXi::Zero(400);
  m.labels.tail(150).setOnes();
  m.class_names = {"a", "b"};
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto s = train_test_split(m, 0.8, seed);
    check(s.train.n_rows() == 320 && s.test.n_rows() == 80, "400-row split sizes");
  }
  std::string ckd_note = "CKD file absent";
  if (const auto ckd = load(kCkd)) {
    const auto enc = one_hot_encode(impute_missing(drop_columns(*ckd, std::vector<std::string>{"id"}), "classification"),
                                    "classification");
    const auto s = train_test_split(enc, 0.8, 0);
    check(s.train.n_rows() == 320 && s.test.n_rows() == 80, "CKD split sizes");
    ckd_note = "CKD split 320/80";
  }
  if (!problems.empty()) return fail(fmt::format("{}", fmt::join(problems, "; ")));
  return pass(fmt::format("KNN 3-row cases, one-hot block sums, 400-row split 320/80 ({})", ckd_note));
}

const std::vector<std::pair<std::string, std::function<Outcome()>>>& criteria() {
  static const std::vector<std::pair<std::string, std::function<Outcome()>>> list{
      {"ckd_end_to_end", [] { return end_to_end(kCkd, kCkdEverySeed, kCkdBestSeed); }},
      {"wdbc_end_to_end", [] { return end_to_end(kWdbc, kWdbcEverySeed, kWdbcBestSeed); }},
      {"parkinsons_end_to_end", [] { return end_to_end(kParkinson, kParkinsonEverySeed, kParkinsonBestSeed); }},
      {"parallel_speedup", speedup},
      {"determinism", determinism},
      {"gradient_oracle", gradient_oracle},
      {"kpca_oracle", kpca_oracle},
      {"ga_properties", ga_properties},
      {"preprocessing", preprocessing},
  };
  return list;
}

Status run_one(const std::string& name, const std::function<Outcome()>& fn) {
  Outcome o;
  try {
    o = fn();
  } catch (const std::exception& e) {
    o = fail(fmt::format("exception: {}", e.what()));
  }
  const char* label = o.status == Status::pass ? "PASS" : o.status == Status::fail ? "FAIL" : "SKIP";
  std::cout << fmt::format("{} {}: {}", label, name, o.detail) << std::endl;
  return o.status;
}

}  // namespace

int main(int argc, char** argv) {
  const std::string which = argc > 1 ? argv[1] : "all";
  bool any_fail = false, any_run = false;
  Status last = Status::pass;
  for (const auto& [name, fn] : criteria()) {
    if (which != "all" && which != name) continue;
    any_run = true;
    last = run_one(name, fn);
    any_fail |= last == Status::fail;
  }
  if (!any_run) {
    std::cerr << "unknown criterion '" << which << "'; choose one of:";
    for (const auto& [name, _] : criteria()) std::cerr << ' ' << name;
    std::cerr << " all\n";
    return 2;
  }
  if (any_fail) return 1;
  return which != "all" && last == Status::skip ? 77 : 0;
}
