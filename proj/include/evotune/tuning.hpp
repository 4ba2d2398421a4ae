#pragma once

#include <json.hpp>

#include "evotune/dataset.hpp"
#include "evotune/metrics.hpp"
#include "evotune/miga.hpp"
#include "evotune/model_io.hpp"
#include "evotune/pipeline.hpp"

namespace evotune {

struct TuneRequest {
  PipelineOptions pipeline;
  SearchSpace space = SearchSpace::defaults();
  GaSettings settings;
  int max_iter = 500;
};

struct TuneOutcome {
  PreparedData data;
  TuningResult result;
  double miga_time_s = 0;      // evolutionary search only
  double training_time_s = 0;  // final model fit
  double test_accuracy = 0;
  ConfusionMatrix confusion;
  ClassificationReport report;
  SavedModel model;
};

// prepare -> run_miga -> evaluate the final model on the test rows.
// In holdout-fitness mode the final model is refit on the full training rows.
TuneOutcome tune(const TabularDataset& raw, const TuneRequest& request, const RunHooks& hooks = {});

// Optimal configuration, runtimes, test accuracy, confusion matrix and report.
nlohmann::json summary_json(const TuneOutcome& outcome);

}  // namespace evotune
