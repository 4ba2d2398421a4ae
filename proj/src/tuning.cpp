#include "evotune/tuning.hpp"

#include <chrono>

namespace evotune {

TuneOutcome tune(const TabularDataset& raw, const TuneRequest& request, const RunHooks& hooks) {
  request.settings.validate();
  request.space.validate();
  using clock = std::chrono::steady_clock;

  TuneOutcome out;
  out.data = prepare(raw, request.pipeline);
  const PreparedSplit& split = out.data.split;

  const auto start = clock::now();
  out.result = run_miga(request.space, request.settings, out.data.tuning, hooks, request.max_iter);
  const double elapsed = std::chrono::duration<double>(clock::now() - start).count();
  out.miga_time_s = out.result.total_time_s;
  out.training_time_s = elapsed - out.result.total_time_s;

  if (request.pipeline.holdout_fitness) {
    const auto t0 = clock::now();
    try {
      out.result.final_model =
          train<double>(out.result.final_config, split.train_x, split.train_y, split.class_count);
    } catch (const TrainingDiverged&) {
      out.result.final_model = init_weights<double>(out.result.final_config, split.train_x.cols(), split.class_count);
    }
    out.training_time_s = std::chrono::duration<double>(clock::now() - t0).count();
  }

  const Eigen::VectorXi predicted = predict(out.result.final_model, split.test_x);
  out.test_accuracy = accuracy(split.test_y, predicted);
  out.confusion = confusion(split.test_y, predicted, split.class_count, out.data.preprocessor.class_names);
  out.report = classification_report(out.confusion);

  out.model.config = out.result.final_config;
  out.model.mlp = out.result.final_model;
  out.model.preprocessor = out.data.preprocessor;
  out.model.metadata = {{"best_chromosome", to_json(out.result.best)},
                        {"best_fitness", out.result.best_fitness},
                        {"test_accuracy", out.test_accuracy},
                        {"settings", to_json(request.settings)},
                        {"space", to_json(request.space)},
                        {"dropped_columns", request.pipeline.drop_columns},
                        {"holdout_fitness", request.pipeline.holdout_fitness}};
  return out;
}

nlohmann::json summary_json(const TuneOutcome& o) {
  return {{"optimal", to_json(o.result.best)},
          {"best_fitness", o.result.best_fitness},
          {"miga_time_s", o.miga_time_s},
          {"training_time_s", o.training_time_s},
          {"test_accuracy", o.test_accuracy},
          {"confusion_matrix", to_json(o.confusion)},
          {"classification_report", to_json(o.report)},
          {"n_components", o.data.preprocessor.output_dim()},
          {"train_rows", o.data.split.train_x.rows()},
          {"test_rows", o.data.split.test_x.rows()}};
}

}  // namespace evotune
