#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

namespace evotune {

double accuracy(const Eigen::Ref<const Eigen::VectorXi>& y_true, const Eigen::Ref<const Eigen::VectorXi>& y_pred);

struct ConfusionMatrix {
  Eigen::MatrixXi counts;  // rows = true class, cols = predicted class
  std::vector<std::string> class_names;

  long total() const { return counts.sum(); }
};

ConfusionMatrix confusion(const Eigen::Ref<const Eigen::VectorXi>& y_true,
                          const Eigen::Ref<const Eigen::VectorXi>& y_pred, int class_count,
                          std::vector<std::string> class_names = {});

struct ClassScore {
  std::string name;
  double precision = 0;
  double recall = 0;
  double f1 = 0;
  long support = 0;
};

struct ClassificationReport {
  std::vector<ClassScore> classes;
  ClassScore macro;
  double accuracy = 0;
  long total = 0;
};

// Zero denominators yield 0 for precision, recall and f1.
ClassificationReport classification_report(const ConfusionMatrix& cm);

std::string render_confusion(const ConfusionMatrix& cm);
std::string render_report(const ClassificationReport& report);

nlohmann::json to_json(const ConfusionMatrix& cm);
nlohmann::json to_json(const ClassificationReport& report);

}  // namespace evotune
