#include "evotune/metrics.hpp"

#include <algorithm>

#include <fmt/format.h>

#include "evotune/errors.hpp"

namespace evotune {

double accuracy(const Eigen::Ref<const Eigen::VectorXi>& y_true, const Eigen::Ref<const Eigen::VectorXi>& y_pred) {
  if (y_true.size() != y_pred.size()) throw InvalidInput("accuracy: length mismatch");
  if (y_true.size() == 0) throw InvalidInput("accuracy: empty input");
  const auto hits = (y_true.array() == y_pred.array()).count();
  return static_cast<double>(hits) / static_cast<double>(y_true.size());
}

ConfusionMatrix confusion(const Eigen::Ref<const Eigen::VectorXi>& y_true,
                          const Eigen::Ref<const Eigen::VectorXi>& y_pred, int class_count,
                          std::vector<std::string> class_names) {
  if (y_true.size() != y_pred.size()) throw InvalidInput("confusion: length mismatch");
  if (class_count < 1) throw InvalidInput("confusion: class_count must be positive");
  if (class_names.empty()) {
    for (int c = 0; c < class_count; ++c) class_names.push_back(std::to_string(c));
  }
  if (static_cast<int>(class_names.size()) != class_count) throw InvalidInput("confusion: class name count mismatch");
  ConfusionMatrix cm{Eigen::MatrixXi::Zero(class_count, class_count), std::move(class_names)};
  for (Eigen::Index i = 0; i < y_true.size(); ++i) {
    const int t = y_true(i), p = y_pred(i);
    if (t < 0 || t >= class_count || p < 0 || p >= class_count) {
      throw InvalidInput(fmt::format("confusion: label out of range at position {}", i));
    }
    ++cm.counts(t, p);
  }
  return cm;
}

ClassificationReport classification_report(const ConfusionMatrix& cm) {
  ClassificationReport rep;
  const Eigen::Index k = cm.counts.rows();
  rep.total = cm.total();
  rep.accuracy = rep.total > 0 ? static_cast<double>(cm.counts.trace()) / static_cast<double>(rep.total) : 0.0;
  for (Eigen::Index c = 0; c < k; ++c) {
    const double tp = cm.counts(c, c);
    const double predicted = cm.counts.col(c).sum();
    const double actual = cm.counts.row(c).sum();
    ClassScore s;
    s.name = static_cast<std::size_t>(c) < cm.class_names.size() ? cm.class_names[static_cast<std::size_t>(c)]
                                                                  : std::to_string(c);
    s.precision = predicted > 0 ? tp / predicted : 0.0;
    s.recall = actual > 0 ? tp / actual : 0.0;
    s.f1 = s.precision + s.recall > 0 ? 2 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
    s.support = static_cast<long>(actual);
    rep.macro.precision += s.precision;
    rep.macro.recall += s.recall;
    rep.macro.f1 += s.f1;
    rep.classes.push_back(std::move(s));
  }
  rep.macro.name = "macro avg";
  rep.macro.support = rep.total;
  if (k > 0) {
    rep.macro.precision /= static_cast<double>(k);
    rep.macro.recall /= static_cast<double>(k);
    rep.macro.f1 /= static_cast<double>(k);
  }
  return rep;
}

std::string render_confusion(const ConfusionMatrix& cm) {
  std::size_t width = 4;
  for (const auto& n : cm.class_names) width = std::max(width, n.size());
  for (Eigen::Index i = 0; i < cm.counts.size(); ++i) {
    width = std::max(width, std::to_string(cm.counts.data()[i]).size());
  }
  std::string out = fmt::format("{:>{}}", "", width);
  for (const auto& n : cm.class_names) out += fmt::format("  {:>{}}", n, width);
  out += '\n';
  for (Eigen::Index r = 0; r < cm.counts.rows(); ++r) {
    out += fmt::format("{:>{}}", cm.class_names[static_cast<std::size_t>(r)], width);
    for (Eigen::Index c = 0; c < cm.counts.cols(); ++c) out += fmt::format("  {:>{}}", cm.counts(r, c), width);
    out += '\n';
  }
  return out;
}

std::string render_report(const ClassificationReport& report) {
  std::size_t width = 12;
  for (const auto& c : report.classes) width = std::max(width, c.name.size());
  std::string out = fmt::format("{:>{}}  {:>9}  {:>9}  {:>9}  {:>9}\n", "", width, "precision", "recall", "f1-score",
                                "support");
  auto row = [&](const ClassScore& s) {
    return fmt::format("{:>{}}  {:>9.4f}  {:>9.4f}  {:>9.4f}  {:>9}\n", s.name, width, s.precision, s.recall, s.f1,
                       s.support);
  };
  for (const auto& c : report.classes) out += row(c);
  out += '\n';
  out += fmt::format("{:>{}}  {:>9}  {:>9}  {:>9.4f}  {:>9}\n", "accuracy", width, "", "", report.accuracy, report.total);
  out += row(report.macro);
  return out;
}

nlohmann::json to_json(const ConfusionMatrix& cm) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index r = 0; r < cm.counts.rows(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index c = 0; c < cm.counts.cols(); ++c) row.push_back(cm.counts(r, c));
    rows.push_back(std::move(row));
  }
  return {{"class_names", cm.class_names}, {"counts", std::move(rows)}};
}

nlohmann::json to_json(const ClassificationReport& report) {
  auto score = [](const ClassScore& s) {
    return nlohmann::json{{"name", s.name}, {"precision", s.precision}, {"recall", s.recall}, {"f1", s.f1},
                          {"support", s.support}};
  };
  nlohmann::json classes = nlohmann::json::array();
  for (const auto& c : report.classes) classes.push_back(score(c));
  return {{"classes", std::move(classes)},
          {"macro", score(report.macro)},
          {"accuracy", report.accuracy},
          {"total", report.total}};
}

}  // namespace evotune
