#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

namespace five {

double accuracy(const std::vector<std::size_t>& labels, const std::vector<std::size_t>& predictions);

// Mean F1 over every class that appears in the labels or the predictions.
double macro_f1(const std::vector<std::size_t>& labels, const std::vector<std::size_t>& predictions);

// Mann-Whitney rank statistic with midranks for ties. Labels are 0/1.
// Throws DegenerateError when only one class is present.
double binary_auc(const std::vector<std::size_t>& labels, const std::vector<double>& scores);

// Fraction of rows whose label is among the k highest scores (ties broken
// by lower class index).
double top_k_accuracy(const std::vector<std::size_t>& labels, const std::vector<std::vector<double>>& scores,
                      std::size_t k);

struct EvalReport {
  std::size_t count = 0;
  std::size_t classes = 0;
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  std::optional<double> auc;
  double top1 = 0.0;
  double top5 = 0.0;
  std::vector<std::size_t> per_class_count;
  std::vector<std::size_t> per_class_correct;
  std::vector<std::size_t> predictions;
  std::string fingerprint;

  bool operator==(const EvalReport&) const = default;
};

// Full report from labels and per-class score rows (probabilities).
EvalReport build_eval_report(const std::vector<std::size_t>& labels, const std::vector<std::vector<double>>& scores,
                       std::size_t num_classes, std::string fingerprint = "");

nlohmann::json report_to_json(const EvalReport& report);
// One header line and one value line, tab separated.
std::string report_to_tsv(const EvalReport& report);

}  // namespace five
