#include "five/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <set>
#include <sstream>

#include "five/error.hpp"

namespace five {
namespace {

void check_lengths(std::size_t a, std::size_t b, const char* what) {
  if (a != b) throw ValidationError(std::string(what) + ": " + std::to_string(a) + " labels for " + std::to_string(b) + " predictions");
  if (a == 0) throw ValidationError(std::string(what) + ": no samples");
}

std::vector<std::size_t> ranking(const std::vector<double>& row) {
  std::vector<std::size_t> order(row.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return row[a] > row[b]; });
  return order;
}

}  // namespace

double accuracy(const std::vector<std::size_t>& labels, const std::vector<std::size_t>& predictions) {
  check_lengths(labels.size(), predictions.size(), "accuracy");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hit += labels[i] == predictions[i];
  return static_cast<double>(hit) / static_cast<double>(labels.size());
}

double macro_f1(const std::vector<std::size_t>& labels, const std::vector<std::size_t>& predictions) {
  check_lengths(labels.size(), predictions.size(), "macro_f1");
  std::set<std::size_t> classes(labels.begin(), labels.end());
  classes.insert(predictions.begin(), predictions.end());
  double total = 0.0;
  for (std::size_t c : classes) {
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (predictions[i] == c && labels[i] == c) ++tp;
      else if (predictions[i] == c) ++fp;
      else if (labels[i] == c) ++fn;
    }
    const double denom = static_cast<double>(2 * tp + fp + fn);
    total += denom == 0.0 ? 0.0 : 2.0 * static_cast<double>(tp) / denom;
  }
  return total / static_cast<double>(classes.size());
}

double binary_auc(const std::vector<std::size_t>& labels, const std::vector<double>& scores) {
  check_lengths(labels.size(), scores.size(), "binary_auc");
  const std::size_t n = labels.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  std::vector<double> rank(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double mid = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t t = i; t <= j; ++t) rank[order[t]] = mid;
    i = j + 1;
  }
  double pos = 0.0, neg = 0.0, rank_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] > 1) throw ValidationError("binary_auc: labels must be 0 or 1");
    if (labels[i] == 1) {
      pos += 1.0;
      rank_sum += rank[i];
    } else {
      neg += 1.0;
    }
  }
  if (pos == 0.0 || neg == 0.0) throw DegenerateError("AUC is undefined when only one class is present");
  return (rank_sum - pos * (pos + 1.0) / 2.0) / (pos * neg);
}

double top_k_accuracy(const std::vector<std::size_t>& labels, const std::vector<std::vector<double>>& scores,
                      std::size_t k) {
  check_lengths(labels.size(), scores.size(), "top_k_accuracy");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto order = ranking(scores[i]);
    order.resize(std::min(k, order.size()));
    hit += std::find(order.begin(), order.end(), labels[i]) != order.end();
  }
  return static_cast<double>(hit) / static_cast<double>(labels.size());
}

EvalReport build_eval_report(const std::vector<std::size_t>& labels, const std::vector<std::vector<double>>& scores,
                       std::size_t num_classes, std::string fingerprint) {
  check_lengths(labels.size(), scores.size(), "build_eval_report");
  EvalReport r;
  r.count = labels.size();
  r.classes = num_classes;
  r.fingerprint = std::move(fingerprint);
  r.per_class_count.assign(num_classes, 0);
  r.per_class_correct.assign(num_classes, 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= num_classes || scores[i].size() != num_classes)
      throw ValidationError("build_eval_report: label or score row outside the class range");
    const std::size_t pred = ranking(scores[i]).front();
    r.predictions.push_back(pred);
    ++r.per_class_count[labels[i]];
    r.per_class_correct[labels[i]] += pred == labels[i];
  }
  r.accuracy = accuracy(labels, r.predictions);
  r.macro_f1 = macro_f1(labels, r.predictions);
  r.top1 = top_k_accuracy(labels, scores, 1);
  r.top5 = top_k_accuracy(labels, scores, 5);
  if (num_classes == 2) {
    std::vector<double> positive;
    for (const auto& row : scores) positive.push_back(row[1]);
    std::set<std::size_t> present(labels.begin(), labels.end());
    if (present.size() == 2) r.auc = binary_auc(labels, positive);
  }
  return r;
}

nlohmann::json report_to_json(const EvalReport& r) {
  nlohmann::json j = {{"count", r.count},
                      {"classes", r.classes},
                      {"accuracy", r.accuracy},
                      {"macro_f1", r.macro_f1},
                      {"top1", r.top1},
                      {"top5", r.top5},
                      {"per_class_count", r.per_class_count},
                      {"per_class_correct", r.per_class_correct},
                      {"fingerprint", r.fingerprint}};
  j["auc"] = r.auc ? nlohmann::json(*r.auc) : nlohmann::json(nullptr);
  return j;
}

std::string report_to_tsv(const EvalReport& r) {
  std::ostringstream out;
  out.precision(17);
  out << "count\tclasses\taccuracy\tmacro_f1\tauc\ttop1\ttop5\n";
  out << r.count << '\t' << r.classes << '\t' << r.accuracy << '\t' << r.macro_f1 << '\t';
  if (r.auc) out << *r.auc; else out << "NA";
  out << '\t' << r.top1 << '\t' << r.top5 << '\n';
  return out.str();
}

}  // namespace five
