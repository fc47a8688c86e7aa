#include "five/objective.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "five/error.hpp"
#include "five/guidance.hpp"

namespace five {

void init_temperature(ParamStore& params, const TemperatureConfig& config) {
  if (!(config.init > 0.0) || !(config.floor > 0.0))
    throw ValidationError("temperature init and floor must be positive");
  params.add("objective.log_tau", Tensor::matrix(1, 1, {std::log(config.init)}));
}

Var temperature(Tape& tape, ParamStore& params, const TemperatureConfig& config) {
  return ops::clamp_min(ops::exp(tape.param(params, "objective.log_tau")), config.floor);
}

double temperature_value(const ParamStore& params, const TemperatureConfig& config) {
  return std::max(std::exp(params.value("objective.log_tau").item()), config.floor);
}

Var similarity_logits(Var v, Var t, Var tau) {
  if (v.cols() != t.cols())
    throw ShapeError("similarity_logits: feature widths " + std::to_string(v.cols()) + " and " +
                     std::to_string(t.cols()));
  Var cos = ops::matmul(ops::l2_normalize_rows(v), ops::transpose(ops::l2_normalize_rows(t)));
  return ops::divide_by_scalar(cos, tau);
}

Tensor build_soft_targets(const std::vector<std::string>& texts) {
  const std::size_t n = texts.size();
  if (n < 2) throw ValidationError("soft targets need at least two texts, got " + std::to_string(n));
  std::vector<std::string> keys;
  keys.reserve(n);
  for (const auto& t : texts) keys.push_back(equivalence_key(t));
  Tensor y = Tensor::zeros({n, n});
  for (std::size_t i = 0; i < n; ++i) {
    const auto group = static_cast<double>(std::count(keys.begin(), keys.end(), keys[i]));
    for (std::size_t j = 0; j < n; ++j)
      if (keys[j] == keys[i]) y.at(i, j) = 1.0 / group;
  }
  return y;
}

Var contrastive_loss(Var v, Var t, const std::vector<std::string>& texts, Var tau) {
  if (v.rows() != texts.size() || t.rows() != texts.size())
    throw ShapeError("contrastive_loss: " + std::to_string(v.rows()) + " bag rows, " + std::to_string(t.rows()) +
                     " text rows, " + std::to_string(texts.size()) + " texts");
  const Tensor y = build_soft_targets(texts);
  Var logits = similarity_logits(v, t, tau);
  Var image_to_text = ops::soft_cross_entropy(logits, y);
  Var text_to_image = ops::soft_cross_entropy(ops::transpose(logits), y.transposed());
  return ops::scale(ops::add(image_to_text, text_to_image), 0.5);
}

Prediction predict(const Tensor& v, const Tensor& classes, double tau, std::size_t k) {
  const std::size_t c = classes.rows();
  if (c < 2) throw ValidationError("predict needs at least two classes");
  if (v.size() != classes.cols()) throw ShapeError("predict: feature and class widths differ");
  if (!(tau > 0.0)) throw ValidationError("predict: temperature must be positive");
  double vn = 0.0;
  for (double x : v.data()) vn += x * x;
  vn = std::sqrt(vn);
  if (vn == 0.0) throw DegenerateError("predict: zero bag feature");
  std::vector<double> logits(c);
  for (std::size_t j = 0; j < c; ++j) {
    double dot = 0.0, cn = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
      dot += v[i] * classes.at(j, i);
      cn += classes.at(j, i) * classes.at(j, i);
    }
    if (cn == 0.0) throw DegenerateError("predict: zero class embedding " + std::to_string(j));
    logits[j] = dot / (vn * std::sqrt(cn)) / tau;
  }
  const double mx = *std::max_element(logits.begin(), logits.end());
  Prediction p;
  p.probabilities.resize(c);
  double total = 0.0;
  for (std::size_t j = 0; j < c; ++j) total += p.probabilities[j] = std::exp(logits[j] - mx);
  for (double& x : p.probabilities) x /= total;
  std::vector<std::size_t> order(c);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return logits[a] > logits[b]; });
  order.resize(std::min(k, c));
  p.top = std::move(order);
  return p;
}

}  // namespace five
