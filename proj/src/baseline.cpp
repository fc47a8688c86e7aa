#include "five/baseline.hpp"

#include <algorithm>
#include <cmath>

#include "five/error.hpp"
#include "five/optim.hpp"

namespace five {
namespace {

Tensor gaussian(std::size_t rows, std::size_t cols, double stddev, Rng& rng) {
  std::vector<double> v(rows * cols);
  for (double& x : v) x = stddev * rng.normal();
  return Tensor::matrix(rows, cols, std::move(v));
}

Tensor column_pool(const Tensor& x, bool take_max) {
  const std::size_t n = x.rows(), d = x.cols();
  if (n == 0) throw DegenerateError("pooling an empty bag");
  std::vector<double> out(d, take_max ? -INFINITY : 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < d; ++k) out[k] = take_max ? std::max(out[k], x.at(i, k)) : out[k] + x.at(i, k);
  if (!take_max)
    for (double& v : out) v /= static_cast<double>(n);
  return Tensor::row(std::move(out));
}

}  // namespace

std::string_view pooling_name(Pooling p) {
  switch (p) {
    case Pooling::Mean: return "mean";
    case Pooling::Max: return "max";
    case Pooling::Attention: return "attention";
  }
  return "mean";
}

Pooling pooling_from_name(std::string_view name) {
  if (name == "mean") return Pooling::Mean;
  if (name == "max") return Pooling::Max;
  if (name == "attention") return Pooling::Attention;
  throw ValidationError("unknown pooling '" + std::string(name) + "' (expected mean, max or attention)");
}

LinearProbe::LinearProbe(std::size_t dim, std::size_t num_classes, ProbeConfig config)
    : dim_(dim), classes_(num_classes), config_(config) {
  if (num_classes < 2) throw ValidationError("linear probe needs at least two classes");
  Rng rng = Rng::substream(config_.seed, hash_string("probe"));
  params_.add("probe.weight", gaussian(dim, num_classes, 0.01, rng));
  params_.add("probe.bias", Tensor::zeros({1, num_classes}));
  if (config_.pooling == Pooling::Attention) {
    const double s = 1.0 / std::sqrt(static_cast<double>(dim));
    params_.add("pool.v", gaussian(config_.attention_dim, dim, s, rng));
    params_.add("pool.w", gaussian(config_.attention_dim, 1, 1.0 / std::sqrt(static_cast<double>(config_.attention_dim)), rng));
  }
}

Var LinearProbe::pool(Tape& tape, const Tensor& instances) {
  if (instances.cols() != dim_) throw ShapeError("linear probe: feature width mismatch");
  switch (config_.pooling) {
    case Pooling::Mean: return tape.constant(column_pool(instances, false));
    case Pooling::Max: return tape.constant(column_pool(instances, true));
    case Pooling::Attention: {
      Var h = tape.constant(instances);
      Var hidden = ops::tanh(ops::matmul(h, ops::transpose(tape.param(params_, "pool.v"))));
      Var scores = ops::transpose(ops::matmul(hidden, tape.param(params_, "pool.w")));
      return ops::matmul(ops::softmax_rows(scores), h);
    }
  }
  throw StateError("unreachable pooling");
}

Tensor LinearProbe::attention_weights(const Tensor& instances) {
  if (config_.pooling != Pooling::Attention) throw StateError("attention weights need attention pooling");
  Tape tape;
  Var h = tape.constant(instances);
  Var hidden = ops::tanh(ops::matmul(h, ops::transpose(tape.param(params_, "pool.v"))));
  return ops::softmax_rows(ops::transpose(ops::matmul(hidden, tape.param(params_, "pool.w")))).value();
}

Var LinearProbe::logits(Tape& tape, const std::vector<const Tensor*>& bags) {
  std::vector<Var> rows;
  for (const Tensor* b : bags) rows.push_back(pool(tape, *b));
  Var pooled = ops::concat_rows(rows);
  return ops::add_row(ops::matmul(pooled, tape.param(params_, "probe.weight")), tape.param(params_, "probe.bias"));
}

void LinearProbe::fit(const std::vector<BagData>& bags) {
  if (bags.empty()) throw ValidationError("linear probe: no training bags");
  std::vector<const Tensor*> inputs;
  Tensor targets = Tensor::zeros({bags.size(), classes_});
  for (std::size_t i = 0; i < bags.size(); ++i) {
    if (bags[i].class_index >= classes_) throw ValidationError("linear probe: label out of range");
    inputs.push_back(&bags[i].features);
    targets.at(i, bags[i].class_index) = 1.0;
  }
  const AdamWConfig opt{config_.lr, 0.9, 0.98, 1e-8, config_.weight_decay};
  for (std::size_t e = 0; e < config_.epochs; ++e) {
    Tape tape;
    Var loss = ops::soft_cross_entropy(logits(tape, inputs), targets);
    tape.backward(loss);
    adamw_step(params_, opt);
  }
}

EvalReport LinearProbe::evaluate(const std::vector<BagData>& bags) {
  if (bags.empty()) throw ValidationError("linear probe: no evaluation bags");
  std::vector<const Tensor*> inputs;
  std::vector<std::size_t> labels;
  for (const auto& b : bags) {
    inputs.push_back(&b.features);
    labels.push_back(b.class_index);
  }
  Tape tape;
  const Tensor z = ops::softmax_rows(logits(tape, inputs)).value();
  std::vector<std::vector<double>> scores;
  for (std::size_t i = 0; i < z.rows(); ++i) {
    auto r = z.row_span(i);
    scores.emplace_back(r.begin(), r.end());
  }
  return build_eval_report(labels, scores, classes_, "linear-probe:" + std::string(pooling_name(config_.pooling)));
}

EvalReport baseline_linear_probe(const std::vector<BagData>& train, const std::vector<BagData>& test,
                                 std::size_t num_classes, const ProbeConfig& config) {
  if (train.empty()) throw ValidationError("linear probe: no training bags");
  LinearProbe probe(train.front().features.cols(), num_classes, config);
  probe.fit(train);
  return probe.evaluate(test);
}

}  // namespace five
