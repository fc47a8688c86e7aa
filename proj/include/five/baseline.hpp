#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "five/dataset.hpp"
#include "five/metrics.hpp"
#include "five/param_store.hpp"
#include "five/tape.hpp"

namespace five {

enum class Pooling { Mean, Max, Attention };
std::string_view pooling_name(Pooling p);
Pooling pooling_from_name(std::string_view name);

struct ProbeConfig {
  Pooling pooling = Pooling::Mean;
  std::size_t epochs = 200;
  double lr = 1e-2;
  double weight_decay = 1e-4;
  std::size_t attention_dim = 16;
  std::uint64_t seed = 0;
};

// Linear classifier on pooled frozen instance features. Parameters:
// probe.weight (D x C), probe.bias (1 x C) and, for attention pooling,
// pool.v (H x D) and pool.w (H x 1).
class LinearProbe {
 public:
  LinearProbe(std::size_t dim, std::size_t num_classes, ProbeConfig config);

  // 1 x D pooled feature.
  Var pool(Tape& tape, const Tensor& instances);
  // softmax(w^T tanh(V h^T)) over the instances of a bag.
  Tensor attention_weights(const Tensor& instances);
  Var logits(Tape& tape, const std::vector<const Tensor*>& bags);

  // Full-batch AdamW on cross-entropy.
  void fit(const std::vector<BagData>& bags);
  EvalReport evaluate(const std::vector<BagData>& bags);

  ParamStore& params() { return params_; }

 private:
  std::size_t dim_;
  std::size_t classes_;
  ProbeConfig config_;
  ParamStore params_;
};

// Trains on `train` and reports on `test`.
EvalReport baseline_linear_probe(const std::vector<BagData>& train, const std::vector<BagData>& test,
                                 std::size_t num_classes, const ProbeConfig& config);

}  // namespace five
