#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "five/param_store.hpp"
#include "five/tensor.hpp"

namespace five {

class Tape;

// Handle to a value recorded on a Tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
};

// Recorded computation for reverse-mode differentiation. One tape per
// forward pass; parameters are read from a ParamStore and their gradients
// are accumulated back into it by backward().
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const Tensor& out_grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  // Leaf bound to a stored parameter. Repeated calls with the same
  // (store, name) return the same node.
  Var param(ParamStore& store, const std::string& name);

  const Tensor& value(Var v) const { return nodes_[v.id].value; }
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  // Reverse pass from a single-element tensor. Accumulates into the grads
  // of every bound parameter and marks all trainable parameters of the
  // bound stores as having a current gradient (zero if untouched).
  void backward(Var loss);

  // Gradient of the last backward() with respect to a recorded node.
  const Tensor& grad(Var v) const;

  // For operation implementations.
  Var record(Tensor value, std::vector<std::size_t> parents, BackwardFn backward);
  void accumulate(std::size_t id, const Tensor& contribution);
  void accumulate(std::size_t id, std::span<const double> contribution);

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    bool grad_touched = false;
    std::vector<std::size_t> parents;
    BackwardFn backward;
    Parameter* bound = nullptr;
  };

  std::vector<Node> nodes_;
  std::map<std::pair<const ParamStore*, std::string>, std::size_t> param_nodes_;
  std::set<ParamStore*> stores_;
};

// When enabled, every recorded value is checked for NaN/Inf. Off by default;
// the test suites turn it on.
void set_debug_checks(bool enabled);
bool debug_checks_enabled();

// Differentiable operations. Matrices are rank 2; a rank-1 tensor is treated
// as a single row. Scalars are rank 0.
namespace ops {

Var matmul(Var a, Var b);
Var transpose(Var a);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);                 // elementwise
Var scale(Var a, double factor);
Var divide_by_scalar(Var a, Var s);    // a / s, s single-element
Var add_row(Var a, Var row);           // broadcast a 1xC row over each row of a
Var exp(Var a);
Var tanh(Var a);
Var clamp_min(Var a, double floor);
Var sum(Var a);                        // -> scalar
Var mean_rows(Var x);                  // LxD -> 1xD
Var masked_mean_rows(Var x, const Mask& mask);
Var concat_rows(std::span<const Var> parts);
Var concat_cols(Var a, Var b);
Var gather_rows(Var x, std::span<const std::size_t> indices);
// Mean of embedding rows for each id list: VxD table -> TxD.
Var embedding_mean(Var table, const std::vector<std::vector<std::size_t>>& ids);
Var l2_normalize_rows(Var x);

// Row-wise softmax over valid entries, max-subtracted. `mask` has either one
// entry per column (shared by all rows) or one per element. Masked entries
// are exactly zero.
Var masked_softmax(Var logits, const Mask& mask);
Var softmax_rows(Var logits);

// softmax(q k^T / sqrt(D)) v with masked keys.
Var attention(Var q, Var k, Var v, const Mask& key_mask);

// -(1/N) sum_ij y_ij log softmax(logits)_ij. Target rows must be
// non-negative and sum to 1.
Var soft_cross_entropy(Var logits, const Tensor& targets);

}  // namespace ops
}  // namespace five
