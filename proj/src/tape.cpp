#include "five/tape.hpp"

#include <atomic>

#include "five/error.hpp"

namespace five {
namespace {
std::atomic<bool> g_debug_checks{false};
}  // namespace

void set_debug_checks(bool enabled) { g_debug_checks.store(enabled); }
bool debug_checks_enabled() { return g_debug_checks.load(); }

const Tensor& Var::value() const {
  if (tape == nullptr) throw StateError("use of an unbound Var");
  return tape->value(*this);
}

Var Tape::constant(Tensor value) {
  Node node;
  node.value = std::move(value);
  nodes_.push_back(std::move(node));
  return Var{this, nodes_.size() - 1};
}

Var Tape::param(ParamStore& store, const std::string& name) {
  auto key = std::make_pair(static_cast<const ParamStore*>(&store), name);
  if (auto it = param_nodes_.find(key); it != param_nodes_.end()) return Var{this, it->second};
  Parameter& p = store.get(name);
  Node node;
  node.value = p.value;
  node.requires_grad = p.requires_grad;
  node.bound = &p;
  nodes_.push_back(std::move(node));
  std::size_t id = nodes_.size() - 1;
  param_nodes_.emplace(std::move(key), id);
  stores_.insert(&store);
  return Var{this, id};
}

Var Tape::record(Tensor value, std::vector<std::size_t> parents, BackwardFn backward) {
  Node node;
  node.value = std::move(value);
  for (std::size_t p : parents) node.requires_grad = node.requires_grad || nodes_[p].requires_grad;
  node.parents = std::move(parents);
  if (node.requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var{this, nodes_.size() - 1};
}

void Tape::accumulate(std::size_t id, std::span<const double> contribution) {
  Node& node = nodes_[id];
  if (!node.requires_grad) return;
  if (contribution.size() != node.value.size())
    throw ShapeError("gradient of size " + std::to_string(contribution.size()) +
                     " for value of shape " + to_string(node.value.shape()));
  if (!node.grad_touched) {
    node.grad = Tensor(node.value.shape(),
                       std::vector<double>(contribution.begin(), contribution.end()));
    node.grad_touched = true;
    return;
  }
  auto g = node.grad.data();
  for (std::size_t i = 0; i < g.size(); ++i) g[i] += contribution[i];
}

void Tape::accumulate(std::size_t id, const Tensor& contribution) {
  accumulate(id, contribution.data());
}

void Tape::backward(Var loss) {
  if (loss.tape != this) throw StateError("backward on a Var from another tape");
  if (nodes_[loss.id].value.size() != 1)
    throw StateError("backward requires a scalar loss, got shape " +
                     to_string(nodes_[loss.id].value.shape()));
  for (auto& node : nodes_) {
    node.grad_touched = false;
    node.grad = Tensor();
  }
  if (nodes_[loss.id].requires_grad) {
    nodes_[loss.id].grad = Tensor::filled(nodes_[loss.id].value.shape(), 1.0);
    nodes_[loss.id].grad_touched = true;
  }
  const bool check = debug_checks_enabled();
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (!node.grad_touched || !node.backward) continue;
    if (check && !node.grad.all_finite())
      throw NumericError("non-finite gradient at tape node " + std::to_string(i));
    node.backward(*this, node.grad);
  }
  for (auto& node : nodes_) {
    if (node.bound == nullptr || !node.grad_touched || !node.bound->requires_grad) continue;
    auto dst = node.bound->grad.data();
    auto src = node.grad.data();
    for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
  }
  for (ParamStore* store : stores_) store->mark_grads_ready();
}

const Tensor& Tape::grad(Var v) const {
  static const Tensor empty;
  const Node& node = nodes_[v.id];
  return node.grad_touched ? node.grad : empty;
}

}  // namespace five
