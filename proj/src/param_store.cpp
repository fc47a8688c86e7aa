#include "five/param_store.hpp"

#include <algorithm>

#include "five/error.hpp"

namespace five {

Parameter& ParamStore::add(const std::string& name, Tensor value, bool requires_grad) {
  if (params_.count(name)) throw StateError("duplicate parameter name '" + name + "'");
  Parameter p;
  p.grad = Tensor::zeros(value.shape());
  p.first_moment = Tensor::zeros(value.shape());
  p.second_moment = Tensor::zeros(value.shape());
  p.value = std::move(value);
  p.requires_grad = requires_grad;
  return params_.emplace(name, std::move(p)).first->second;
}

Parameter& ParamStore::get(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw StateError("unknown parameter '" + name + "'");
  return it->second;
}

const Parameter& ParamStore::get(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw StateError("unknown parameter '" + name + "'");
  return it->second;
}

void ParamStore::set_value(const std::string& name, Tensor value) {
  Parameter& p = get(name);
  if (p.value.shape() != value.shape())
    throw ShapeError("parameter '" + name + "' has shape " + to_string(p.value.shape()) +
                     ", got " + to_string(value.shape()));
  p.value = std::move(value);
}

std::vector<std::string> ParamStore::names() const {
  std::vector<std::string> out;
  out.reserve(params_.size());
  for (const auto& [name, _] : params_) out.push_back(name);
  return out;
}

void ParamStore::zero_grad() {
  for (auto& [_, p] : params_) {
    std::fill(p.grad.data().begin(), p.grad.data().end(), 0.0);
    p.grad_ready = false;
  }
}

void ParamStore::mark_grads_ready() {
  for (auto& [_, p] : params_)
    if (p.requires_grad) p.grad_ready = true;
}

void ParamStore::set_trainable_only(const std::vector<std::string>& trainable) {
  for (auto& [_, p] : params_) p.requires_grad = false;
  for (const auto& name : trainable) get(name).requires_grad = true;
}

void ParamStore::set_requires_grad(const std::string& name, bool requires_grad) {
  get(name).requires_grad = requires_grad;
}

std::map<std::string, Tensor> ParamStore::snapshot() const {
  std::map<std::string, Tensor> out;
  for (const auto& [name, p] : params_) out.emplace(name, p.value);
  return out;
}

void ParamStore::restore(const std::map<std::string, Tensor>& values) {
  for (const auto& [name, value] : values) set_value(name, value);
}

}  // namespace five
