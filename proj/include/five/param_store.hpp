#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "five/tensor.hpp"

namespace five {

struct Parameter {
  Tensor value;
  Tensor grad;
  // AdamW moments, shaped like value.
  Tensor first_moment;
  Tensor second_moment;
  std::int64_t step = 0;
  bool requires_grad = true;
  // Set by backward, cleared by zero_grad / an optimizer step.
  bool grad_ready = false;
};

// Named trainable parameters. Iteration is sorted by name, so anything
// derived from iteration order (checkpoints, grad reports) is stable.
class ParamStore {
 public:
  Parameter& add(const std::string& name, Tensor value, bool requires_grad = true);

  bool contains(const std::string& name) const { return params_.count(name) != 0; }
  Parameter& get(const std::string& name);
  const Parameter& get(const std::string& name) const;
  const Tensor& value(const std::string& name) const { return get(name).value; }

  // Replace a parameter's value (shape must match). Optimizer state is kept.
  void set_value(const std::string& name, Tensor value);

  std::vector<std::string> names() const;
  std::size_t size() const { return params_.size(); }

  void zero_grad();
  // Marks every trainable parameter as having a current gradient.
  void mark_grads_ready();

  // Freeze every parameter, then unfreeze the names in `trainable`.
  void set_trainable_only(const std::vector<std::string>& trainable);
  void set_requires_grad(const std::string& name, bool requires_grad);

  // Values only; used for equality checks and checkpoints.
  std::map<std::string, Tensor> snapshot() const;
  void restore(const std::map<std::string, Tensor>& values);

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

 private:
  std::map<std::string, Parameter> params_;
};

}  // namespace five
