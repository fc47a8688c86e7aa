#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "five/param_store.hpp"
#include "five/tape.hpp"

namespace five {

struct ParamGradCheck {
  std::string name;
  bool trainable = false;
  // True when any analytic gradient element is non-zero.
  bool participates = false;
  std::size_t checked_elements = 0;
  double max_rel_error = 0.0;
  double max_abs_grad = 0.0;
};

struct GradReport {
  std::vector<ParamGradCheck> params;
  double max_rel_error = 0.0;
  std::string worst;

  bool passed(double tolerance) const { return max_rel_error < tolerance; }
  const ParamGradCheck& find(const std::string& name) const;
};

// Builds a scalar loss on the given tape, reading parameters from the store.
using LossBuilder = std::function<Var(Tape&, ParamStore&)>;

// |a - n| / max(|a|, |n|, 1e-8)
double relative_error(double analytic, double numeric);

// Central finite differences against the tape's analytic gradient for every
// trainable parameter. At most `max_elements` elements per parameter are
// probed (a seeded sample for larger tensors). Throws StateError when two
// identical forward passes disagree.
GradReport grad_check(const LossBuilder& build, ParamStore& params, double epsilon = 1e-5,
                      std::size_t max_elements = 64, std::uint64_t seed = 0);

}  // namespace five
