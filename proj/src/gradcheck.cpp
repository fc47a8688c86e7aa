#include "five/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "five/error.hpp"
#include "five/rng.hpp"

namespace five {
namespace {

double forward(const LossBuilder& build, ParamStore& params) {
  Tape tape;
  return build(tape, params).value().item();
}

std::vector<std::size_t> probe_elements(std::size_t size, std::size_t max_elements,
                                        std::uint64_t seed) {
  std::vector<std::size_t> idx(size);
  std::iota(idx.begin(), idx.end(), 0);
  if (size <= max_elements) return idx;
  Rng rng(seed);
  rng.shuffle(idx);
  idx.resize(max_elements);
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace

const ParamGradCheck& GradReport::find(const std::string& name) const {
  for (const auto& p : params)
    if (p.name == name) return p;
  throw StateError("grad report has no parameter '" + name + "'");
}

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}

GradReport grad_check(const LossBuilder& build, ParamStore& params, double epsilon,
                      std::size_t max_elements, std::uint64_t seed) {
  const double first = forward(build, params);
  const double second = forward(build, params);
  if (first != second)
    throw StateError("grad_check: forward pass is not deterministic (" +
                     std::to_string(first) + " vs " + std::to_string(second) + ")");

  params.zero_grad();
  {
    Tape tape;
    Var loss = build(tape, params);
    tape.backward(loss);
  }
  std::map<std::string, Tensor> analytic;
  for (const auto& [name, p] : params) analytic.emplace(name, p.grad);
  params.zero_grad();

  GradReport report;
  for (auto& [name, p] : params) {
    ParamGradCheck check;
    check.name = name;
    check.trainable = p.requires_grad;
    const Tensor& a = analytic.at(name);
    for (double g : a.data()) {
      check.participates = check.participates || g != 0.0;
      check.max_abs_grad = std::max(check.max_abs_grad, std::abs(g));
    }
    if (p.requires_grad) {
      for (std::size_t i : probe_elements(p.value.size(), max_elements, mix_seed(seed, hash_string(name)))) {
        const double original = p.value[i];
        p.value[i] = original + epsilon;
        const double plus = forward(build, params);
        p.value[i] = original - epsilon;
        const double minus = forward(build, params);
        p.value[i] = original;
        const double numeric = (plus - minus) / (2.0 * epsilon);
        check.max_rel_error = std::max(check.max_rel_error, relative_error(a[i], numeric));
        ++check.checked_elements;
      }
      if (check.max_rel_error >= report.max_rel_error) {
        report.max_rel_error = check.max_rel_error;
        report.worst = name;
      }
    }
    report.params.push_back(std::move(check));
  }
  return report;
}

}  // namespace five
