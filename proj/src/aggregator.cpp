#include "five/aggregator.hpp"

#include <cmath>
#include <vector>

#include "five/error.hpp"

namespace five {
namespace {

Tensor gaussian(std::size_t rows, std::size_t cols, double stddev, Rng& rng) {
  std::vector<double> v(rows * cols);
  for (double& x : v) x = stddev * rng.normal();
  return Tensor::matrix(rows, cols, std::move(v));
}

}  // namespace

void AggregatorConfig::validate() const {
  if (dim < 1) throw ValidationError("aggregator dim must be positive");
  if (!(init_scale >= 0.0)) throw ValidationError("aggregator init_scale must be non-negative");
}

void init_aggregator_params(ParamStore& params, const AggregatorConfig& config, Rng& rng) {
  config.validate();
  const std::size_t d = config.dim;
  const double s = config.init_scale / std::sqrt(static_cast<double>(d));
  for (const char* name : {"agg.self.q", "agg.self.k", "agg.self.v", "agg.cross.q", "agg.cross.k", "agg.cross.v"})
    params.add(name, gaussian(d, d, s, rng));
  params.add("agg.fuse", gaussian(2 * d, d, config.init_scale / std::sqrt(2.0 * static_cast<double>(d)), rng));
  if (config.learnable_prompts > 0)
    params.add("prompts.learnable", gaussian(config.learnable_prompts, d, config.init_scale, rng));
}

Var self_attend(Tape& tape, ParamStore& params, Var instances, const Mask& mask) {
  if (mask.size() != instances.rows())
    throw ShapeError("self_attend: mask of " + std::to_string(mask.size()) + " for " +
                     std::to_string(instances.rows()) + " instances");
  Var q = ops::matmul(instances, tape.param(params, "agg.self.q"));
  Var k = ops::matmul(instances, tape.param(params, "agg.self.k"));
  Var v = ops::matmul(instances, tape.param(params, "agg.self.v"));
  return ops::add(ops::attention(q, k, v, mask), instances);
}

Var cross_attend(Tape& tape, ParamStore& params, Var prompts, Var s, const Mask& mask) {
  Var q = ops::matmul(prompts, tape.param(params, "agg.cross.q"));
  Var k = ops::matmul(s, tape.param(params, "agg.cross.k"));
  Var v = ops::matmul(s, tape.param(params, "agg.cross.v"));
  return ops::attention(q, k, v, mask);
}

Var fuse(Tape& tape, ParamStore& params, Var s, std::optional<Var> z, const Mask& mask) {
  Var s_mean = ops::masked_mean_rows(s, mask);
  Var z_mean = z ? ops::mean_rows(*z) : tape.constant(Tensor::zeros({1, s.cols()}));
  return ops::matmul(ops::concat_cols(s_mean, z_mean), tape.param(params, "agg.fuse"));
}

Var prompt_set(Tape& tape, ParamStore& params, std::optional<Var> manual) {
  const bool learnable = params.contains("prompts.learnable");
  if (!learnable) {
    if (!manual) throw StateError("prompt_set: no manual and no learnable prompts");
    return *manual;
  }
  Var ql = tape.param(params, "prompts.learnable");
  if (!manual) return ql;
  const Var parts[] = {*manual, ql};
  return ops::concat_rows(parts);
}

Var aggregate(Tape& tape, ParamStore& params, Var instances, const Mask& mask, std::optional<Var> prompts) {
  Var s = self_attend(tape, params, instances, mask);
  if (!prompts) return fuse(tape, params, s, std::nullopt, mask);
  Var z = cross_attend(tape, params, *prompts, s, mask);
  return fuse(tape, params, s, z, mask);
}

}  // namespace five
