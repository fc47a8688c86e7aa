#pragma once

#include <cstddef>
#include <optional>

#include "five/param_store.hpp"
#include "five/rng.hpp"
#include "five/tape.hpp"

namespace five {

// Parameters (all D x D unless noted): agg.self.{q,k,v}, agg.cross.{q,k,v},
// agg.fuse (2D x D), prompts.learnable (m x D).
struct AggregatorConfig {
  std::size_t dim = 32;
  std::size_t learnable_prompts = 4;
  double init_scale = 1.0;  // multiplies the 1/sqrt(D) default std

  void validate() const;
};

void init_aggregator_params(ParamStore& params, const AggregatorConfig& config, Rng& rng);

// s = attention(I Wq, I Wk, I Wv, mask) + I
Var self_attend(Tape& tape, ParamStore& params, Var instances, const Mask& mask);
// z = attention(Q Wq, s Wk, s Wv, mask), one row per prompt.
Var cross_attend(Tape& tape, ParamStore& params, Var prompts, Var s, const Mask& mask);
// concat(masked_mean(s), mean(z)) W. Without z the second half is zero.
Var fuse(Tape& tape, ParamStore& params, Var s, std::optional<Var> z, const Mask& mask);

// Manual rows first, then the learnable rows (if any).
Var prompt_set(Tape& tape, ParamStore& params, std::optional<Var> manual);

// self_attend -> cross_attend -> fuse. With no prompt rows at all the cross
// path is skipped.
Var aggregate(Tape& tape, ParamStore& params, Var instances, const Mask& mask, std::optional<Var> prompts);

}  // namespace five
