#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "five/rng.hpp"
#include "five/tensor.hpp"

namespace five {

struct SampleConfig {
  double ratio = 0.5;
  std::size_t maxn = 2048;
  std::uint64_t seed = 0;

  void validate() const;
};

// max(1, min(floor(p * ratio), maxn)). Products within 1e-9 (relative) of an
// integer are taken as that integer, so 29 * 0.1 and 100 * 0.29 give the
// exact-arithmetic counts.
std::size_t sample_count(std::size_t p, const SampleConfig& cfg);

// One uniform draw from each chunk [floor(k p / s_n), floor((k+1) p / s_n)),
// returned ascending. Throws ValidationError unless 1 <= s_n <= p.
std::vector<std::size_t> chunked_sample(std::size_t p, std::size_t s_n, Rng& rng);

struct SampledBag {
  std::string bag_id;
  std::vector<std::size_t> selected_indices;
};

// Training-time sampling for one bag at one epoch, on the substream
// (cfg.seed, epoch, bag_id).
SampledBag sample_bag(const std::string& bag_id, std::size_t p, const SampleConfig& cfg,
                      std::uint64_t epoch);

// Number of sample_bag calls since the last reset (process-wide).
std::uint64_t sampler_invocations();
void reset_sampler_invocations();

// Rows of x at the given indices.
Tensor select_rows(const Tensor& x, const std::vector<std::size_t>& indices);

// Bags padded to a common length L. `data` is B x L x D; rows past a bag's
// length hold `pad_value` and are masked out.
struct PaddedBatch {
  Tensor data;
  std::vector<Mask> masks;
  std::size_t batch = 0;
  std::size_t length = 0;
  std::size_t dim = 0;

  // L x D matrix of bag b.
  Tensor bag(std::size_t b) const;
};

PaddedBatch pad_batch(const std::vector<Tensor>& bags, double pad_value = 0.0);

}  // namespace five
