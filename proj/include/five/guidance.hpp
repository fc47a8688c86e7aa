#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "five/report.hpp"
#include "five/rng.hpp"

namespace five {

struct SamplePolicy {
  std::size_t min_fields = 1;
  double keep_probability = 0.7;
  std::uint64_t seed = 0;
  // When false the kept fields stay in ascending order.
  bool shuffle = true;

  void validate() const;
};

// Field subset used for one bag at one step, with the matching question and
// answer texts. Position k of prompt_text answers to position k of
// description_text.
struct GuidancePair {
  std::vector<std::size_t> field_indices;
  std::string prompt_text;
  std::string description_text;
};

// Indices of non-Unknown fields, ascending.
std::vector<std::size_t> known_fields(const FineGrainedDescription& d);

// Bernoulli keep per known field; redraws (each attempt on a fresh substream)
// until min(min_fields, |known|) fields survive, then permutes them.
// Throws DegenerateError when no field is known.
std::vector<std::size_t> sample_and_shuffle(const FineGrainedDescription& d, const SamplePolicy& policy,
                                            Rng& rng);

// Throws StateError when an index is out of range, repeated, or Unknown.
GuidancePair reconstruct(const FineGrainedDescription& d, const PromptTemplate& tmpl,
                         const std::vector<std::size_t>& indices);

// Evaluation form: every known field in ascending order.
GuidancePair full_guidance(const FineGrainedDescription& d, const PromptTemplate& tmpl);

// Trimmed, whitespace-collapsed, case-folded, trailing periods removed.
std::string equivalence_key(std::string_view description_text);

}  // namespace five
