#include "five/guidance.hpp"

#include <algorithm>
#include <cctype>

#include "five/error.hpp"

namespace five {

void SamplePolicy::validate() const {
  if (min_fields < 1 || min_fields > kFieldCount)
    throw ValidationError("guidance min_fields must be in [1, 6], got " + std::to_string(min_fields));
  if (!(keep_probability > 0.0 && keep_probability <= 1.0))
    throw ValidationError("guidance keep_probability must be in (0, 1]");
}

std::vector<std::size_t> known_fields(const FineGrainedDescription& d) {
  std::vector<std::size_t> out;
  for (std::size_t f = 0; f < kFieldCount; ++f)
    if (d.is_known(f)) out.push_back(f);
  return out;
}

std::vector<std::size_t> sample_and_shuffle(const FineGrainedDescription& d, const SamplePolicy& policy,
                                            Rng& rng) {
  policy.validate();
  const auto known = known_fields(d);
  if (known.empty()) throw DegenerateError("description has no known fields");
  const std::size_t needed = std::min(policy.min_fields, known.size());

  const std::uint64_t base = rng.next_u64();
  std::vector<std::size_t> kept;
  for (std::uint64_t attempt = 0;; ++attempt) {
    Rng draw = Rng::substream(base, attempt);
    kept.clear();
    for (std::size_t f : known)
      if (draw.bernoulli(policy.keep_probability)) kept.push_back(f);
    if (kept.size() >= needed) break;
  }
  if (policy.shuffle) rng.shuffle(kept);
  return kept;
}

GuidancePair reconstruct(const FineGrainedDescription& d, const PromptTemplate& tmpl,
                         const std::vector<std::size_t>& indices) {
  if (indices.empty()) throw StateError("reconstruct: empty field selection");
  std::vector<bool> seen(kFieldCount, false);
  GuidancePair pair;
  pair.field_indices = indices;
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const std::size_t f = indices[k];
    if (f >= kFieldCount) throw StateError("reconstruct: field index " + std::to_string(f) + " out of range");
    if (seen[f]) throw StateError("reconstruct: field " + std::to_string(f) + " selected twice");
    seen[f] = true;
    if (!d.is_known(f))
      throw StateError("reconstruct: field '" + std::string(field_name(f)) + "' is Unknown");
    if (k) {
      pair.prompt_text += " ";
      pair.description_text += "; ";
    }
    pair.prompt_text += tmpl.questions[f];
    pair.description_text += render_field(d, f);
  }
  pair.description_text += ".";
  return pair;
}

GuidancePair full_guidance(const FineGrainedDescription& d, const PromptTemplate& tmpl) {
  const auto known = known_fields(d);
  if (known.empty()) throw DegenerateError("description has no known fields");
  return reconstruct(d, tmpl, known);
}

std::string equivalence_key(std::string_view text) {
  std::string out;
  bool pending_space = false;
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  while (!out.empty() && (out.back() == '.' || out.back() == ' ')) out.pop_back();
  return out;
}

}  // namespace five
