#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "five/report.hpp"
#include "five/rng.hpp"
#include "five/tensor.hpp"
#include "json.hpp"

namespace five {

struct ClassSpec {
  std::string name;
  // Text used for zero-shot matching.
  std::string description;
  // Index of the shared prototype direction this class builds on.
  std::size_t prototype = 0;
  // Per field, a distribution over verdict codes (code 0 is Unknown).
  std::array<std::vector<double>, kFieldCount> attribute_probs;
};

// Generator for synthetic slide surrogates. A bag has n instances, ceil(rho n)
// of them diagnostic:
//   diagnostic = background + tumor + class mean + attribute offsets + noise
//   other      = background + per-bag background shift + noise
struct SynthSpec {
  std::size_t dim = 32;
  std::vector<ClassSpec> classes;
  double diagnostic_fraction = 0.3;
  double noise = 0.5;
  double tumor_scale = 3.0;
  double class_scale = 1.0;
  double subtype_scale = 0.0;
  double attribute_scale = 1.0;
  double background_shift = 1.0;
  std::size_t min_instances = 5;
  std::size_t max_instances = 50;
  std::uint64_t world_seed = 1;

  void validate() const;
  std::size_t class_index(const std::string& name) const;
  std::vector<std::string> class_texts() const;
  std::uint64_t fingerprint() const;
};

nlohmann::json spec_to_json(const SynthSpec& spec);
SynthSpec spec_from_json(const nlohmann::json& j);

// Most likely known verdict per field (Unknown when no verdict has mass).
FineGrainedDescription modal_description(const ClassSpec& cs);

// Two coarse classes with contrasting attribute profiles. Class descriptions
// are rendered from the modal profile of each class.
SynthSpec coarse_spec();
// Eight subtypes, four on each coarse prototype, with near-deterministic
// attributes. Shares the world (prototypes, attribute offsets) with
// coarse_spec().
SynthSpec subtype_spec();

// Fixed vectors derived from (world_seed, dim). Components do not depend on
// the class list, so specs sharing a world seed share geometry.
class FeatureWorld {
 public:
  explicit FeatureWorld(const SynthSpec& spec);

  // Class-specific part: prototype plus subtype offset.
  const Tensor& class_mean(std::size_t c) const { return class_means_.at(c); }
  const Tensor& background() const { return background_; }
  const Tensor& tumor() const { return tumor_; }
  // Zero for code 0.
  const Tensor& attribute_offset(std::size_t field, std::uint8_t code) const;
  // Noise-free diagnostic instance.
  Tensor diagnostic_mean(std::size_t c, const FineGrainedDescription& attributes) const;

 private:
  std::size_t dim_;
  Tensor background_;
  Tensor tumor_;
  std::vector<Tensor> class_means_;
  std::array<std::vector<Tensor>, kFieldCount> attribute_offsets_;
};

FineGrainedDescription draw_attributes(const SynthSpec& spec, std::size_t c, Rng& rng);

struct GeneratedBag {
  Tensor features;
  std::vector<bool> diagnostic;
  std::size_t diagnostic_count = 0;
};

GeneratedBag generate_bag_features(const SynthSpec& spec, const FeatureWorld& world, std::size_t c,
                                   const FineGrainedDescription& attributes, Rng& rng);

// Values rounded through 32-bit floats, i.e. what a feature file stores.
Tensor round_to_f32(const Tensor& t);

// "FIVB", u32 version, u32 n, u32 d, then n*d little-endian f32.
void write_feature_file(const std::filesystem::path& path, const Tensor& features);
Tensor read_feature_file(const std::filesystem::path& path);

// Frozen per-bag instance features.
class InstanceFeatureSource {
 public:
  virtual ~InstanceFeatureSource() = default;
  virtual Tensor features(const std::string& bag_id) const = 0;
  virtual std::size_t dim() const = 0;
};

class FileFeatureSource : public InstanceFeatureSource {
 public:
  FileFeatureSource(std::map<std::string, std::filesystem::path> files, std::size_t dim)
      : files_(std::move(files)), dim_(dim) {}
  Tensor features(const std::string& bag_id) const override;
  std::size_t dim() const override { return dim_; }

 private:
  std::map<std::string, std::filesystem::path> files_;
  std::size_t dim_;
};

// Features regenerated on demand from (spec, seed, class, attributes).
class GeneratedFeatureSource : public InstanceFeatureSource {
 public:
  struct Entry {
    std::size_t class_index;
    FineGrainedDescription attributes;
  };
  GeneratedFeatureSource(SynthSpec spec, std::uint64_t seed, std::map<std::string, Entry> bags);
  Tensor features(const std::string& bag_id) const override;
  std::size_t dim() const override { return spec_.dim; }

 private:
  SynthSpec spec_;
  FeatureWorld world_;
  std::uint64_t seed_;
  std::map<std::string, Entry> bags_;
};

// Substream used for a bag's features in datasets and generated sources.
Rng bag_feature_stream(std::uint64_t seed, const std::string& bag_id);

}  // namespace five
