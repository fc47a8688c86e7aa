#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "five/report.hpp"
#include "five/synth.hpp"
#include "five/text_encoder.hpp"

namespace five {

enum class Split : std::uint8_t { Train, Val, Test };
std::string_view split_name(Split s);
Split split_from_name(std::string_view name);

struct BagRecord {
  std::string bag_id;
  std::string class_name;
  FineGrainedDescription attributes;  // ground truth used by the generator
  ReportStyle style = ReportStyle::Checklist;
  std::string report_path;            // corpus file holding the report
  std::string features_path;          // relative to the manifest directory
  std::size_t n_instances = 0;
  Split split = Split::Train;
};

struct DatasetManifest {
  std::vector<BagRecord> records;
  SynthSpec spec;
  std::uint64_t seed = 0;
  std::uint64_t spec_hash = 0;
  std::string vocabulary_path;
  std::string descriptions_path;
  std::filesystem::path root;  // directory of the manifest; not serialized

  std::vector<const BagRecord*> split(Split s) const;
};

struct DatasetOptions {
  std::size_t bags_per_class = 100;
  double train_fraction = 0.65;
  double val_fraction = 0.10;
  // Explicit per-class {train, val, test} counts; must sum to bags_per_class.
  std::optional<std::array<std::size_t, 3>> split_counts;
  std::uint64_t seed = 0;
  std::uint64_t standardizer_seed = 0;

  void validate() const;
};

// Writes features/<bag>.fivb, corpus.jsonl, descriptions.jsonl (mock
// standardizer output), vocab.txt and manifest.json under out_dir.
DatasetManifest gen_dataset(const SynthSpec& spec, const DatasetOptions& options, const std::filesystem::path& out_dir);

void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);
// Checks that every referenced file exists.
DatasetManifest load_manifest(const std::filesystem::path& path);

// Bag ready for training or evaluation.
struct BagData {
  std::string bag_id;
  std::size_t class_index = 0;
  FineGrainedDescription description;  // standardized (parsed) description
  Tensor features;
};

// Loads the bags of a split with their standardized descriptions.
std::vector<BagData> load_split(const DatasetManifest& manifest, Split s);
Vocabulary load_vocabulary(const DatasetManifest& manifest);

// Same bags as gen_dataset would produce, without touching the disk.
struct InMemoryDataset {
  SynthSpec spec;
  std::vector<BagData> train, val, test;
  Vocabulary vocabulary;
};
InMemoryDataset make_dataset(const SynthSpec& spec, const DatasetOptions& options);

// Stratified rotation: within each class, bags (in input order) are dealt to
// folds round-robin; fold k is held out. Throws ValidationError unless
// 2 <= folds and k < folds.
struct FoldSplit {
  std::vector<BagData> train, test;
};
FoldSplit fold_split(const std::vector<BagData>& bags, std::size_t folds, std::size_t k);

// Questions plus the rendered descriptions of the given bags.
Vocabulary build_vocabulary(const PromptTemplate& tmpl, const std::vector<BagData>& bags);

}  // namespace five
