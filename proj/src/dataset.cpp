#include "five/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>

#include "five/error.hpp"
#include "five/guidance.hpp"

namespace five {
namespace {

using json = nlohmann::json;

struct PlannedBag {
  BagRecord record;
  std::size_t class_index = 0;
};

std::string bag_name(const std::string& class_name, std::size_t i) {
  std::string num = std::to_string(i);
  if (num.size() < 4) num.insert(0, 4 - num.size(), '0');
  return class_name + "-" + num;
}

std::array<std::size_t, 3> split_sizes(const DatasetOptions& o) {
  if (o.split_counts) return *o.split_counts;
  const double n = static_cast<double>(o.bags_per_class);
  const auto train = static_cast<std::size_t>(std::llround(o.train_fraction * n));
  const auto val = std::min(o.bags_per_class - train, static_cast<std::size_t>(std::llround(o.val_fraction * n)));
  return {train, val, o.bags_per_class - train - val};
}

std::vector<PlannedBag> plan(const SynthSpec& spec, const DatasetOptions& options) {
  spec.validate();
  options.validate();
  const auto sizes = split_sizes(options);
  std::vector<PlannedBag> out;
  for (std::size_t c = 0; c < spec.classes.size(); ++c) {
    std::vector<std::size_t> order(options.bags_per_class);
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng split_rng = Rng::substream(options.seed, hash_string("split"), c);
    split_rng.shuffle(order);
    std::vector<Split> assignment(options.bags_per_class);
    for (std::size_t r = 0; r < order.size(); ++r)
      assignment[order[r]] = r < sizes[0] ? Split::Train : r < sizes[0] + sizes[1] ? Split::Val : Split::Test;

    for (std::size_t i = 0; i < options.bags_per_class; ++i) {
      PlannedBag p;
      p.class_index = c;
      p.record.bag_id = bag_name(spec.classes[c].name, i);
      p.record.class_name = spec.classes[c].name;
      Rng rng = Rng::substream(options.seed, hash_string("attributes"), hash_string(p.record.bag_id));
      p.record.attributes = draw_attributes(spec, c, rng);
      p.record.style = static_cast<ReportStyle>(rng.uniform_index(kReportStyleCount));
      p.record.split = assignment[i];
      p.record.report_path = "corpus.jsonl";
      p.record.features_path = "features/" + p.record.bag_id + ".fivb";
      out.push_back(std::move(p));
    }
  }
  return out;
}

std::vector<Tensor> generate_features(const SynthSpec& spec, const std::vector<PlannedBag>& bags, std::uint64_t seed) {
  const FeatureWorld world(spec);
  std::vector<Tensor> out(bags.size());
  const auto n = static_cast<std::ptrdiff_t>(bags.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto& b = bags[static_cast<std::size_t>(i)];
    Rng rng = bag_feature_stream(seed, b.record.bag_id);
    out[static_cast<std::size_t>(i)] =
        round_to_f32(generate_bag_features(spec, world, b.class_index, b.record.attributes, rng).features);
  }
  return out;
}

std::vector<RawReport> make_reports(const std::vector<PlannedBag>& bags, std::uint64_t seed) {
  std::vector<RawReport> out;
  for (const auto& b : bags) out.push_back(make_report(b.record.bag_id, b.record.attributes, b.record.style, seed));
  return out;
}

std::vector<FineGrainedDescription> standardize_all(const std::vector<RawReport>& reports, std::uint64_t seed) {
  MockStandardizer mock(seed);
  const PromptTemplate& tmpl = default_template();
  std::vector<FineGrainedDescription> out;
  for (const auto& r : reports) {
    ParsedAnswer parsed = parse_answer(mock.standardize(r, tmpl));
    if (parsed.warnings.any())
      throw StateError("standardized answer for '" + r.report_id + "' has unclassifiable segments");
    out.push_back(std::move(parsed.description));
  }
  return out;
}

json record_to_json(const BagRecord& r) {
  json attrs = json::array();
  for (std::size_t f = 0; f < kFieldCount; ++f) attrs.push_back(std::string(verdict_name(f, r.attributes.verdict(f))));
  return {{"bag_id", r.bag_id},
          {"class_name", r.class_name},
          {"attributes", attrs},
          {"style", std::string(style_name(r.style))},
          {"report_path", r.report_path},
          {"features_path", r.features_path},
          {"n_instances", r.n_instances},
          {"split", std::string(split_name(r.split))}};
}

BagRecord record_from_json(const json& j) {
  BagRecord r;
  r.bag_id = j.at("bag_id").get<std::string>();
  r.class_name = j.at("class_name").get<std::string>();
  const auto attrs = j.at("attributes").get<std::vector<std::string>>();
  if (attrs.size() != kFieldCount) throw ValidationError("record '" + r.bag_id + "' needs six attributes");
  for (std::size_t f = 0; f < kFieldCount; ++f) r.attributes.set_verdict(f, verdict_from_name(f, attrs[f]));
  r.style = style_from_name(j.at("style").get<std::string>());
  r.report_path = j.at("report_path").get<std::string>();
  r.features_path = j.at("features_path").get<std::string>();
  r.n_instances = j.at("n_instances").get<std::size_t>();
  r.split = split_from_name(j.at("split").get<std::string>());
  return r;
}

}  // namespace

std::string_view split_name(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "train";
}

Split split_from_name(std::string_view name) {
  if (name == "train") return Split::Train;
  if (name == "val") return Split::Val;
  if (name == "test") return Split::Test;
  throw ValidationError("unknown split '" + std::string(name) + "'");
}

std::vector<const BagRecord*> DatasetManifest::split(Split s) const {
  std::vector<const BagRecord*> out;
  for (const auto& r : records)
    if (r.split == s) out.push_back(&r);
  return out;
}

void DatasetOptions::validate() const {
  if (bags_per_class < 1) throw ValidationError("bags_per_class must be positive");
  if (split_counts) {
    const auto& s = *split_counts;
    if (s[0] + s[1] + s[2] != bags_per_class)
      throw ValidationError("split counts must sum to bags_per_class (" + std::to_string(bags_per_class) + ")");
  } else if (!(train_fraction >= 0.0 && val_fraction >= 0.0 && train_fraction + val_fraction <= 1.0)) {
    throw ValidationError("split fractions must be non-negative and sum to at most 1");
  }
}

Vocabulary build_vocabulary(const PromptTemplate& tmpl, const std::vector<BagData>& bags) {
  std::vector<std::string> texts(tmpl.questions.begin(), tmpl.questions.end());
  for (const auto& b : bags) texts.push_back(render_description(b.description));
  return Vocabulary::build(texts);
}

FoldSplit fold_split(const std::vector<BagData>& bags, std::size_t folds, std::size_t k) {
  if (folds < 2 || k >= folds)
    throw ValidationError("fold " + std::to_string(k) + " of " + std::to_string(folds) + " is not a valid rotation");
  std::map<std::size_t, std::size_t> seen;
  FoldSplit out;
  for (const auto& b : bags) {
    const std::size_t slot = seen[b.class_index]++ % folds;
    (slot == k ? out.test : out.train).push_back(b);
  }
  return out;
}

InMemoryDataset make_dataset(const SynthSpec& spec, const DatasetOptions& options) {
  const auto bags = plan(spec, options);
  const auto features = generate_features(spec, bags, options.seed);
  const auto descriptions = standardize_all(make_reports(bags, options.seed), options.standardizer_seed);
  InMemoryDataset ds;
  ds.spec = spec;
  for (std::size_t i = 0; i < bags.size(); ++i) {
    BagData b{bags[i].record.bag_id, bags[i].class_index, descriptions[i], features[i]};
    switch (bags[i].record.split) {
      case Split::Train: ds.train.push_back(std::move(b)); break;
      case Split::Val: ds.val.push_back(std::move(b)); break;
      case Split::Test: ds.test.push_back(std::move(b)); break;
    }
  }
  ds.vocabulary = build_vocabulary(default_template(), ds.train);
  return ds;
}

DatasetManifest gen_dataset(const SynthSpec& spec, const DatasetOptions& options, const std::filesystem::path& out_dir) {
  auto bags = plan(spec, options);
  const auto features = generate_features(spec, bags, options.seed);
  const auto reports = make_reports(bags, options.seed);
  const auto descriptions = standardize_all(reports, options.standardizer_seed);

  try {
    std::filesystem::create_directories(out_dir / "features");
  } catch (const std::filesystem::filesystem_error& e) {
    throw IoError("cannot create " + (out_dir / "features").string() + ": " + e.what());
  }
  DatasetManifest m;
  m.spec = spec;
  m.seed = options.seed;
  m.spec_hash = spec.fingerprint();
  m.vocabulary_path = "vocab.txt";
  m.descriptions_path = "descriptions.jsonl";
  m.root = out_dir;

  std::vector<DescriptionRecord> desc_records;
  std::vector<BagData> train;
  for (std::size_t i = 0; i < bags.size(); ++i) {
    bags[i].record.n_instances = features[i].rows();
    write_feature_file(out_dir / bags[i].record.features_path, features[i]);
    desc_records.push_back({bags[i].record.bag_id, descriptions[i]});
    if (bags[i].record.split == Split::Train)
      train.push_back({bags[i].record.bag_id, bags[i].class_index, descriptions[i], Tensor()});
    m.records.push_back(bags[i].record);
  }
  write_corpus(reports, out_dir / "corpus.jsonl");
  write_descriptions(desc_records, out_dir / m.descriptions_path);
  build_vocabulary(default_template(), train).save(out_dir / m.vocabulary_path);
  save_manifest(m, out_dir / "manifest.json");
  return m;
}

void save_manifest(const DatasetManifest& m, const std::filesystem::path& path) {
  json records = json::array();
  for (const auto& r : m.records) records.push_back(record_to_json(r));
  json j = {{"version", 1},
            {"seed", m.seed},
            {"spec_hash", m.spec_hash},
            {"spec", spec_to_json(m.spec)},
            {"vocabulary", m.vocabulary_path},
            {"descriptions", m.descriptions_path},
            {"records", records}};
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(1) << "\n";
  if (!out) throw IoError("failed writing " + path.string());
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  DatasetManifest m;
  m.root = path.parent_path();
  try {
    const json j = json::parse(in);
    if (j.at("version").get<int>() != 1) throw ValidationError("unsupported manifest version");
    m.seed = j.at("seed").get<std::uint64_t>();
    m.spec_hash = j.at("spec_hash").get<std::uint64_t>();
    m.spec = spec_from_json(j.at("spec"));
    m.vocabulary_path = j.at("vocabulary").get<std::string>();
    m.descriptions_path = j.at("descriptions").get<std::string>();
    for (const auto& r : j.at("records")) m.records.push_back(record_from_json(r));
  } catch (const json::exception& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
  if (m.spec.fingerprint() != m.spec_hash) throw ValidationError(path.string() + ": spec hash mismatch");
  std::set<std::string> ids;
  auto require = [&](const std::string& rel) {
    if (!std::filesystem::exists(m.root / rel))
      throw ValidationError(path.string() + ": referenced file " + (m.root / rel).string() + " does not exist");
  };
  require(m.vocabulary_path);
  require(m.descriptions_path);
  for (const auto& r : m.records) {
    if (!ids.insert(r.bag_id).second) throw ValidationError(path.string() + ": duplicate bag id '" + r.bag_id + "'");
    m.spec.class_index(r.class_name);
    require(r.features_path);
    require(r.report_path);
  }
  return m;
}

Vocabulary load_vocabulary(const DatasetManifest& m) { return Vocabulary::load(m.root / m.vocabulary_path); }

std::vector<BagData> load_split(const DatasetManifest& m, Split s) {
  std::map<std::string, FineGrainedDescription> descriptions;
  for (auto& d : read_descriptions(m.root / m.descriptions_path)) descriptions.emplace(d.report_id, d.description);
  std::vector<BagData> out;
  for (const BagRecord* r : m.split(s)) {
    auto it = descriptions.find(r->bag_id);
    if (it == descriptions.end()) throw ValidationError("no standardized description for bag '" + r->bag_id + "'");
    Tensor f = read_feature_file(m.root / r->features_path);
    if (f.cols() != m.spec.dim || f.rows() != r->n_instances)
      throw ValidationError("feature file for '" + r->bag_id + "' disagrees with the manifest");
    out.push_back({r->bag_id, m.spec.class_index(r->class_name), it->second, std::move(f)});
  }
  return out;
}

}  // namespace five
