#include "five/synth.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>

#include "five/error.hpp"

namespace five {
namespace {

using json = nlohmann::json;

enum WorldTag : std::uint64_t { kPrototype = 1, kAttribute, kTumor, kBackground, kSubtype };

Tensor unit_vector(std::size_t dim, Rng rng, double length) {
  std::vector<double> v(dim);
  double norm = 0.0;
  for (double& x : v) {
    x = rng.normal();
    norm += x * x;
  }
  norm = std::sqrt(norm);
  for (double& x : v) x *= length / norm;
  return Tensor::row(std::move(v));
}

void add_scaled(std::vector<double>& acc, const Tensor& t, double s = 1.0) {
  for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += s * t[i];
}

// Distribution helpers for the preset specs.
std::vector<double> dist(std::size_t field, std::initializer_list<std::pair<std::uint8_t, double>> entries) {
  std::vector<double> p(verdict_count(field), 0.0);
  for (auto [code, w] : entries) p.at(code) = w;
  return p;
}

bool has_word(const std::string& text) {
  return std::any_of(text.begin(), text.end(), [](char ch) { return std::isalnum(static_cast<unsigned char>(ch)); });
}

constexpr std::uint8_t kUnknown = 0;
constexpr auto c = [](auto e) { return static_cast<std::uint8_t>(e); };

}  // namespace

void SynthSpec::validate() const {
  if (dim < 2) throw ValidationError("synth dim must be at least 2");
  if (classes.size() < 2) throw ValidationError("synth spec needs at least two classes");
  if (!(diagnostic_fraction > 0.0 && diagnostic_fraction <= 1.0))
    throw ValidationError("diagnostic_fraction must be in (0, 1]");
  if (noise < 0.0 || tumor_scale < 0.0 || class_scale < 0.0 || subtype_scale < 0.0 || attribute_scale < 0.0 ||
      background_shift < 0.0)
    throw ValidationError("synth scales must be non-negative");
  if (min_instances < 1 || max_instances < min_instances)
    throw ValidationError("instance count range must satisfy 1 <= min <= max");
  for (std::size_t i = 0; i < classes.size(); ++i) {
    const ClassSpec& cs = classes[i];
    if (cs.name.empty()) throw ValidationError("class " + std::to_string(i) + " has no name");
    if (!has_word(cs.description))
      throw ValidationError("class '" + cs.name + "' has an empty description");
    for (std::size_t j = 0; j < i; ++j)
      if (classes[j].name == cs.name) throw ValidationError("duplicate class name '" + cs.name + "'");
    for (std::size_t f = 0; f < kFieldCount; ++f) {
      const auto& p = cs.attribute_probs[f];
      if (p.size() != verdict_count(f))
        throw ValidationError("class '" + cs.name + "' field " + std::string(field_name(f)) +
                              ": distribution needs " + std::to_string(verdict_count(f)) + " entries");
      double total = 0.0;
      for (double w : p) {
        if (!(w >= 0.0)) throw ValidationError("class '" + cs.name + "': negative attribute probability");
        total += w;
      }
      if (std::abs(total - 1.0) > 1e-9)
        throw ValidationError("class '" + cs.name + "' field " + std::string(field_name(f)) +
                              ": probabilities sum to " + std::to_string(total));
    }
  }
  const FeatureWorld world(*this);
  for (std::size_t i = 0; i < classes.size(); ++i)
    for (std::size_t j = 0; j < i; ++j) {
      double diff = 0.0;
      for (std::size_t k = 0; k < dim; ++k) diff = std::max(diff, std::abs(world.class_mean(i)[k] - world.class_mean(j)[k]));
      if (diff < 1e-9)
        throw ValidationError("classes '" + classes[i].name + "' and '" + classes[j].name + "' have identical means");
    }
}

std::size_t SynthSpec::class_index(const std::string& name) const {
  for (std::size_t i = 0; i < classes.size(); ++i)
    if (classes[i].name == name) return i;
  throw ValidationError("unknown class '" + name + "'");
}

std::vector<std::string> SynthSpec::class_texts() const {
  std::vector<std::string> out;
  for (const auto& cs : classes) out.push_back(cs.description);
  return out;
}

std::uint64_t SynthSpec::fingerprint() const { return hash_string(spec_to_json(*this).dump()); }

json spec_to_json(const SynthSpec& spec) {
  json classes = json::array();
  for (const auto& cs : spec.classes) {
    json probs = json::object();
    for (std::size_t f = 0; f < kFieldCount; ++f) probs[std::string(field_name(f))] = cs.attribute_probs[f];
    classes.push_back({{"name", cs.name},
                       {"description", cs.description},
                       {"prototype", cs.prototype},
                       {"attribute_probs", probs}});
  }
  return {{"dim", spec.dim},
          {"classes", classes},
          {"diagnostic_fraction", spec.diagnostic_fraction},
          {"noise", spec.noise},
          {"tumor_scale", spec.tumor_scale},
          {"class_scale", spec.class_scale},
          {"subtype_scale", spec.subtype_scale},
          {"attribute_scale", spec.attribute_scale},
          {"background_shift", spec.background_shift},
          {"min_instances", spec.min_instances},
          {"max_instances", spec.max_instances},
          {"world_seed", spec.world_seed}};
}

SynthSpec spec_from_json(const json& j) {
  SynthSpec s;
  try {
    s.dim = j.at("dim").get<std::size_t>();
    for (const auto& cj : j.at("classes")) {
      ClassSpec cs;
      cs.name = cj.at("name").get<std::string>();
      cs.description = cj.at("description").get<std::string>();
      cs.prototype = cj.at("prototype").get<std::size_t>();
      for (std::size_t f = 0; f < kFieldCount; ++f)
        cs.attribute_probs[f] = cj.at("attribute_probs").at(std::string(field_name(f))).get<std::vector<double>>();
      s.classes.push_back(std::move(cs));
    }
    s.diagnostic_fraction = j.at("diagnostic_fraction").get<double>();
    s.noise = j.at("noise").get<double>();
    s.tumor_scale = j.at("tumor_scale").get<double>();
    s.class_scale = j.at("class_scale").get<double>();
    s.subtype_scale = j.at("subtype_scale").get<double>();
    s.attribute_scale = j.at("attribute_scale").get<double>();
    s.background_shift = j.at("background_shift").get<double>();
    s.min_instances = j.at("min_instances").get<std::size_t>();
    s.max_instances = j.at("max_instances").get<std::size_t>();
    s.world_seed = j.at("world_seed").get<std::uint64_t>();
  } catch (const json::exception& e) {
    throw ValidationError(std::string("synth spec: ") + e.what());
  }
  s.validate();
  return s;
}

FineGrainedDescription modal_description(const ClassSpec& cs) {
  FineGrainedDescription d;
  for (std::size_t f = 0; f < kFieldCount; ++f) {
    const auto& p = cs.attribute_probs[f];
    std::uint8_t best = kUnknown;
    for (std::size_t k = 1; k < p.size(); ++k)
      if (p[k] > 0.0 && (best == kUnknown || p[k] > p[best])) best = static_cast<std::uint8_t>(k);
    d.set_verdict(f, best);
  }
  return d;
}

SynthSpec coarse_spec() {
  using D = Differentiation;
  using P = Presence;
  using M = Margin;
  SynthSpec s;
  ClassSpec a;
  a.name = "glandular";
  a.prototype = 0;
  a.attribute_probs = {
      dist(0, {{c(D::Well), 0.45}, {c(D::Moderate), 0.45}, {kUnknown, 0.10}}),
      dist(1, {{c(P::Absent), 0.80}, {kUnknown, 0.20}}),
      dist(2, {{c(P::Absent), 0.80}, {c(P::Present), 0.05}, {kUnknown, 0.15}}),
      dist(3, {{c(P::Absent), 0.80}, {kUnknown, 0.20}}),
      dist(4, {{c(P::Absent), 0.60}, {kUnknown, 0.40}}),
      dist(5, {{c(M::Clear), 0.70}, {c(M::Involved), 0.15}, {kUnknown, 0.15}}),
  };
  ClassSpec b;
  b.name = "solid";
  b.prototype = 1;
  b.attribute_probs = {
      dist(0, {{c(D::Poor), 0.60}, {c(D::ModerateToPoor), 0.30}, {kUnknown, 0.10}}),
      dist(1, {{c(P::Present), 0.75}, {kUnknown, 0.25}}),
      dist(2, {{c(P::Present), 0.75}, {kUnknown, 0.25}}),
      dist(3, {{c(P::Present), 0.60}, {c(P::Absent), 0.20}, {kUnknown, 0.20}}),
      dist(4, {{c(P::Present), 0.50}, {kUnknown, 0.50}}),
      dist(5, {{c(M::Involved), 0.60}, {c(M::Clear), 0.25}, {kUnknown, 0.15}}),
  };
  s.classes = {a, b};
  for (auto& cs : s.classes) cs.description = render_description(modal_description(cs));
  return s;
}

SynthSpec subtype_spec() {
  using D = Differentiation;
  using P = Presence;
  using M = Margin;
  SynthSpec s = coarse_spec();
  s.subtype_scale = 0.5;
  s.classes.clear();

  auto near = [](std::size_t field, std::uint8_t code) { return dist(field, {{code, 0.9}, {kUnknown, 0.1}}); };
  for (D diff : {D::Well, D::Moderate})
    for (M margin : {M::Clear, M::Involved}) {
      ClassSpec cs;
      cs.name = std::string("glandular_") + (diff == D::Well ? "well" : "moderate") + "_" +
                (margin == M::Clear ? "clear" : "involved");
      cs.prototype = 0;
      cs.attribute_probs = {near(0, c(diff)),         near(1, c(P::Absent)), near(2, c(P::Absent)),
                            near(3, c(P::Absent)),    near(4, c(P::Absent)), near(5, c(margin))};
      s.classes.push_back(std::move(cs));
    }
  for (D diff : {D::Poor, D::ModerateToPoor})
    for (P pleural : {P::Present, P::Absent}) {
      ClassSpec cs;
      cs.name = std::string("solid_") + (diff == D::Poor ? "poor" : "moderate_to_poor") + "_" +
                (pleural == P::Present ? "pleural" : "no_pleural");
      cs.prototype = 1;
      cs.attribute_probs = {near(0, c(diff)),  near(1, c(P::Present)), near(2, c(P::Present)),
                            near(3, c(pleural)), near(4, c(P::Present)), near(5, c(M::Involved))};
      s.classes.push_back(std::move(cs));
    }
  for (auto& cs : s.classes) cs.description = render_description(modal_description(cs));
  return s;
}

FeatureWorld::FeatureWorld(const SynthSpec& spec) : dim_(spec.dim) {
  background_ = unit_vector(dim_, Rng::substream(spec.world_seed, kBackground), 1.0);
  tumor_ = unit_vector(dim_, Rng::substream(spec.world_seed, kTumor), spec.tumor_scale);
  for (std::size_t i = 0; i < spec.classes.size(); ++i) {
    std::vector<double> mean(dim_, 0.0);
    add_scaled(mean, unit_vector(dim_, Rng::substream(spec.world_seed, kPrototype, spec.classes[i].prototype),
                                 spec.class_scale));
    if (spec.subtype_scale > 0.0)
      add_scaled(mean, unit_vector(dim_, Rng::substream(spec.world_seed, kSubtype, hash_string(spec.classes[i].name)),
                                   spec.subtype_scale));
    class_means_.push_back(Tensor::row(std::move(mean)));
  }
  for (std::size_t f = 0; f < kFieldCount; ++f) {
    attribute_offsets_[f].push_back(Tensor::zeros({1, dim_}));
    for (std::uint8_t code = 1; code < verdict_count(f); ++code)
      attribute_offsets_[f].push_back(
          unit_vector(dim_, Rng::substream(spec.world_seed, kAttribute, f, code), spec.attribute_scale));
  }
}

const Tensor& FeatureWorld::attribute_offset(std::size_t field, std::uint8_t code) const {
  if (field >= kFieldCount || code >= attribute_offsets_[field].size())
    throw ValidationError("attribute offset index out of range");
  return attribute_offsets_[field][code];
}

Tensor FeatureWorld::diagnostic_mean(std::size_t c, const FineGrainedDescription& attributes) const {
  std::vector<double> v(dim_, 0.0);
  add_scaled(v, background_);
  add_scaled(v, tumor_);
  add_scaled(v, class_means_.at(c));
  for (std::size_t f = 0; f < kFieldCount; ++f) add_scaled(v, attribute_offset(f, attributes.verdict(f)));
  return Tensor::row(std::move(v));
}

FineGrainedDescription draw_attributes(const SynthSpec& spec, std::size_t c, Rng& rng) {
  FineGrainedDescription d;
  for (std::size_t f = 0; f < kFieldCount; ++f)
    d.set_verdict(f, static_cast<std::uint8_t>(rng.categorical(spec.classes.at(c).attribute_probs[f])));
  return d;
}

GeneratedBag generate_bag_features(const SynthSpec& spec, const FeatureWorld& world, std::size_t c,
                                   const FineGrainedDescription& attributes, Rng& rng) {
  if (c >= spec.classes.size()) throw ValidationError("class index " + std::to_string(c) + " not in spec");
  const std::size_t d = spec.dim;
  const std::size_t n = spec.min_instances + rng.uniform_index(spec.max_instances - spec.min_instances + 1);
  const auto n_diag = std::min<std::size_t>(
      n, static_cast<std::size_t>(std::ceil(spec.diagnostic_fraction * static_cast<double>(n) - 1e-12)));

  GeneratedBag bag;
  bag.diagnostic.assign(n, false);
  std::fill(bag.diagnostic.begin(), bag.diagnostic.begin() + static_cast<std::ptrdiff_t>(n_diag), true);
  rng.shuffle(bag.diagnostic);
  bag.diagnostic_count = n_diag;

  std::vector<double> shift(d);
  for (double& x : shift) x = spec.background_shift * rng.normal();
  const Tensor diag_mean = world.diagnostic_mean(c, attributes);

  std::vector<double> data(n * d);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < d; ++k) {
      const double base = bag.diagnostic[i] ? diag_mean[k] : world.background()[k] + shift[k];
      data[i * d + k] = spec.noise == 0.0 ? base : base + spec.noise * rng.normal();
    }
  }
  bag.features = Tensor::matrix(n, d, std::move(data));
  return bag;
}

Tensor round_to_f32(const Tensor& t) {
  std::vector<double> v(t.data().begin(), t.data().end());
  for (double& x : v) x = static_cast<double>(static_cast<float>(x));
  return Tensor(t.shape(), std::move(v));
}

namespace {
void put_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}
std::uint32_t get_u32(std::istream& in, const std::filesystem::path& path) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) throw ValidationError(path.string() + ": truncated feature file");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}
constexpr std::uint32_t kFeatureVersion = 1;
}  // namespace

void write_feature_file(const std::filesystem::path& path, const Tensor& features) {
  if (features.rank() != 2) throw ShapeError("feature file needs a matrix, got " + to_string(features.shape()));
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write("FIVB", 4);
  put_u32(out, kFeatureVersion);
  put_u32(out, static_cast<std::uint32_t>(features.rows()));
  put_u32(out, static_cast<std::uint32_t>(features.cols()));
  for (double x : features.data()) {
    std::uint32_t bits;
    const float f = static_cast<float>(x);
    std::memcpy(&bits, &f, 4);
    put_u32(out, bits);
  }
  if (!out) throw IoError("failed writing " + path.string());
}

Tensor read_feature_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, "FIVB", 4) != 0)
    throw ValidationError(path.string() + ": not a feature file");
  const std::uint32_t version = get_u32(in, path);
  if (version != kFeatureVersion)
    throw ValidationError(path.string() + ": unsupported feature file version " + std::to_string(version));
  const std::uint32_t n = get_u32(in, path);
  const std::uint32_t d = get_u32(in, path);
  if (n == 0 || d == 0) throw ValidationError(path.string() + ": empty feature matrix");
  std::vector<double> data(static_cast<std::size_t>(n) * d);
  for (double& x : data) {
    const std::uint32_t bits = get_u32(in, path);
    float f;
    std::memcpy(&f, &bits, 4);
    x = f;
  }
  try {
    return Tensor::matrix(n, d, std::move(data));
  } catch (const Error& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

Tensor FileFeatureSource::features(const std::string& bag_id) const {
  auto it = files_.find(bag_id);
  if (it == files_.end()) throw ValidationError("no feature file for bag '" + bag_id + "'");
  Tensor t = read_feature_file(it->second);
  if (t.cols() != dim_)
    throw ValidationError(it->second.string() + ": feature dimension " + std::to_string(t.cols()) + ", expected " +
                          std::to_string(dim_));
  return t;
}

Rng bag_feature_stream(std::uint64_t seed, const std::string& bag_id) {
  return Rng::substream(seed, hash_string("features"), hash_string(bag_id));
}

GeneratedFeatureSource::GeneratedFeatureSource(SynthSpec spec, std::uint64_t seed, std::map<std::string, Entry> bags)
    : spec_(std::move(spec)), world_(spec_), seed_(seed), bags_(std::move(bags)) {}

Tensor GeneratedFeatureSource::features(const std::string& bag_id) const {
  auto it = bags_.find(bag_id);
  if (it == bags_.end()) throw ValidationError("unknown bag '" + bag_id + "'");
  Rng rng = bag_feature_stream(seed_, bag_id);
  return round_to_f32(
      generate_bag_features(spec_, world_, it->second.class_index, it->second.attributes, rng).features);
}

}  // namespace five
