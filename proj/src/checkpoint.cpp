#include <bit>
#include <cstring>
#include <fstream>

#include "five/error.hpp"
#include "five/model.hpp"

namespace five {
namespace {

using json = nlohmann::json;

static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes a little-endian host");

constexpr std::uint32_t kCheckpointVersion = 1;

void put_u32(std::ostream& out, std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); }

std::uint32_t get_u32(std::istream& in) {
  std::uint32_t v;
  if (!in.read(reinterpret_cast<char*>(&v), 4)) throw ValidationError("truncated checkpoint");
  return v;
}

std::string get_bytes(std::istream& in, std::size_t n) {
  std::string s(n, '\0');
  if (n && !in.read(s.data(), static_cast<std::streamsize>(n))) throw ValidationError("truncated checkpoint");
  return s;
}

json template_to_json(const PromptTemplate& t) {
  json ex = json::array();
  for (const auto& e : t.examples) ex.push_back({{"report", e.report}, {"answer", e.answer}});
  return {{"version", t.version}, {"preamble", t.preamble}, {"questions", t.questions},
          {"hints", t.hints},     {"examples", ex},         {"report_line", t.report_line}};
}

PromptTemplate template_from_json(const json& j) {
  PromptTemplate t;
  t.version = j.at("version").get<std::string>();
  t.preamble = j.at("preamble").get<std::string>();
  t.questions = j.at("questions").get<std::array<std::string, kFieldCount>>();
  t.hints = j.at("hints").get<std::array<std::string, kFieldCount>>();
  for (const auto& e : j.at("examples"))
    t.examples.push_back({e.at("report").get<std::string>(), e.at("answer").get<std::string>()});
  t.report_line = j.at("report_line").get<std::string>();
  return t;
}

}  // namespace

void save_checkpoint(const FiveModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write("FIVC", 4);
  put_u32(out, kCheckpointVersion);
  put_u32(out, static_cast<std::uint32_t>(model.params().size()));
  for (const auto& [name, p] : model.params()) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_u32(out, static_cast<std::uint32_t>(p.value.rank()));
    for (std::size_t d : p.value.shape()) put_u32(out, static_cast<std::uint32_t>(d));
    out.write(reinterpret_cast<const char*>(p.value.data().data()),
              static_cast<std::streamsize>(p.value.size() * sizeof(double)));
  }
  std::vector<std::string> tokens;
  for (std::size_t i = 0; i < model.text().vocabulary().size(); ++i)
    tokens.push_back(model.text().vocabulary().token(i));
  const std::string meta =
      json{{"config", config_to_json(model.config())}, {"vocabulary", tokens}, {"template", template_to_json(model.prompts())}}
          .dump();
  put_u32(out, static_cast<std::uint32_t>(meta.size()));
  out.write(meta.data(), static_cast<std::streamsize>(meta.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

FiveModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    if (get_bytes(in, 4) != "FIVC") throw ValidationError("not a checkpoint");
    const std::uint32_t version = get_u32(in);
    if (version != kCheckpointVersion) throw ValidationError("unsupported checkpoint version " + std::to_string(version));
    const std::uint32_t count = get_u32(in);
    std::map<std::string, Tensor> arrays;
    for (std::uint32_t i = 0; i < count; ++i) {
      std::string name = get_bytes(in, get_u32(in));
      Shape shape(get_u32(in));
      for (auto& d : shape) d = get_u32(in);
      std::vector<double> data(shape_product(shape));
      if (!data.empty() &&
          !in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data.size() * sizeof(double))))
        throw ValidationError("truncated checkpoint");
      arrays.emplace(std::move(name), Tensor(std::move(shape), std::move(data)));
    }
    const json meta = json::parse(get_bytes(in, get_u32(in)));
    Vocabulary vocab;
    const auto tokens = meta.at("vocabulary").get<std::vector<std::string>>();
    if (tokens.empty() || tokens.front() != Vocabulary::kOovToken) throw ValidationError("checkpoint vocabulary lacks the OOV entry");
    std::vector<std::string> rest(tokens.begin() + 1, tokens.end());
    vocab = Vocabulary::build(rest);
    if (vocab.size() != tokens.size()) throw ValidationError("checkpoint vocabulary has duplicate tokens");
    FiveModel model(config_from_json(meta.at("config")), std::move(vocab), template_from_json(meta.at("template")));
    model.init(0);
    if (arrays.size() != model.params().size())
      throw ValidationError("checkpoint has " + std::to_string(arrays.size()) + " arrays, model expects " +
                            std::to_string(model.params().size()));
    for (auto& [name, value] : arrays) {
      if (!model.params().contains(name)) throw ValidationError("unexpected checkpoint array '" + name + "'");
      if (value.shape() != model.params().value(name).shape())
        throw ValidationError("checkpoint array '" + name + "' has shape " + to_string(value.shape()));
      model.params().set_value(name, std::move(value));
    }
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(path.string() + ": " + e.what());
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

}  // namespace five
