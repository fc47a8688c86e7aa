#include "five/text_encoder.hpp"

#include <cctype>
#include <cmath>
#include <fstream>

#include "five/error.hpp"

namespace five {

std::vector<std::string> tokenize_words(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    if (std::isalnum(static_cast<unsigned char>(c))) {
      cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

Vocabulary::Vocabulary() { add(std::string(kOovToken)); }

void Vocabulary::add(const std::string& token) {
  if (index_.count(token)) return;
  index_.emplace(token, tokens_.size());
  tokens_.push_back(token);
}

Vocabulary Vocabulary::build(const std::vector<std::string>& texts) {
  Vocabulary v;
  for (const auto& t : texts)
    for (const auto& w : tokenize_words(t)) v.add(w);
  return v;
}

std::size_t Vocabulary::id(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? kOov : it->second;
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& t : tokens_) out << t << "\n";
  if (!out) throw IoError("failed writing " + path.string());
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  Vocabulary v;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    if (lineno == 0 && line != kOovToken)
      throw ValidationError(path.string() + ": line 0 must be the reserved token " + std::string(kOovToken));
    if (lineno > 0) {
      if (line.empty() || v.contains(line))
        throw ValidationError(path.string() + ":" + std::to_string(lineno + 1) + ": empty or duplicate token");
      v.add(line);
    }
    ++lineno;
  }
  if (lineno == 0) throw ValidationError(path.string() + ": empty vocabulary file");
  return v;
}

std::vector<std::size_t> tokenize(const Vocabulary& vocab, std::string_view text) {
  std::vector<std::size_t> ids;
  for (const auto& w : tokenize_words(text)) ids.push_back(vocab.id(w));
  return ids;
}

void TextEncoderConfig::validate() const {
  if (dim < 1) throw ValidationError("text encoder dim must be positive");
  if (rank < 1 || rank > dim) throw ValidationError("LoRA rank must be in [1, dim]");
  if (!(alpha > 0.0)) throw ValidationError("LoRA alpha must be positive");
}

TextEncoder::TextEncoder(Vocabulary vocab, TextEncoderConfig config)
    : vocab_(std::move(vocab)), config_(config) {
  config_.validate();
}

void TextEncoder::init_params(ParamStore& params, Rng& rng) const {
  const std::size_t d = config_.dim;
  const std::size_t r = config_.rank;
  auto gaussian = [&rng](std::size_t rows, std::size_t cols, double stddev) {
    std::vector<double> v(rows * cols);
    for (double& x : v) x = stddev * rng.normal();
    return Tensor::matrix(rows, cols, std::move(v));
  };
  const double s = 1.0 / std::sqrt(static_cast<double>(d));
  params.add("text.embedding", gaussian(vocab_.size(), d, 1.0));
  params.add("text.w0", gaussian(d, d, s), /*requires_grad=*/false);
  params.add("text.lora_a", gaussian(r, d, s));
  params.add("text.lora_b", Tensor::zeros({d, r}));
}

Var TextEncoder::projection(Tape& tape, ParamStore& params) const {
  Var w0 = tape.param(params, "text.w0");
  Var a = tape.param(params, "text.lora_a");
  Var b = tape.param(params, "text.lora_b");
  const double scale = config_.alpha / static_cast<double>(config_.rank);
  return ops::add(w0, ops::scale(ops::matmul(b, a), scale));
}

Var TextEncoder::encode(Tape& tape, ParamStore& params, const std::vector<std::string>& texts) const {
  std::vector<std::vector<std::size_t>> ids;
  ids.reserve(texts.size());
  for (const auto& t : texts) {
    ids.push_back(tokenize(vocab_, t));
    if (ids.back().empty()) throw DegenerateError("encode_text: text \"" + t + "\" has no tokens");
  }
  Var pooled = ops::embedding_mean(tape.param(params, "text.embedding"), ids);
  return ops::matmul(pooled, projection(tape, params));
}

Var TextEncoder::encode_prompts(Tape& tape, ParamStore& params, const PromptTemplate& tmpl,
                                const std::vector<std::size_t>& indices) const {
  std::vector<std::string> texts;
  for (std::size_t i : indices) {
    if (i >= kFieldCount) throw ValidationError("prompt index " + std::to_string(i) + " out of range");
    texts.push_back(tmpl.questions[i]);
  }
  return encode(tape, params, texts);
}

Tensor TextEncoder::encode_values(ParamStore& params, const std::vector<std::string>& texts) const {
  Tape tape;
  return encode(tape, params, texts).value();
}

}  // namespace five
