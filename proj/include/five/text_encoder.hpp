#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "five/param_store.hpp"
#include "five/report.hpp"
#include "five/rng.hpp"
#include "five/tape.hpp"

namespace five {

// Lowercased runs of letters and digits.
std::vector<std::string> tokenize_words(std::string_view text);

// Token ids; id 0 is reserved for out-of-vocabulary tokens.
class Vocabulary {
 public:
  static constexpr std::size_t kOov = 0;
  static constexpr std::string_view kOovToken = "<oov>";

  Vocabulary();
  // Tokens in first-seen order over the given texts.
  static Vocabulary build(const std::vector<std::string>& texts);

  std::size_t id(const std::string& token) const;
  const std::string& token(std::size_t id) const { return tokens_.at(id); }
  std::size_t size() const { return tokens_.size(); }
  bool contains(const std::string& token) const { return index_.count(token) != 0; }

  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

  bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

 private:
  void add(const std::string& token);

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::size_t> index_;
};

std::vector<std::size_t> tokenize(const Vocabulary& vocab, std::string_view text);

struct TextEncoderConfig {
  std::size_t dim = 32;
  std::size_t rank = 8;
  double alpha = 32.0;

  void validate() const;
};

// Mean of token embeddings times W0 + (alpha / rank) B A. W0 is frozen; B
// starts at zero so a fresh adapter leaves the base encoder unchanged.
// Parameters: text.embedding (V x D), text.w0 (D x D), text.lora_a (r x D),
// text.lora_b (D x r).
class TextEncoder {
 public:
  TextEncoder(Vocabulary vocab, TextEncoderConfig config);

  const Vocabulary& vocabulary() const { return vocab_; }
  const TextEncoderConfig& config() const { return config_; }

  void init_params(ParamStore& params, Rng& rng) const;

  // Effective D x D projection.
  Var projection(Tape& tape, ParamStore& params) const;
  // T x D, one row per text. Throws DegenerateError for a text with no tokens.
  Var encode(Tape& tape, ParamStore& params, const std::vector<std::string>& texts) const;
  // Questions at the given field indices, one row each.
  Var encode_prompts(Tape& tape, ParamStore& params, const PromptTemplate& tmpl,
                     const std::vector<std::size_t>& indices) const;

  // Forward only.
  Tensor encode_values(ParamStore& params, const std::vector<std::string>& texts) const;

 private:
  Vocabulary vocab_;
  TextEncoderConfig config_;
};

}  // namespace five
