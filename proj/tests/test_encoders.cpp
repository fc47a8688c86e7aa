#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "five/error.hpp"
#include "five/text_encoder.hpp"

namespace five {
namespace {

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("five_test_encoders_" + name);
}

Tensor naive_matmul(const Tensor& a, const Tensor& b) {
  Tensor out = Tensor::zeros({a.rows(), b.cols()});
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) acc += a.at(i, k) * b.at(k, j);
      out.at(i, j) = acc;
    }
  return out;
}

TEST(Tokenizer, LowercasesAndSplitsOnPunctuation) {
  EXPECT_EQ(tokenize_words("Margins: R0, clear-of disease."),
            (std::vector<std::string>{"margins", "r0", "clear", "of", "disease"}));
  EXPECT_TRUE(tokenize_words(" ;.,").empty());
}

TEST(Vocabulary, FirstSeenOrderWithReservedOov) {
  const Vocabulary v = Vocabulary::build({"b a", "a c"});
  ASSERT_EQ(v.size(), 4u);
  EXPECT_EQ(v.token(0), "<oov>");
  EXPECT_EQ(v.id("b"), 1u);
  EXPECT_EQ(v.id("a"), 2u);
  EXPECT_EQ(v.id("c"), 3u);
  EXPECT_EQ(v.id("zzz"), Vocabulary::kOov);
  EXPECT_EQ(tokenize(v, "C zzz B"), (std::vector<std::size_t>{3, 0, 1}));
}

TEST(Vocabulary, SaveLoadRoundTrip) {
  const Vocabulary v = Vocabulary::build({"lesion differentiation is poorly differentiated"});
  const auto path = temp_path("vocab.txt");
  v.save(path);
  EXPECT_EQ(Vocabulary::load(path), v);
  std::filesystem::remove(path);
}

TEST(Vocabulary, LoadRejectsBadFiles) {
  const auto path = temp_path("bad_vocab.txt");
  {
    std::ofstream(path) << "first\nsecond\n";
  }
  EXPECT_THROW(Vocabulary::load(path), ValidationError);
  {
    std::ofstream(path) << "<oov>\na\na\n";
  }
  EXPECT_THROW(Vocabulary::load(path), ValidationError);
  std::filesystem::remove(path);
  EXPECT_THROW(Vocabulary::load(path), IoError);
}

TEST(TextEncoderConfig, Validation) {
  TextEncoderConfig c;
  c.rank = 0;
  EXPECT_THROW(c.validate(), ValidationError);
  c.rank = c.dim + 1;
  EXPECT_THROW(c.validate(), ValidationError);
  c = TextEncoderConfig{};
  c.alpha = 0.0;
  EXPECT_THROW(c.validate(), ValidationError);
}

class EncoderFixture : public ::testing::Test {
 protected:
  void SetUp() override {
    config.dim = 6;
    config.rank = 2;
    config.alpha = 3.0;
    encoder.emplace(Vocabulary::build({"alpha beta gamma", "delta"}), config);
    Rng rng(12);
    encoder->init_params(params, rng);
  }
  TextEncoderConfig config;
  std::optional<TextEncoder> encoder;
  ParamStore params;
};

TEST_F(EncoderFixture, FreshAdapterEqualsBaseEncoderBitForBit) {
  const Tensor& emb = params.value("text.embedding");
  const Tensor& w0 = params.value("text.w0");
  const Tensor out = encoder->encode_values(params, {"beta"});
  const Tensor row = emb.slice_rows(2, 3);
  EXPECT_EQ(out, naive_matmul(row, w0));
  EXPECT_FALSE(params.get("text.w0").requires_grad);
}

TEST_F(EncoderFixture, LoraScaleIsAlphaOverRank) {
  Rng rng(3);
  std::vector<double> b(6 * 2);
  for (double& x : b) x = rng.normal();
  params.set_value("text.lora_b", Tensor::matrix(6, 2, b));
  const Tensor delta = naive_matmul(params.value("text.lora_b"), params.value("text.lora_a"));
  Tape tape;
  const Tensor proj = encoder->projection(tape, params).value();
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t j = 0; j < 6; ++j)
      EXPECT_NEAR(proj.at(i, j), params.value("text.w0").at(i, j) + 1.5 * delta.at(i, j), 1e-14);
}

TEST_F(EncoderFixture, MeanOfTokenEmbeddingsIncludingOov) {
  const Tensor& emb = params.value("text.embedding");
  const Tensor out = encoder->encode_values(params, {"alpha unseen delta"});
  std::vector<double> mean(6, 0.0);
  for (std::size_t id : {1u, 0u, 4u})
    for (std::size_t d = 0; d < 6; ++d) mean[d] += emb.at(id, d) / 3.0;
  const Tensor expected = naive_matmul(Tensor::row(mean), params.value("text.w0"));
  for (std::size_t d = 0; d < 6; ++d) EXPECT_NEAR(out[d], expected[d], 1e-13);
}

TEST_F(EncoderFixture, WordOrderAndCaseDoNotMatter) {
  EXPECT_EQ(encoder->encode_values(params, {"alpha beta"}), encoder->encode_values(params, {"alpha beta"}));
  const Tensor a = encoder->encode_values(params, {"alpha beta"});
  const Tensor b = encoder->encode_values(params, {"Beta ALPHA"});
  for (std::size_t d = 0; d < 6; ++d) EXPECT_NEAR(a[d], b[d], 1e-15);
}

TEST_F(EncoderFixture, EmptyTextIsDegenerate) {
  EXPECT_THROW(encoder->encode_values(params, {"..."}), DegenerateError);
}

TEST_F(EncoderFixture, PromptIndicesAreChecked) {
  Tape tape;
  EXPECT_THROW(encoder->encode_prompts(tape, params, default_template(), {6}), ValidationError);
}

TEST_F(EncoderFixture, GradientsReachAdapterButNotBase) {
  Rng rng(9);
  std::vector<double> b(12);
  for (double& x : b) x = rng.normal();
  params.set_value("text.lora_b", Tensor::matrix(6, 2, b));
  params.zero_grad();
  Tape tape;
  Var out = encoder->encode(tape, params, {"alpha gamma", "delta"});
  tape.backward(ops::sum(ops::mul(out, out)));
  auto nonzero = [](const Tensor& g) {
    for (double x : g.data())
      if (x != 0.0) return true;
    return false;
  };
  EXPECT_TRUE(nonzero(params.get("text.lora_a").grad));
  EXPECT_TRUE(nonzero(params.get("text.lora_b").grad));
  EXPECT_TRUE(nonzero(params.get("text.embedding").grad));
  EXPECT_FALSE(nonzero(params.get("text.w0").grad));
}

}  // namespace
}  // namespace five
