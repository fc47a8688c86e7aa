#pragma once

#include <string>
#include <vector>

#include "five/dataset.hpp"
#include "five/metrics.hpp"
#include "five/model.hpp"

namespace five {

// N x D bag features using every instance and all six questions. The
// parallel path splits bags across OpenMP threads (one tape per bag) and
// gives the same bits as the serial path.
Tensor bag_features(FiveModel& model, const std::vector<BagData>& bags, bool parallel = true);

// C x D encoded class descriptions.
Tensor class_embeddings(FiveModel& model, const std::vector<std::string>& class_texts);

// Cosine/temperature softmax of precomputed features against class
// embeddings. Throws ValidationError for labels outside the class range.
EvalReport eval_with_embeddings(const Tensor& features, const std::vector<std::size_t>& labels,
                                const Tensor& classes, double tau, const std::string& fingerprint = "");

EvalReport eval_zeroshot(FiveModel& model, const std::vector<BagData>& bags,
                         const std::vector<std::string>& class_texts, bool parallel = true);

struct FewShotConfig {
  std::size_t shots = 1;
  std::size_t steps = 40;
  double lr = 1e-3;
  double weight_decay = 0.0;
  std::vector<std::string> tunables = {"agg.fuse", "prompts.learnable", "text.lora_a", "text.lora_b"};
  std::uint64_t seed = 0;
};

// Fine-tunes a copy of the model on `shots` bags per class drawn from
// `pool` (cross-entropy over class-description logits, full batch), then
// evaluates zero-shot style on `test`. shots == 0 is plain zero-shot.
EvalReport eval_fewshot(const FiveModel& pretrained, const std::vector<BagData>& pool,
                        const std::vector<BagData>& test, const std::vector<std::string>& class_texts,
                        const FewShotConfig& config);

// The support set eval_fewshot would use.
std::vector<BagData> select_shots(const std::vector<BagData>& pool, std::size_t num_classes, std::size_t shots,
                                  std::uint64_t seed);

}  // namespace five
