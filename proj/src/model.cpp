#include "five/model.hpp"

#include "five/error.hpp"

namespace five {

FiveModel::FiveModel(TrainConfig config, Vocabulary vocab, PromptTemplate tmpl)
    : config_(std::move(config)),
      template_(std::move(tmpl)),
      text_(std::move(vocab), TextEncoderConfig{config_.dim, config_.lora_rank, config_.lora_alpha}) {
  config_.validate();
}

void FiveModel::init(std::uint64_t seed) {
  params_ = ParamStore();
  Rng text_rng = Rng::substream(seed, hash_string("text"));
  text_.init_params(params_, text_rng);
  Rng agg_rng = Rng::substream(seed, hash_string("aggregator"));
  init_aggregator_params(params_, AggregatorConfig{config_.dim, config_.learnable_prompts, config_.init_scale},
                         agg_rng);
  init_temperature(params_, temperature_config());
  apply_freeze_flags();
}

void FiveModel::apply_freeze_flags() {
  for (auto& [name, p] : params_) {
    bool frozen = name == "text.w0";
    if (name == "text.embedding") frozen = config_.freeze_embedding;
    if (name == "text.lora_a" || name == "text.lora_b") frozen = config_.freeze_adapters;
    if (name.rfind("agg.", 0) == 0) frozen = config_.freeze_aggregator;
    if (name == "prompts.learnable") frozen = config_.freeze_prompts;
    if (name == "objective.log_tau") frozen = config_.freeze_temperature;
    p.requires_grad = !frozen;
  }
}

const std::vector<std::size_t>& all_prompt_indices() {
  static const std::vector<std::size_t> all = {0, 1, 2, 3, 4, 5};
  return all;
}

Var FiveModel::bag_feature(Tape& tape, const Tensor& instances, const Mask& mask,
                           const std::vector<std::size_t>& prompt_indices) {
  std::optional<Var> manual;
  if (!prompt_indices.empty()) manual = text_.encode_prompts(tape, params_, template_, prompt_indices);
  std::optional<Var> prompts;
  if (manual || params_.contains("prompts.learnable")) prompts = prompt_set(tape, params_, manual);
  return aggregate(tape, params_, tape.constant(instances), mask, prompts);
}

Tensor FiveModel::bag_feature_value(const Tensor& instances) {
  Tape tape;
  return bag_feature(tape, instances, Mask(instances.rows(), true), all_prompt_indices()).value();
}

Var FiveModel::tau(Tape& tape) { return temperature(tape, params_, temperature_config()); }

double FiveModel::tau_value() const { return temperature_value(params_, temperature_config()); }

}  // namespace five
