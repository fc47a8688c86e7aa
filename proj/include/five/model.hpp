#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "five/aggregator.hpp"
#include "five/config.hpp"
#include "five/objective.hpp"
#include "five/param_store.hpp"
#include "five/report.hpp"
#include "five/tape.hpp"
#include "five/text_encoder.hpp"

namespace five {

// Text encoder, aggregator, prompts and temperature sharing one ParamStore.
class FiveModel {
 public:
  FiveModel(TrainConfig config, Vocabulary vocab, PromptTemplate tmpl = default_template());

  // Fresh parameters from a seed.
  void init(std::uint64_t seed);

  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }
  const TrainConfig& config() const { return config_; }
  const TextEncoder& text() const { return text_; }
  const PromptTemplate& prompts() const { return template_; }
  TemperatureConfig temperature_config() const { return {config_.tau_init, config_.tau_min}; }

  // Applies the freeze flags of the config (text.w0 is always frozen).
  void apply_freeze_flags();

  // 1 x D bag feature from an instance matrix with the questions at
  // `prompt_indices` as manual prompts.
  Var bag_feature(Tape& tape, const Tensor& instances, const Mask& mask,
                  const std::vector<std::size_t>& prompt_indices);
  // Forward only, every instance valid, all six questions.
  Tensor bag_feature_value(const Tensor& instances);

  Var tau(Tape& tape);
  double tau_value() const;

 private:
  TrainConfig config_;
  PromptTemplate template_;
  TextEncoder text_;
  ParamStore params_;
};

// Every prompt index in ascending order.
const std::vector<std::size_t>& all_prompt_indices();

// "FIVC", u32 version, u32 count, then per array: u32 name length, name,
// u32 rank, u32 dims, f64 data (little endian); then u32 length and a JSON
// record with the config, vocabulary and prompt template.
void save_checkpoint(const FiveModel& model, const std::filesystem::path& path);
FiveModel load_checkpoint(const std::filesystem::path& path);

}  // namespace five
