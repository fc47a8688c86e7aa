#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "five/guidance.hpp"
#include "five/sampler.hpp"
#include "json.hpp"

namespace five {

struct TrainConfig {
  std::string preset = "desk";
  std::size_t dim = 32;
  std::size_t learnable_prompts = 4;
  std::size_t lora_rank = 8;
  double lora_alpha = 32.0;
  double init_scale = 1.0;
  double tau_init = 0.07;
  double tau_min = 0.01;
  SampleConfig sampler;
  SamplePolicy guidance;
  bool sample_instances = true;
  // Bags per optimizer step is batch_size * accumulation_steps; the
  // contrastive loss is taken over all of them at once.
  std::size_t batch_size = 16;
  std::size_t accumulation_steps = 1;
  std::size_t epochs = 30;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-8;
  double weight_decay = 1e-4;
  double warmup_ratio = 0.1;
  std::uint64_t seed = 0;
  bool freeze_embedding = false;
  bool freeze_adapters = false;
  bool freeze_aggregator = false;
  bool freeze_prompts = false;
  bool freeze_temperature = false;
  // Validation zero-shot every this many epochs (0 disables selection).
  std::size_t eval_every = 1;

  void validate() const;
  std::size_t contrastive_batch() const { return batch_size * accumulation_steps; }
};

TrainConfig desk_preset();
TrainConfig full_preset();
TrainConfig preset_by_name(const std::string& name);

// Field names match TrainConfig members; sampler and guidance are nested
// objects. Unknown keys are rejected; missing keys keep the preset value
// named by "preset" (desk when absent).
nlohmann::json config_to_json(const TrainConfig& config);
TrainConfig config_from_json(const nlohmann::json& j);
TrainConfig load_config(const std::filesystem::path& path);
void save_config(const TrainConfig& config, const std::filesystem::path& path);

// Canonical JSON text of the config.
std::string config_fingerprint(const TrainConfig& config);

}  // namespace five
