#include "five/config.hpp"

#include <fstream>
#include <set>

#include "five/error.hpp"

namespace five {
namespace {

using json = nlohmann::json;

template <typename T>
void read_field(const json& j, const char* key, T& out, std::set<std::string>& seen) {
  seen.insert(key);
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ValidationError(std::string("config field '") + key + "': " + e.what());
  }
}

void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!known.count(it.key())) throw ValidationError("unknown config field '" + where + it.key() + "'");
}

}  // namespace

void TrainConfig::validate() const {
  if (dim < 2) throw ValidationError("dim must be at least 2");
  if (lora_rank < 1 || lora_rank > dim) throw ValidationError("lora_rank must be in [1, dim]");
  if (!(lora_alpha > 0.0)) throw ValidationError("lora_alpha must be positive");
  if (!(init_scale > 0.0)) throw ValidationError("init_scale must be positive");
  if (!(tau_init > 0.0) || !(tau_min > 0.0)) throw ValidationError("tau_init and tau_min must be positive");
  sampler.validate();
  guidance.validate();
  if (batch_size < 1 || accumulation_steps < 1) throw ValidationError("batch_size and accumulation_steps must be positive");
  if (contrastive_batch() < 2) throw ValidationError("the contrastive batch (batch_size * accumulation_steps) must be at least 2");
  if (epochs < 1) throw ValidationError("epochs must be positive");
  if (!(lr >= 0.0)) throw ValidationError("lr must be non-negative");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) throw ValidationError("betas must be in [0, 1)");
  if (!(eps > 0.0)) throw ValidationError("eps must be positive");
  if (!(weight_decay >= 0.0)) throw ValidationError("weight_decay must be non-negative");
  if (!(warmup_ratio >= 0.0 && warmup_ratio < 1.0)) throw ValidationError("warmup_ratio must be in [0, 1)");
}

TrainConfig desk_preset() { return TrainConfig{}; }

TrainConfig full_preset() {
  TrainConfig c;
  c.preset = "full";
  c.lr = 3e-6;
  c.batch_size = 1;
  c.accumulation_steps = 8;
  c.weight_decay = 1e-4;
  c.epochs = 150;
  c.warmup_ratio = 0.1;
  c.beta1 = 0.9;
  c.beta2 = 0.98;
  c.eps = 1e-8;
  c.lora_alpha = 32.0;
  c.lora_rank = 8;
  c.sampler.ratio = 0.5;
  c.sampler.maxn = 2048;
  return c;
}

TrainConfig preset_by_name(const std::string& name) {
  if (name == "desk") return desk_preset();
  if (name == "full") return full_preset();
  throw ValidationError("unknown preset '" + name + "' (expected desk or full)");
}

json config_to_json(const TrainConfig& c) {
  return {{"preset", c.preset},
          {"dim", c.dim},
          {"learnable_prompts", c.learnable_prompts},
          {"lora_rank", c.lora_rank},
          {"lora_alpha", c.lora_alpha},
          {"init_scale", c.init_scale},
          {"tau_init", c.tau_init},
          {"tau_min", c.tau_min},
          {"sampler", {{"ratio", c.sampler.ratio}, {"maxn", c.sampler.maxn}, {"seed", c.sampler.seed}}},
          {"guidance",
           {{"min_fields", c.guidance.min_fields},
            {"keep_probability", c.guidance.keep_probability},
            {"seed", c.guidance.seed},
            {"shuffle", c.guidance.shuffle}}},
          {"sample_instances", c.sample_instances},
          {"batch_size", c.batch_size},
          {"accumulation_steps", c.accumulation_steps},
          {"epochs", c.epochs},
          {"lr", c.lr},
          {"beta1", c.beta1},
          {"beta2", c.beta2},
          {"eps", c.eps},
          {"weight_decay", c.weight_decay},
          {"warmup_ratio", c.warmup_ratio},
          {"seed", c.seed},
          {"freeze_embedding", c.freeze_embedding},
          {"freeze_adapters", c.freeze_adapters},
          {"freeze_aggregator", c.freeze_aggregator},
          {"freeze_prompts", c.freeze_prompts},
          {"freeze_temperature", c.freeze_temperature},
          {"eval_every", c.eval_every}};
}

TrainConfig config_from_json(const json& j) {
  if (!j.is_object()) throw ValidationError("config must be a JSON object");
  std::string preset = j.contains("preset") && j["preset"].is_string() ? j["preset"].get<std::string>() : "desk";
  TrainConfig c = preset_by_name(preset);
  std::set<std::string> seen;
  read_field(j, "preset", c.preset, seen);
  read_field(j, "dim", c.dim, seen);
  read_field(j, "learnable_prompts", c.learnable_prompts, seen);
  read_field(j, "lora_rank", c.lora_rank, seen);
  read_field(j, "lora_alpha", c.lora_alpha, seen);
  read_field(j, "init_scale", c.init_scale, seen);
  read_field(j, "tau_init", c.tau_init, seen);
  read_field(j, "tau_min", c.tau_min, seen);
  read_field(j, "sample_instances", c.sample_instances, seen);
  read_field(j, "batch_size", c.batch_size, seen);
  read_field(j, "accumulation_steps", c.accumulation_steps, seen);
  read_field(j, "epochs", c.epochs, seen);
  read_field(j, "lr", c.lr, seen);
  read_field(j, "beta1", c.beta1, seen);
  read_field(j, "beta2", c.beta2, seen);
  read_field(j, "eps", c.eps, seen);
  read_field(j, "weight_decay", c.weight_decay, seen);
  read_field(j, "warmup_ratio", c.warmup_ratio, seen);
  read_field(j, "seed", c.seed, seen);
  read_field(j, "freeze_embedding", c.freeze_embedding, seen);
  read_field(j, "freeze_adapters", c.freeze_adapters, seen);
  read_field(j, "freeze_aggregator", c.freeze_aggregator, seen);
  read_field(j, "freeze_prompts", c.freeze_prompts, seen);
  read_field(j, "freeze_temperature", c.freeze_temperature, seen);
  read_field(j, "eval_every", c.eval_every, seen);
  seen.insert("sampler");
  seen.insert("guidance");
  if (j.contains("sampler")) {
    const json& s = j["sampler"];
    std::set<std::string> sub;
    read_field(s, "ratio", c.sampler.ratio, sub);
    read_field(s, "maxn", c.sampler.maxn, sub);
    read_field(s, "seed", c.sampler.seed, sub);
    reject_unknown(s, sub, "sampler.");
  }
  if (j.contains("guidance")) {
    const json& g = j["guidance"];
    std::set<std::string> sub;
    read_field(g, "min_fields", c.guidance.min_fields, sub);
    read_field(g, "keep_probability", c.guidance.keep_probability, sub);
    read_field(g, "seed", c.guidance.seed, sub);
    read_field(g, "shuffle", c.guidance.shuffle, sub);
    reject_unknown(g, sub, "guidance.");
  }
  reject_unknown(j, seen, "");
  c.validate();
  return c;
}

TrainConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

void save_config(const TrainConfig& config, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << config_to_json(config).dump(2) << "\n";
}

std::string config_fingerprint(const TrainConfig& config) { return config_to_json(config).dump(); }

}  // namespace five
