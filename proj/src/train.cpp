#include "five/train.hpp"

#include <chrono>
#include <cmath>
#include <optional>

#include "five/error.hpp"
#include "five/evaluate.hpp"
#include "five/guidance.hpp"
#include "five/optim.hpp"

namespace five {
namespace {

std::string join_ids(const std::vector<std::string>& ids) {
  std::string out;
  for (const auto& id : ids) out += (out.empty() ? "" : ", ") + id;
  return out;
}

}  // namespace

PreparedBatch prepare_batch(const FiveModel& model, const std::vector<const BagData*>& bags, std::uint64_t epoch) {
  const TrainConfig& cfg = model.config();
  SampleConfig sampler = cfg.sampler;
  sampler.seed = mix_seed(cfg.seed, cfg.sampler.seed);
  PreparedBatch out;
  std::vector<Tensor> instances;
  for (const BagData* b : bags) {
    out.bag_ids.push_back(b->bag_id);
    if (cfg.sample_instances) {
      const SampledBag s = sample_bag(b->bag_id, b->features.rows(), sampler, epoch);
      instances.push_back(select_rows(b->features, s.selected_indices));
    } else {
      instances.push_back(b->features);
    }
    Rng rng = Rng::substream(cfg.seed, hash_string("guidance"), cfg.guidance.seed, epoch, hash_string(b->bag_id));
    const auto indices = sample_and_shuffle(b->description, cfg.guidance, rng);
    GuidancePair pair = reconstruct(b->description, model.prompts(), indices);
    out.prompt_indices.push_back(pair.field_indices);
    out.texts.push_back(std::move(pair.description_text));
  }
  out.padded = pad_batch(instances);
  return out;
}

Var batch_loss(Tape& tape, FiveModel& model, const PreparedBatch& batch) {
  std::vector<Var> rows;
  for (std::size_t b = 0; b < batch.padded.batch; ++b)
    rows.push_back(model.bag_feature(tape, batch.padded.bag(b), batch.padded.masks[b], batch.prompt_indices[b]));
  Var v = ops::concat_rows(rows);
  Var t = model.text().encode(tape, model.params(), batch.texts);
  return contrastive_loss(v, t, batch.texts, model.tau(tape));
}

TrainResult train(FiveModel& model, const std::vector<BagData>& train_bags, const std::vector<BagData>& val_bags,
                  const std::vector<std::string>& class_texts, std::ostream* log) {
  const TrainConfig& cfg = model.config();
  cfg.validate();
  TrainResult result;

  std::vector<const BagData*> usable;
  for (const auto& b : train_bags) {
    if (known_fields(b.description).empty())
      ++result.dropped_unknown;
    else
      usable.push_back(&b);
  }
  if (log) {
    *log << "# dropped " << result.dropped_unknown << " bags with no known field\n";
    *log << "step\tepoch\tloss\tlr\ttau\n";
  }
  const std::size_t batch = cfg.contrastive_batch();
  const std::size_t full = usable.size() / batch;
  const std::size_t batches_per_epoch = full + (usable.size() % batch >= 2 ? 1 : 0);
  if (batches_per_epoch == 0) throw ValidationError("training needs at least two bags with known fields");
  const std::size_t total_steps = batches_per_epoch * cfg.epochs;

  const AdamWConfig base{cfg.lr, cfg.beta1, cfg.beta2, cfg.eps, cfg.weight_decay};
  const bool select = cfg.eval_every > 0 && !val_bags.empty();
  std::optional<std::map<std::string, Tensor>> best;
  std::size_t step = 0;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    std::vector<const BagData*> order = usable;
    Rng order_rng = Rng::substream(cfg.seed, hash_string("order"), epoch);
    order_rng.shuffle(order);

    double epoch_loss = 0.0;
    for (std::size_t k = 0; k < batches_per_epoch; ++k) {
      const std::size_t lo = k * batch;
      const std::size_t hi = std::min(order.size(), lo + batch);
      std::vector<const BagData*> members(order.begin() + static_cast<std::ptrdiff_t>(lo),
                                          order.begin() + static_cast<std::ptrdiff_t>(hi));
      const PreparedBatch prepared = prepare_batch(model, members, epoch);
      double loss_value = 0.0;
      try {
        Tape tape;
        Var loss = batch_loss(tape, model, prepared);
        loss_value = loss.value().item();
        if (!std::isfinite(loss_value)) throw NumericError("loss is not finite");
        tape.backward(loss);
        AdamWConfig opt = base;
        opt.lr = warmup_lr(cfg.lr, step, total_steps, cfg.warmup_ratio);
        adamw_step(model.params(), opt);
        if (log)
          *log << step << '\t' << epoch << '\t' << loss_value << '\t' << opt.lr << '\t' << model.tau_value() << '\n';
      } catch (const NumericError& e) {
        throw NumericError("non-finite value at step " + std::to_string(step) + " (epoch " + std::to_string(epoch) +
                           ", bags " + join_ids(prepared.bag_ids) + "): " + e.what());
      }
      result.step_losses.push_back(loss_value);
      epoch_loss += loss_value;
      ++step;
    }
    result.epoch_seconds.push_back(
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
    result.epoch_losses.push_back(epoch_loss / static_cast<double>(batches_per_epoch));

    if (select && (epoch + 1) % cfg.eval_every == 0) {
      const double acc = eval_zeroshot(model, val_bags, class_texts).accuracy;
      result.val_accuracy.push_back(acc);
      if (acc > result.best_val_accuracy) {
        result.best_val_accuracy = acc;
        result.best_epoch = epoch;
        best = model.params().snapshot();
      }
    }
  }
  result.steps = step;
  if (best) model.params().restore(*best);
  return result;
}

}  // namespace five
