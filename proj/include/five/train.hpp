#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "five/dataset.hpp"
#include "five/model.hpp"
#include "five/sampler.hpp"

namespace five {

// Inputs of one contrastive step: sampled instances padded to a common
// length, the guidance field indices per bag and the paired description
// texts.
struct PreparedBatch {
  std::vector<std::string> bag_ids;
  PaddedBatch padded;
  std::vector<std::vector<std::size_t>> prompt_indices;
  std::vector<std::string> texts;
};

// Training form: instances resampled and guidance drawn on per-(epoch, bag)
// substreams. Every bag must have at least one known field.
PreparedBatch prepare_batch(const FiveModel& model, const std::vector<const BagData*>& bags, std::uint64_t epoch);

// Contrastive loss of a prepared batch.
Var batch_loss(Tape& tape, FiveModel& model, const PreparedBatch& batch);

struct TrainResult {
  std::vector<double> step_losses;
  std::vector<double> epoch_losses;   // mean step loss per epoch
  std::vector<double> epoch_seconds;  // wall time of the optimization part
  std::vector<double> val_accuracy;   // per evaluated epoch
  double best_val_accuracy = -1.0;
  std::size_t best_epoch = 0;
  std::size_t dropped_unknown = 0;    // train bags with no known field
  std::size_t steps = 0;
};

// Optimizes an initialized model in place. With a validation split and
// eval_every > 0 the parameters with the best validation zero-shot accuracy
// are restored at the end. Per-step lines "step epoch loss lr tau" go to
// `log` when given. Throws NumericError naming the batch on a non-finite
// loss.
TrainResult train(FiveModel& model, const std::vector<BagData>& train_bags, const std::vector<BagData>& val_bags,
                  const std::vector<std::string>& class_texts, std::ostream* log = nullptr);

}  // namespace five
