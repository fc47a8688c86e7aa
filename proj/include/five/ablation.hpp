#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "five/config.hpp"
#include "five/dataset.hpp"

namespace five {

struct AblationGrid {
  std::vector<double> ratios = {0.25, 0.5, 1.0};
  std::vector<std::size_t> maxns = {4, 16, 64};
  std::size_t seeds = 3;
  std::size_t epochs = 10;

  void validate() const;
};

struct AblationRow {
  double ratio = 0.0;
  std::size_t maxn = 0;
  double mean_accuracy = 0.0;
  double std_accuracy = 0.0;  // sample standard deviation over seeds
  double mean_epoch_seconds = 0.0;
  std::size_t runs = 0;
};

// One training run per (ratio, maxn, seed) with the base config's other
// settings, scored by zero-shot accuracy on `test`. Rows follow the grid
// order (ratios outer, maxns inner). Cells run one after another so the
// recorded epoch times are comparable.
std::vector<AblationRow> ablate_sampling(const std::vector<BagData>& train, const std::vector<BagData>& val,
                                         const std::vector<BagData>& test, const std::vector<std::string>& class_texts,
                                         const Vocabulary& vocab, const TrainConfig& base, const AblationGrid& grid,
                                         std::ostream* progress = nullptr);

std::string ablation_to_tsv(const std::vector<AblationRow>& rows);

}  // namespace five
