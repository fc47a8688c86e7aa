#include "five/ablation.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include "five/error.hpp"
#include "five/evaluate.hpp"
#include "five/train.hpp"

namespace five {

void AblationGrid::validate() const {
  if (ratios.empty() || maxns.empty()) throw ValidationError("ablation grid must have at least one ratio and one maxn");
  if (seeds < 1) throw ValidationError("ablation needs at least one seed");
  if (epochs < 1) throw ValidationError("ablation needs at least one epoch");
}

std::vector<AblationRow> ablate_sampling(const std::vector<BagData>& train, const std::vector<BagData>& val,
                                         const std::vector<BagData>& test, const std::vector<std::string>& class_texts,
                                         const Vocabulary& vocab, const TrainConfig& base, const AblationGrid& grid,
                                         std::ostream* progress) {
  grid.validate();
  std::vector<AblationRow> rows;
  for (double ratio : grid.ratios)
    for (std::size_t maxn : grid.maxns) {
      AblationRow row;
      row.ratio = ratio;
      row.maxn = maxn;
      std::vector<double> accs;
      double seconds = 0.0;
      std::size_t epochs_timed = 0;
      for (std::size_t s = 0; s < grid.seeds; ++s) {
        TrainConfig cfg = base;
        cfg.sampler.ratio = ratio;
        cfg.sampler.maxn = maxn;
        cfg.sample_instances = true;
        cfg.epochs = grid.epochs;
        cfg.seed = base.seed + s;
        FiveModel model(cfg, vocab);
        model.init(cfg.seed);
        const TrainResult r = five::train(model, train, val, class_texts);
        for (double t : r.epoch_seconds) seconds += t;
        epochs_timed += r.epoch_seconds.size();
        accs.push_back(eval_zeroshot(model, test, class_texts).accuracy);
        if (progress)
          *progress << "ratio=" << ratio << " maxn=" << maxn << " seed=" << cfg.seed << " acc=" << accs.back() << "\n";
      }
      row.runs = accs.size();
      row.mean_accuracy = std::accumulate(accs.begin(), accs.end(), 0.0) / static_cast<double>(accs.size());
      double ss = 0.0;
      for (double a : accs) ss += (a - row.mean_accuracy) * (a - row.mean_accuracy);
      row.std_accuracy = accs.size() > 1 ? std::sqrt(ss / static_cast<double>(accs.size() - 1)) : 0.0;
      row.mean_epoch_seconds = seconds / static_cast<double>(epochs_timed);
      rows.push_back(row);
    }
  return rows;
}

std::string ablation_to_tsv(const std::vector<AblationRow>& rows) {
  std::ostringstream out;
  out.precision(10);
  out << "ratio\tmaxn\tmean_acc\tstd_acc\tmean_epoch_seconds\truns\n";
  for (const auto& r : rows)
    out << r.ratio << '\t' << r.maxn << '\t' << r.mean_accuracy << '\t' << r.std_accuracy << '\t'
        << r.mean_epoch_seconds << '\t' << r.runs << '\n';
  return out.str();
}

}  // namespace five
