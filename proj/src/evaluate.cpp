#include "five/evaluate.hpp"

#include <algorithm>

#include "five/error.hpp"
#include "five/optim.hpp"

namespace five {

Tensor bag_features(FiveModel& model, const std::vector<BagData>& bags, bool parallel) {
  const std::size_t d = model.config().dim;
  std::vector<double> out(bags.size() * d);
  const auto n = static_cast<std::ptrdiff_t>(bags.size());
  // Exceptions must not escape the parallel region.
  std::vector<std::string> errors(bags.size());
#pragma omp parallel for schedule(dynamic) if (parallel)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto b = static_cast<std::size_t>(i);
    try {
      const Tensor v = model.bag_feature_value(bags[b].features);
      std::copy(v.data().begin(), v.data().end(), out.begin() + static_cast<std::ptrdiff_t>(b * d));
    } catch (const std::exception& e) {
      errors[b] = e.what();
    }
  }
  for (std::size_t b = 0; b < bags.size(); ++b)
    if (!errors[b].empty()) throw NumericError("bag '" + bags[b].bag_id + "': " + errors[b]);
  return Tensor::matrix(bags.size(), d, std::move(out));
}

Tensor class_embeddings(FiveModel& model, const std::vector<std::string>& class_texts) {
  return model.text().encode_values(model.params(), class_texts);
}

EvalReport eval_with_embeddings(const Tensor& features, const std::vector<std::size_t>& labels,
                                const Tensor& classes, double tau, const std::string& fingerprint) {
  const std::size_t c = classes.rows();
  std::vector<std::vector<double>> scores;
  for (std::size_t i = 0; i < features.rows(); ++i) {
    if (labels.at(i) >= c)
      throw ValidationError("label " + std::to_string(labels[i]) + " has no class description (" + std::to_string(c) +
                            " classes)");
    const Tensor v = features.slice_rows(i, i + 1);
    scores.push_back(predict(v, classes, tau, c).probabilities);
  }
  return build_eval_report(labels, scores, c, fingerprint);
}

EvalReport eval_zeroshot(FiveModel& model, const std::vector<BagData>& bags,
                         const std::vector<std::string>& class_texts, bool parallel) {
  if (bags.empty()) throw ValidationError("eval_zeroshot: no bags");
  std::vector<std::size_t> labels;
  for (const auto& b : bags) {
    if (b.class_index >= class_texts.size())
      throw ValidationError("bag '" + b.bag_id + "' has a class without a description");
    labels.push_back(b.class_index);
  }
  return eval_with_embeddings(bag_features(model, bags, parallel), labels, class_embeddings(model, class_texts),
                              model.tau_value(), config_fingerprint(model.config()));
}

std::vector<BagData> select_shots(const std::vector<BagData>& pool, std::size_t num_classes, std::size_t shots,
                                  std::uint64_t seed) {
  std::vector<BagData> out;
  for (std::size_t c = 0; c < num_classes; ++c) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < pool.size(); ++i)
      if (pool[i].class_index == c) members.push_back(i);
    if (members.size() < shots)
      throw ValidationError("class " + std::to_string(c) + " has " + std::to_string(members.size()) +
                            " training bags, " + std::to_string(shots) + " shots requested");
    Rng rng = Rng::substream(seed, hash_string("shots"), c);
    rng.shuffle(members);
    for (std::size_t k = 0; k < shots; ++k) out.push_back(pool[members[k]]);
  }
  return out;
}

EvalReport eval_fewshot(const FiveModel& pretrained, const std::vector<BagData>& pool,
                        const std::vector<BagData>& test, const std::vector<std::string>& class_texts,
                        const FewShotConfig& config) {
  FiveModel model = pretrained;
  if (config.shots == 0) return eval_zeroshot(model, test, class_texts);

  const auto support = select_shots(pool, class_texts.size(), config.shots, config.seed);
  for (const auto& name : config.tunables)
    if (!model.params().contains(name)) throw ValidationError("unknown tunable parameter '" + name + "'");

  if (!config.tunables.empty() && config.steps > 0) {
    model.params().set_trainable_only(config.tunables);
    for (auto& [name, p] : model.params()) {
      p.first_moment = Tensor::zeros(p.value.shape());
      p.second_moment = Tensor::zeros(p.value.shape());
      p.step = 0;
    }
    Tensor targets = Tensor::zeros({support.size(), class_texts.size()});
    for (std::size_t i = 0; i < support.size(); ++i) targets.at(i, support[i].class_index) = 1.0;
    const AdamWConfig opt{config.lr, model.config().beta1, model.config().beta2, model.config().eps,
                          config.weight_decay};
    for (std::size_t step = 0; step < config.steps; ++step) {
      Tape tape;
      std::vector<Var> rows;
      for (const auto& b : support)
        rows.push_back(model.bag_feature(tape, b.features, Mask(b.features.rows(), true), all_prompt_indices()));
      Var v = ops::concat_rows(rows);
      Var t = model.text().encode(tape, model.params(), class_texts);
      Var loss = ops::soft_cross_entropy(similarity_logits(v, t, model.tau(tape)), targets);
      tape.backward(loss);
      adamw_step(model.params(), opt);
    }
  }
  return eval_zeroshot(model, test, class_texts);
}

}  // namespace five
