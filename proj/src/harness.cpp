#include "five/harness.hpp"

#include <limits>

#include "five/guidance.hpp"

namespace five {
namespace {

FineGrainedDescription fixture_description(std::size_t b) {
  using D = Differentiation;
  using P = Presence;
  FineGrainedDescription d;
  const D diffs[] = {D::Well, D::Poor, D::Moderate, D::Mixed};
  d.differentiation = diffs[b];
  d.air_space_spread = b % 2 == 0 ? P::Absent : P::Present;
  d.vascular_invasion = b < 2 ? P::Present : P::Absent;
  d.pleural_invasion = b == 3 ? P::Unknown : P::Absent;
  d.adjacent_invasion = b == 1 ? P::Present : P::Absent;
  d.margins = b % 3 == 0 ? Margin::Clear : Margin::Involved;
  return d;
}

const std::vector<std::size_t> kFixturePrompts[] = {{0, 2, 5}, {3, 1, 4}, {5, 0, 1}, {2, 4, 0}};

}  // namespace

GradFixture tiny_grad_fixture(std::uint64_t seed) {
  constexpr std::size_t kBatch = 4;
  constexpr std::size_t kInstances = 5;
  TrainConfig cfg = desk_preset();
  cfg.dim = 8;
  cfg.learnable_prompts = 2;
  cfg.lora_rank = 2;
  cfg.lora_alpha = 2.0;
  cfg.seed = seed;

  const PromptTemplate& tmpl = default_template();
  std::vector<FineGrainedDescription> descriptions;
  std::vector<std::string> texts(tmpl.questions.begin(), tmpl.questions.end());
  for (std::size_t b = 0; b < kBatch; ++b) {
    descriptions.push_back(fixture_description(b));
    texts.push_back(reconstruct(descriptions.back(), tmpl, kFixturePrompts[b]).description_text);
  }
  FiveModel model(cfg, Vocabulary::build(texts));
  model.init(seed);
  Rng rng = Rng::substream(seed, hash_string("fixture"));
  Tensor lora_b = Tensor::zeros(model.params().value("text.lora_b").shape());
  for (double& x : lora_b.data()) x = 0.3 * rng.normal();
  model.params().set_value("text.lora_b", lora_b);

  PreparedBatch batch;
  std::vector<Tensor> bags;
  for (std::size_t b = 0; b < kBatch; ++b) {
    std::vector<double> x(kInstances * cfg.dim);
    for (double& v : x) v = rng.normal();
    bags.push_back(Tensor::matrix(kInstances, cfg.dim, std::move(x)));
    const GuidancePair pair = reconstruct(descriptions[b], tmpl, kFixturePrompts[b]);
    batch.bag_ids.push_back("fixture-" + std::to_string(b));
    batch.prompt_indices.push_back(pair.field_indices);
    batch.texts.push_back(pair.description_text);
  }
  batch.padded = pad_batch(bags);
  return GradFixture{std::move(model), std::move(batch)};
}

GradReport tiny_grad_check(std::uint64_t seed) {
  GradFixture f = tiny_grad_fixture(seed);
  auto build = [&](Tape& tape, ParamStore&) { return batch_loss(tape, f.model, f.batch); };
  return grad_check(build, f.model.params(), 1e-5, std::numeric_limits<std::size_t>::max(), seed);
}

DatasetOptions desk_testbed_options(std::uint64_t seed) {
  DatasetOptions o;
  o.bags_per_class = 140;
  o.split_counts = std::array<std::size_t, 3>{100, 15, 25};
  o.seed = seed;
  return o;
}

DatasetOptions subtype_testbed_options(std::uint64_t seed) {
  DatasetOptions o;
  o.bags_per_class = 56;
  o.split_counts = std::array<std::size_t, 3>{32, 0, 24};
  o.seed = seed;
  return o;
}

DatasetOptions ablation_testbed_options(std::uint64_t seed) {
  DatasetOptions o;
  o.bags_per_class = 165;
  o.split_counts = std::array<std::size_t, 3>{100, 15, 50};
  o.seed = seed;
  return o;
}

}  // namespace five
