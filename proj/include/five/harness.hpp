#pragma once

#include <cstdint>

#include "five/dataset.hpp"
#include "five/gradcheck.hpp"
#include "five/model.hpp"
#include "five/train.hpp"

namespace five {

// Fixed tiny training step used for gradient checks: D=8, batch of 4 bags
// with 5 instances each, 3 question prompts per bag plus 2 learnable prompts,
// adapter rank 2 with a non-zero B.
struct GradFixture {
  FiveModel model;
  PreparedBatch batch;
};
GradFixture tiny_grad_fixture(std::uint64_t seed = 0);

// Central differences (eps 1e-5) over every element of every trainable
// parameter of the tiny fixture.
GradReport tiny_grad_check(std::uint64_t seed = 0);

// Two-class testbed: 100 train / 15 val / 25 test bags per class.
DatasetOptions desk_testbed_options(std::uint64_t seed = 7);
// Eight-subtype testbed: 32 shot-pool / 24 test bags per class.
DatasetOptions subtype_testbed_options(std::uint64_t seed = 11);
// Ablation testbed: 100 train / 15 val / 50 test bags per class.
DatasetOptions ablation_testbed_options(std::uint64_t seed = 7);

}  // namespace five
