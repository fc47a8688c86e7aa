#pragma once

#include <string>
#include <vector>

#include "five/param_store.hpp"
#include "five/tape.hpp"

namespace five {

struct TemperatureConfig {
  double init = 0.07;
  double floor = 0.01;
};

// Adds objective.log_tau = log(init).
void init_temperature(ParamStore& params, const TemperatureConfig& config);
// max(exp(log_tau), floor) as a 1x1 node.
Var temperature(Tape& tape, ParamStore& params, const TemperatureConfig& config);
double temperature_value(const ParamStore& params, const TemperatureConfig& config);

// logits[i][j] = cos(v_i, t_j) / tau. Throws DegenerateError for zero rows.
Var similarity_logits(Var v, Var t, Var tau);

// y_ij = 1/|group(i)| when equivalence_key(text_j) == equivalence_key(text_i).
// Throws ValidationError for fewer than two texts.
Tensor build_soft_targets(const std::vector<std::string>& texts);

// (CE(S, y) + CE(S^T, y^T)) / 2
Var contrastive_loss(Var v, Var t, const std::vector<std::string>& texts, Var tau);

struct Prediction {
  std::vector<double> probabilities;
  // Class indices by descending probability (ties by index), at most k.
  std::vector<std::size_t> top;
};

// Softmax over cos(v, class_j) / tau. `v` is 1 x D, `classes` C x D, C >= 2.
Prediction predict(const Tensor& v, const Tensor& classes, double tau, std::size_t k = 5);

}  // namespace five
