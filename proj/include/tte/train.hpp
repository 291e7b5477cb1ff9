#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tte/dataset.hpp"
#include "tte/model.hpp"

namespace tte {

enum class Regime { Nominal, Adversarial, Gaussian, SmoothAdv };

std::string regime_name(Regime r);
Regime regime_from_name(const std::string& name);

struct TrainConfig {
  int epochs = 10;
  int batch_size = 50;
  double lr = 0.05;
  double momentum = 0.9;
  uint64_t seed = 0;
  // stochastic train-time augmentation, unlike the fixed test-time transforms
  bool train_flip = true;
  bool train_padcrop = true;
  int pad = 4;
  Regime regime = Regime::Nominal;
  double epsilon = 8.0 / 255.0;   // adversarial / smoothadv inner PGD
  int attack_steps = 5;
  double attack_step_size = 0.0;  // 0 -> epsilon/4
  double sigma = 0.5;             // gaussian / smoothadv noise std
};

struct TrainResult {
  std::vector<double> epoch_loss;  // sample-weighted mean CE per epoch
};

// SGD with momentum; seed-deterministic end-to-end (shuffle, augmentation,
// inner attacks and noise all draw from streams derived from cfg.seed).
// Throws NumericalError when the loss turns non-finite.
TrainResult train(Classifier& m, const Dataset& data, const TrainConfig& cfg);

}  // namespace tte
