#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "tte/dataset.hpp"
#include "tte/model.hpp"

namespace tte {

struct SmoothingConfig {
  double sigma = 0.5;
  int n0 = 32;      // selection samples picking the candidate class
  int n = 1000;     // fresh estimation samples behind the confidence bound
  double alpha = 0.001;
  int batch = 128;  // noisy forwards per model call; result is batch-size independent
  uint64_t seed = 0;
};

struct CertificationResult {
  int predicted = -1;     // -1 = abstain
  double pa_lower = 0.0;  // Clopper-Pearson lower bound on the top-class probability
  double radius = 0.0;    // sigma * Phi^{-1}(pa_lower); 0 when abstained
  bool correct = false;
};

// argmax-class tallies over n draws x + N(0, sigma^2 I); noise is added to the
// un-clipped input and never re-clipped
std::vector<int> noisy_counts(const ScoreModel& m, const Tensor& x, double sigma, int n,
                              uint64_t seed, int batch = 128);

// Cohen-style CERTIFY: candidate from n0 selection draws, bound from n fresh
// estimation draws; abstains (non-strictly) at pa_lower <= 1/2. input_index
// keys this input's noise streams so set-level results are order-independent.
CertificationResult certify(const ScoreModel& m, const Tensor& x, int label,
                            const SmoothingConfig& cfg, int input_index = 0);

std::vector<CertificationResult> certify_set(const ScoreModel& m, const Dataset& ds,
                                             const SmoothingConfig& cfg);

// mean of radius * correct over ALL results; abstains and misses contribute 0
double acr(const std::vector<CertificationResult>& results);

using Curve = std::vector<std::pair<double, double>>;

// certified accuracy at r = fraction with correct prediction and radius >= r
Curve certified_curve(const std::vector<CertificationResult>& results,
                      const std::vector<double>& radius_grid);

// pointwise maximum across per-sigma curves sharing one grid
Curve envelope(const std::vector<Curve>& curves);

}  // namespace tte
