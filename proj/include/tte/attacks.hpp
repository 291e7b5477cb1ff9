#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "tte/dataset.hpp"
#include "tte/model.hpp"

namespace tte {

enum class AttackKind { FGSM, PGD, APGD_CE, APGD_T, Square };

struct AttackConfig {
  double epsilon = 8.0 / 255.0;  // l_inf budget, in [0,1]; 0 keeps x unchanged
  int steps = 20;                // iterations; square attack: query budget
  double step_size = 0.0;        // 0 -> epsilon/4 default (PGD, APGD without schedule)
  int restarts = 1;
  int target_count = 9;          // APGD-T candidate targets, capped at N-1
  double momentum = 0.25;        // APGD weight on the previous-step difference; 0 = plain PGD
  bool halving = true;           // APGD step-size schedule; off -> fixed step_size
  bool random_start = true;      // gradient attacks start inside the epsilon ball
  uint64_t seed = 0;
  int base_index = 0;  // global index of batch row 0; keeps rng streams chunk-independent
};

struct AttackOutcome {
  Tensor x_adv;                  // [B,C,H,W], feasible: in the epsilon ball and [0,1]
  std::vector<uint8_t> success;  // prediction at x_adv differs from the label
  std::vector<double> margin;    // z_y - max_{j != y} z_j at x_adv
  std::vector<int> iterations;   // gradient steps or oracle queries spent
  double accuracy = 0.0;         // fraction still classified correctly at x_adv
};

// x_adv = clip(x + eps * sign(grad_x CE), 0, 1); cfg.steps ignored
AttackOutcome fgsm(const ScoreModel& m, const Tensor& x, const std::vector<int>& y,
                   const AttackConfig& cfg);

// signed-gradient ascent on CE from a random start, best-loss iterate kept,
// per-instance worst case over restarts
AttackOutcome pgd(const ScoreModel& m, const Tensor& x, const std::vector<int>& y,
                  const AttackConfig& cfg);

// PGD plus momentum and a halving step-size schedule (checkpoint fractions
// 0.22, then +max(prev_gap - 0.03, 0.06)); schedule starts at 2*eps
AttackOutcome apgd_ce(const ScoreModel& m, const Tensor& x, const std::vector<int>& y,
                      const AttackConfig& cfg);

// APGD on the targeted DLR loss (z_y - z_t)/(z_pi1 - z_pi3), descended over
// the top target_count non-true classes; per-instance worst case. Needs N >= 4.
AttackOutcome apgd_targeted(const ScoreModel& m, const Tensor& x, const std::vector<int>& y,
                            const AttackConfig& cfg);

// the spec'd targeted DLR value per instance, exposed for tests
std::vector<double> dlr_targeted(const Tensor& scores, const std::vector<int>& y,
                                 const std::vector<int>& targets);

// score queries are the only model access; no gradient channel exists
using ScoreOracle = std::function<Tensor(const Tensor&)>;

// random search with epsilon-magnitude square patches of geometrically
// shrinking side; a candidate is accepted iff it strictly decreases the
// margin. accepted_margins, when given, records each instance's acceptance
// chain so tests can check strict monotonicity.
AttackOutcome square_attack(const ScoreOracle& oracle, int num_classes, const Tensor& x,
                            const std::vector<int>& y, const AttackConfig& cfg,
                            std::vector<std::vector<double>>* accepted_margins = nullptr);

std::vector<double> margin_rows(const Tensor& scores, const std::vector<int>& y);

struct SuiteAttack {
  AttackKind kind;
  AttackConfig cfg;
};
std::string attack_name(AttackKind k);

struct RobustReport {
  double clean_accuracy = 0.0;
  std::vector<std::pair<std::string, double>> per_attack;  // (name, accuracy under attack)
  double robust_accuracy = 0.0;
  std::vector<uint8_t> clean_correct;
  std::vector<std::vector<uint8_t>> attack_success;  // [attack][instance]
  std::vector<uint8_t> robust_mask;                  // clean-correct and never fooled
};

// robust_i = clean_correct_i AND no attack succeeds on i
std::vector<uint8_t> aggregate_robust(const std::vector<uint8_t>& clean_correct,
                                      const std::vector<std::vector<uint8_t>>& attack_success);

// per-instance worst case across all attacks in the suite; evaluation is
// chunked (results are chunk-size independent; rng streams key off global
// instance indices)
RobustReport robust_accuracy(const ScoreModel& m, const Dataset& ds,
                             const std::vector<SuiteAttack>& suite, int chunk = 16);

struct ObfuscationSweep {
  std::vector<std::pair<int, double>> by_iterations;  // (steps, APGD-CE accuracy) at fixed eps
  std::vector<std::pair<double, double>> by_epsilon;  // (eps, APGD-CE accuracy) at fixed steps
};
ObfuscationSweep obfuscation_sweep(const ScoreModel& m, const Dataset& ds,
                                   const std::vector<int>& iter_grid,
                                   const std::vector<double>& eps_grid, double fixed_eps,
                                   int fixed_steps, const AttackConfig& base, int chunk = 16);

}  // namespace tte
