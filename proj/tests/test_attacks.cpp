#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "tte/attacks.hpp"
#include "tte/ensemble.hpp"
#include "tte/errors.hpp"
#include "tte/kernels.hpp"
#include "tte/rng.hpp"

using namespace tte;

namespace {

Tensor rand_interior(int b, int h, int w, uint64_t seed) {
  Tensor x({b, 1, h, w});
  Rng rng(seed);
  for (int64_t i = 0; i < x.numel(); ++i) x[i] = rng.uniform(0.3, 0.7);
  return x;
}

std::vector<int> rand_labels(int b, int n, uint64_t seed) {
  Rng rng(seed);
  std::vector<int> y(b);
  for (int& l : y) l = int(rng.below(uint64_t(n)));
  return y;
}

// scores = flatten(x) . W, the closed-form FGSM oracle target
struct LinearModel final : ScoreModel {
  Tensor w;  // [P, N]
  int num_classes() const override { return w.dim(1); }
  Tensor forward(const Tensor& x) const override {
    return kernels::matmul(x.reshaped({x.dim(0), w.dim(0)}), w);
  }
  ad::Var forward_diff(ad::Tape& tp, ad::Var x) const override {
    ad::Var flat = ad::reshape(x, {x.value().dim(0), w.dim(0)});
    return ad::matmul(flat, tp.constant(w));
  }
};

void check_feasible_here(const Tensor& x, const Tensor& adv, double eps) {
  for (int64_t i = 0; i < x.numel(); ++i) {
    CHECK(std::fabs(adv[i] - x[i]) <= eps + 1e-10);
    CHECK(adv[i] >= 0.0);
    CHECK(adv[i] <= 1.0);
  }
}

}  // namespace

TEST_CASE("fgsm with epsilon 0 returns the input unchanged") {
  Classifier m(1, 16, 16, 4, 1);
  Tensor x = rand_interior(3, 16, 16, 5);
  auto y = rand_labels(3, 4, 6);
  AttackConfig cfg;
  cfg.epsilon = 0.0;
  cfg.steps = 0;  // ignored by fgsm
  AttackOutcome o = fgsm(m, x, y, cfg);
  CHECK(o.x_adv.bitwise_equal(x));
}

TEST_CASE("fgsm matches the linear-model closed form") {
  const int h = 6, w = 6, p = h * w;
  LinearModel lm;
  lm.w = Tensor({p, 2});
  Rng rng(3);
  for (int64_t i = 0; i < lm.w.numel(); ++i) lm.w[i] = rng.uniform(-1.0, 1.0);

  Tensor x = rand_interior(2, h, w, 9);
  std::vector<int> y = {0, 1};
  AttackConfig cfg;
  cfg.epsilon = 0.05;
  AttackOutcome o = fgsm(lm, x, y, cfg);

  // gradient of CE wrt pixel q is prob_other * (W[q,other] - W[q,y])
  Tensor expect = x;
  for (int i = 0; i < 2; ++i)
    for (int q = 0; q < p; ++q) {
      const double diff = lm.w[int64_t(q) * 2 + (1 - y[i])] - lm.w[int64_t(q) * 2 + y[i]];
      const double s = diff > 0 ? 1.0 : (diff < 0 ? -1.0 : 0.0);
      expect[int64_t(i) * p + q] = x[int64_t(i) * p + q] + cfg.epsilon * s;
    }
  CHECK(o.x_adv.bitwise_equal(expect));
  check_feasible_here(x, o.x_adv, cfg.epsilon);
}

TEST_CASE("pgd with one step and no random start collapses to fgsm") {
  Classifier m(1, 12, 12, 4, 7);
  Tensor x = rand_interior(4, 12, 12, 11);
  auto y = rand_labels(4, 4, 12);
  AttackConfig cfg;
  cfg.epsilon = 8.0 / 255.0;
  cfg.steps = 1;
  cfg.step_size = cfg.epsilon;
  cfg.random_start = false;
  AttackOutcome a = fgsm(m, x, y, cfg);
  AttackOutcome b = pgd(m, x, y, cfg);
  CHECK(a.x_adv.bitwise_equal(b.x_adv));
  CHECK(a.margin == b.margin);
}

TEST_CASE("apgd without momentum or halving collapses to pgd") {
  Classifier m(1, 12, 12, 4, 2);
  Tensor x = rand_interior(5, 12, 12, 3);
  auto y = rand_labels(5, 4, 4);
  AttackConfig cfg;
  cfg.epsilon = 8.0 / 255.0;
  cfg.steps = 6;
  cfg.step_size = 0.01;
  cfg.momentum = 0.0;
  cfg.halving = false;
  cfg.random_start = true;
  cfg.seed = 99;
  AttackOutcome a = apgd_ce(m, x, y, cfg);
  AttackOutcome b = pgd(m, x, y, cfg);
  CHECK(a.x_adv.bitwise_equal(b.x_adv));

  // with the schedule on, results differ (step starts at 2*eps)
  cfg.halving = true;
  cfg.momentum = 0.25;
  AttackOutcome c = apgd_ce(m, x, y, cfg);
  CHECK(!c.x_adv.bitwise_equal(b.x_adv));
  check_feasible_here(x, c.x_adv, cfg.epsilon);
}

TEST_CASE("targeted DLR follows the rank arithmetic") {
  Tensor s({1, 4}, {5.0, 3.0, 2.0, 1.0});
  // denominator z_pi1 - z_pi3 = 5 - 2 = 3
  CHECK(dlr_targeted(s, {0}, {1})[0] == doctest::Approx((5.0 - 3.0) / 3.0).epsilon(1e-9));
  CHECK(dlr_targeted(s, {0}, {2})[0] == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(dlr_targeted(s, {1}, {0})[0] == doctest::Approx(-2.0 / 3.0).epsilon(1e-9));

  Tensor s3({1, 3}, {5.0, 3.0, 2.0});
  CHECK_THROWS_AS(dlr_targeted(s3, {0}, {1}), ConfigError);

  Classifier m3(1, 12, 12, 3, 1);
  Tensor x = rand_interior(2, 12, 12, 1);
  AttackConfig cfg;
  CHECK_THROWS_AS(apgd_targeted(m3, x, {0, 1}, cfg), ConfigError);
}

TEST_CASE("gradient attacks are seed-deterministic and feasible") {
  Classifier m(1, 12, 12, 4, 31);
  Tensor x = rand_interior(4, 12, 12, 17);
  auto y = rand_labels(4, 4, 18);
  AttackConfig cfg;
  cfg.epsilon = 8.0 / 255.0;
  cfg.steps = 5;
  cfg.seed = 42;

  AttackOutcome p1 = pgd(m, x, y, cfg);
  AttackOutcome p2 = pgd(m, x, y, cfg);
  CHECK(p1.x_adv.bitwise_equal(p2.x_adv));
  cfg.seed = 43;
  CHECK(!pgd(m, x, y, cfg).x_adv.bitwise_equal(p1.x_adv));
  check_feasible_here(x, p1.x_adv, cfg.epsilon);

  cfg.seed = 42;
  AttackOutcome t1 = apgd_targeted(m, x, y, cfg);
  AttackOutcome t2 = apgd_targeted(m, x, y, cfg);
  CHECK(t1.x_adv.bitwise_equal(t2.x_adv));
  check_feasible_here(x, t1.x_adv, cfg.epsilon);

  // restarts can only strengthen the per-instance outcome
  cfg.restarts = 2;
  AttackOutcome pr = pgd(m, x, y, cfg);
  for (size_t i = 0; i < pr.success.size(); ++i) {
    CHECK(pr.success[i] >= p1.success[i]);
    if (pr.success[i] == p1.success[i]) CHECK(pr.margin[i] <= p1.margin[i]);
  }

  // a large epsilon stays feasible after clipping to the box
  cfg.restarts = 1;
  cfg.epsilon = 64.0 / 255.0;
  check_feasible_here(x, apgd_ce(m, x, y, cfg).x_adv, cfg.epsilon);
}

TEST_CASE("square attack is black-box, monotone, and budget-bound") {
  Classifier m(1, 12, 12, 4, 5);
  Tensor x = rand_interior(4, 12, 12, 23);
  auto y = rand_labels(4, 4, 24);
  ScoreOracle oracle = [&](const Tensor& q) { return m.forward(q); };

  AttackConfig cfg;
  cfg.epsilon = 0.2;
  cfg.steps = 0;
  AttackOutcome none = square_attack(oracle, 4, x, y, cfg);
  CHECK(none.x_adv.bitwise_equal(x));

  cfg.steps = 60;
  cfg.seed = 7;
  const uint64_t grads_before = ad::backward_invocations();
  std::vector<std::vector<double>> chains;
  AttackOutcome o = square_attack(oracle, 4, x, y, cfg, &chains);
  CHECK(ad::backward_invocations() == grads_before);  // no gradient computations
  check_feasible_here(x, o.x_adv, cfg.epsilon);

  const std::vector<double> clean_margin = margin_rows(m.forward(x), y);
  for (int i = 0; i < 4; ++i) {
    CHECK(o.margin[i] <= clean_margin[i]);
    double prev = clean_margin[i];
    for (double acc : chains[i]) {
      CHECK(acc < prev);  // every acceptance strictly decreases the margin
      prev = acc;
    }
    CHECK(o.iterations[i] <= cfg.steps);
  }

  AttackOutcome o2 = square_attack(oracle, 4, x, y, cfg);
  CHECK(o2.x_adv.bitwise_equal(o.x_adv));
}

TEST_CASE("robust aggregation takes the per-instance worst case") {
  // attack A fools instance 1, attack B fools instance 2, both clean-correct
  std::vector<uint8_t> clean = {1, 1};
  std::vector<std::vector<uint8_t>> success = {{1, 0}, {0, 1}};
  CHECK(aggregate_robust(clean, success) == std::vector<uint8_t>{0, 0});

  // adding an attack never increases robustness
  std::vector<std::vector<uint8_t>> more = success;
  more.push_back({0, 0});
  CHECK(aggregate_robust(clean, more) == aggregate_robust(clean, success));
  std::vector<uint8_t> sub = aggregate_robust(clean, {success[0]});
  CHECK(sub == std::vector<uint8_t>{0, 1});

  // cleanly wrong instances are never robust
  CHECK(aggregate_robust({0, 1}, {{0, 0}}) == std::vector<uint8_t>{0, 1});
}

TEST_CASE("robust_accuracy report is consistent and chunk-independent") {
  Dataset ds = generate(24, 4, 16, 16, 51);
  Classifier m(1, 16, 16, 4, 3);
  EnsembleModel e = EnsembleModel::wrap(m, {TransformSpec::flip()});

  AttackConfig fg;
  fg.epsilon = 0.1;
  AttackConfig sq;
  sq.epsilon = 0.1;
  sq.steps = 30;
  sq.seed = 11;
  std::vector<SuiteAttack> suite = {{AttackKind::FGSM, fg}, {AttackKind::Square, sq}};

  RobustReport r = robust_accuracy(e, ds, suite, 16);
  CHECK(r.per_attack.size() == 2);
  CHECK(r.per_attack[0].first == "fgsm");
  CHECK(r.robust_accuracy <= r.clean_accuracy);
  for (const auto& [name, acc] : r.per_attack) CHECK(r.robust_accuracy <= acc);

  // single-attack suite: robust equals that attack's accuracy among clean-correct
  RobustReport single = robust_accuracy(e, ds, {{AttackKind::FGSM, fg}}, 16);
  int both = 0;
  for (size_t i = 0; i < single.robust_mask.size(); ++i)
    both += single.clean_correct[i] && !single.attack_success[0][i];
  CHECK(single.robust_accuracy == doctest::Approx(double(both) / ds.b()));

  RobustReport r7 = robust_accuracy(e, ds, suite, 7);
  CHECK(r7.robust_mask == r.robust_mask);
  CHECK(r7.clean_accuracy == r.clean_accuracy);
  CHECK(r7.per_attack == r.per_attack);

  CHECK_THROWS_AS(robust_accuracy(e, ds, {}, 16), ConfigError);
}

TEST_CASE("obfuscation sweep produces the grid-shaped table") {
  Dataset ds = generate(8, 4, 16, 16, 61);
  Classifier m(1, 16, 16, 4, 9);
  AttackConfig base;
  base.seed = 5;
  ObfuscationSweep sw = obfuscation_sweep(m, ds, {1, 3}, {2.0 / 255, 8.0 / 255},
                                          8.0 / 255, 3, base, 8);
  CHECK(sw.by_iterations.size() == 2);
  CHECK(sw.by_epsilon.size() == 2);
  CHECK(sw.by_iterations[0].first == 1);
  CHECK(sw.by_epsilon[1].first == doctest::Approx(8.0 / 255));
  for (const auto& [k, acc] : sw.by_iterations) {
    CHECK(acc >= 0.0);
    CHECK(acc <= 1.0);
  }
  CHECK_THROWS_AS(obfuscation_sweep(m, ds, {}, {0.1}, 0.1, 1, base, 8), ConfigError);
}
