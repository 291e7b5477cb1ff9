#include "tte/train.hpp"

#include <cmath>
#include <cstring>
#include <numeric>

#include "tte/attacks.hpp"
#include "tte/autodiff.hpp"
#include "tte/errors.hpp"
#include "tte/rng.hpp"
#include "tte/transforms.hpp"

namespace tte {

namespace {

constexpr uint64_t kShuffleStream = 606000;
constexpr uint64_t kAugStream = 606001;

void validate(const Classifier& m, const Dataset& data, const TrainConfig& cfg) {
  if (cfg.epochs < 1) throw ConfigError("train: epochs must be >= 1");
  if (cfg.batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (!(cfg.lr > 0.0)) throw ConfigError("train: lr must be > 0");
  if (!(cfg.momentum >= 0.0 && cfg.momentum < 1.0))
    throw ConfigError("train: momentum must be in [0,1)");
  if (cfg.train_padcrop && cfg.pad < 1)
    throw ConfigError("train: pad must be >= 1 when train_padcrop is set");
  if (cfg.regime == Regime::Adversarial || cfg.regime == Regime::SmoothAdv) {
    if (!(cfg.epsilon > 0.0)) throw ConfigError("train: epsilon must be > 0");
    if (cfg.attack_steps < 1) throw ConfigError("train: attack_steps must be >= 1");
  }
  if (cfg.regime == Regime::Gaussian || cfg.regime == Regime::SmoothAdv) {
    if (!(cfg.sigma > 0.0)) throw ConfigError("train: sigma must be > 0");
  }
  if (data.b() < 1) throw ConfigError("train: empty dataset");
  if (data.c() != m.in_c() || data.h() != m.in_h() || data.w() != m.in_w())
    throw ConfigError("train: dataset shape does not match model input");
  if (data.num_classes != m.num_classes())
    throw ConfigError("train: dataset classes do not match model");
}

// v = momentum * v - lr * g; p += v
void sgd_step(Tensor& p, Tensor& v, const Tensor& g, double momentum, double lr) {
  double* pv = v.data();
  double* pp = p.data();
  const double* pg = g.data();
  for (size_t i = 0; i < p.numel(); ++i) {
    pv[i] = std::fma(momentum, pv[i], -lr * pg[i]);
    pp[i] += pv[i];
  }
}

}  // namespace

std::string regime_name(Regime r) {
  switch (r) {
    case Regime::Nominal: return "nominal";
    case Regime::Adversarial: return "adversarial";
    case Regime::Gaussian: return "gaussian";
    case Regime::SmoothAdv: return "smoothadv";
  }
  throw ConfigError("regime_name: unknown regime");
}

Regime regime_from_name(const std::string& name) {
  if (name == "nominal") return Regime::Nominal;
  if (name == "adversarial") return Regime::Adversarial;
  if (name == "gaussian") return Regime::Gaussian;
  if (name == "smoothadv") return Regime::SmoothAdv;
  throw ConfigError("regime_from_name: unknown regime '" + name + "'");
}

TrainResult train(Classifier& m, const Dataset& data, const TrainConfig& cfg) {
  validate(m, data, cfg);
  const int n = data.b();
  const int c = data.c(), h = data.h(), w = data.w();
  const size_t px = static_cast<size_t>(c) * h * w;
  const std::vector<int> all_labels = labels_int(data);

  Rng shuffle_rng(cfg.seed, kShuffleStream);
  Rng aug_rng(cfg.seed, kAugStream);

  Tensor vk1 = Tensor::zeros(m.k1().shape());
  Tensor vk2 = Tensor::zeros(m.k2().shape());
  Tensor vw = Tensor::zeros(m.w().shape());

  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);

  AttackConfig acfg;
  acfg.epsilon = cfg.epsilon;
  acfg.steps = cfg.attack_steps;
  acfg.step_size = cfg.attack_step_size;
  acfg.seed = cfg.seed;

  TrainResult result;
  int64_t step_counter = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (int i = n - 1; i > 0; --i) {
      int j = static_cast<int>(shuffle_rng.below(static_cast<uint64_t>(i) + 1));
      std::swap(order[i], order[j]);
    }

    double loss_sum = 0.0;
    for (int start = 0; start < n; start += cfg.batch_size) {
      const int nb = std::min(cfg.batch_size, n - start);
      Tensor xb({nb, c, h, w});
      std::vector<int> yb(nb);
      // per-sample draw order: flip coin, then crop offsets
      for (int i = 0; i < nb; ++i) {
        const int src = order[start + i];
        Tensor img = data.image(src);
        if (cfg.train_flip && aug_rng.next_unit() < 0.5)
          img = apply(TransformSpec::flip(), img);
        if (cfg.train_padcrop) {
          int ox = static_cast<int>(aug_rng.below(2 * cfg.pad + 1));
          int oy = static_cast<int>(aug_rng.below(2 * cfg.pad + 1));
          img = apply(TransformSpec::pad_crop(ox, oy, cfg.pad), img);
        }
        std::memcpy(xb.data() + i * px, img.data(), px * sizeof(double));
        yb[i] = all_labels[src];
      }

      if (cfg.regime == Regime::Adversarial || cfg.regime == Regime::SmoothAdv) {
        acfg.base_index = step_counter * cfg.batch_size;
        xb = pgd(m, xb, yb, acfg).x_adv;
      }
      if (cfg.regime == Regime::Gaussian || cfg.regime == Regime::SmoothAdv) {
        double* p = xb.data();  // additive noise, deliberately unclipped
        for (size_t i = 0; i < xb.numel(); ++i) p[i] += cfg.sigma * aug_rng.normal();
      }

      ad::Tape tp;
      ad::Var x = tp.constant(xb);
      ad::Var k1 = tp.leaf(m.k1());
      ad::Var k2 = tp.leaf(m.k2());
      ad::Var wv = tp.leaf(m.w());
      ad::Var loss = ad::softmax_cross_entropy(classifier_scores(tp, x, k1, k2, wv), yb);
      const double loss_val = tp.value(loss.id)[0];
      if (!std::isfinite(loss_val))
        throw NumericalError("train: non-finite loss at epoch " + std::to_string(epoch) +
                             " batch " + std::to_string(start / cfg.batch_size));
      ad::backward(tp, loss);
      sgd_step(m.k1(), vk1, tp.grad(k1.id), cfg.momentum, cfg.lr);
      sgd_step(m.k2(), vk2, tp.grad(k2.id), cfg.momentum, cfg.lr);
      sgd_step(m.w(), vw, tp.grad(wv.id), cfg.momentum, cfg.lr);
      loss_sum += loss_val * nb;
      ++step_counter;
    }
    result.epoch_loss.push_back(loss_sum / n);
  }
  m.set_regime(regime_name(cfg.regime));
  return result;
}

}  // namespace tte
