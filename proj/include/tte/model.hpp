#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tte/autodiff.hpp"
#include "tte/dataset.hpp"
#include "tte/tensor.hpp"

namespace tte {

// Anything that maps an image batch to pre-softmax scores. forward_diff
// records the same map on a tape with the model parameters held constant,
// so backward() yields d(scores)/d(x) only.
struct ScoreModel {
  virtual ~ScoreModel() = default;
  virtual int num_classes() const = 0;
  virtual Tensor forward(const Tensor& x) const = 0;
  virtual ad::Var forward_diff(ad::Tape& tp, ad::Var x) const = 0;
};

// conv3x3(C->8) relu conv3x3(8->16) relu flatten dense(->N), no biases.
// Spatial size is preserved by the same-padding convs, so the dense layer
// pins the input H, W at init time.
class Classifier final : public ScoreModel {
 public:
  Classifier(int in_c, int in_h, int in_w, int classes, uint64_t seed);

  int num_classes() const override { return classes_; }
  Tensor forward(const Tensor& x) const override;
  ad::Var forward_diff(ad::Tape& tp, ad::Var x) const override;

  int in_c() const { return in_c_; }
  int in_h() const { return in_h_; }
  int in_w() const { return in_w_; }
  uint64_t init_seed() const { return init_seed_; }

  // training regime tag carried into checkpoints and manifests
  const std::string& regime() const { return regime_; }
  void set_regime(std::string r) { regime_ = std::move(r); }

  Tensor& k1() { return k1_; }
  Tensor& k2() { return k2_; }
  Tensor& w() { return w_; }
  const Tensor& k1() const { return k1_; }
  const Tensor& k2() const { return k2_; }
  const Tensor& w() const { return w_; }
  int64_t param_count() const { return k1_.numel() + k2_.numel() + w_.numel(); }

 private:
  int in_c_, in_h_, in_w_, classes_;
  uint64_t init_seed_;
  std::string regime_ = "untrained";
  Tensor k1_, k2_, w_;
};

// The classifier graph as a free function over explicit parameter nodes:
// training records parameters as leaves, forward_diff as constants.
ad::Var classifier_scores(ad::Tape& tp, ad::Var x, ad::Var k1, ad::Var k2, ad::Var w);

// argmax per row; ties break toward the lowest class index
std::vector<int> predict(const ScoreModel& m, const Tensor& x);
std::vector<int> argmax_rows(const Tensor& scores);

double evaluate_clean(const ScoreModel& m, const Dataset& ds);

// text header + little-endian f64 parameter block; round-trip is bitwise
void save_checkpoint(const Classifier& m, const std::string& path);
Classifier load_checkpoint(const std::string& path);

}  // namespace tte
