#pragma once

#include <vector>

#include "tte/model.hpp"
#include "tte/transforms.hpp"

namespace tte {

// Test-time transformation ensemble: forward = (1/T) * sum_t base(t(x)),
// averaging pre-softmax scores in fixed member order. Identity is always
// member 0; the base model is wrapped untouched, never re-trained.
class EnsembleModel final : public ScoreModel {
 public:
  static EnsembleModel wrap(const ScoreModel& base, std::vector<TransformSpec> transforms);

  int num_classes() const override { return base_->num_classes(); }
  Tensor forward(const Tensor& x) const override;
  ad::Var forward_diff(ad::Tape& tp, ad::Var x) const override;

  const std::vector<TransformSpec>& transforms() const { return transforms_; }
  int members() const { return int(transforms_.size()); }

 private:
  EnsembleModel(const ScoreModel& base, std::vector<TransformSpec> ts)
      : base_(&base), transforms_(std::move(ts)) {}
  const ScoreModel* base_;
  std::vector<TransformSpec> transforms_;  // [0] is Identity
};

// A base model viewed through one fixed transform (no averaging); the
// heatmap's per-crop models are built from these.
class ComposedModel final : public ScoreModel {
 public:
  ComposedModel(const ScoreModel& base, TransformSpec pre) : base_(&base), pre_(pre) {}
  int num_classes() const override { return base_->num_classes(); }
  Tensor forward(const Tensor& x) const override { return base_->forward(apply(pre_, x)); }
  ad::Var forward_diff(ad::Tape& tp, ad::Var x) const override {
    return base_->forward_diff(tp, apply(tp, pre_, x));
  }

 private:
  const ScoreModel* base_;
  TransformSpec pre_;
};

}  // namespace tte
