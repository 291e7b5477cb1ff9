#include "tte/ensemble.hpp"

#include "tte/kernels.hpp"

namespace tte {

EnsembleModel EnsembleModel::wrap(const ScoreModel& base, std::vector<TransformSpec> transforms) {
  std::vector<TransformSpec> ts;
  ts.reserve(transforms.size() + 1);
  ts.push_back(TransformSpec::identity());
  ts.insert(ts.end(), transforms.begin(), transforms.end());
  return EnsembleModel(base, std::move(ts));
}

Tensor EnsembleModel::forward(const Tensor& x) const {
  Tensor acc = base_->forward(apply(transforms_[0], x));
  for (size_t t = 1; t < transforms_.size(); ++t)
    kernels::acc_add(acc, base_->forward(apply(transforms_[t], x)));
  return kernels::scale(acc, 1.0 / double(transforms_.size()));
}

ad::Var EnsembleModel::forward_diff(ad::Tape& tp, ad::Var x) const {
  ad::Var acc = base_->forward_diff(tp, apply(tp, transforms_[0], x));
  for (size_t t = 1; t < transforms_.size(); ++t)
    acc = ad::add(acc, base_->forward_diff(tp, apply(tp, transforms_[t], x)));
  return ad::scale(acc, 1.0 / double(transforms_.size()));
}

}  // namespace tte
