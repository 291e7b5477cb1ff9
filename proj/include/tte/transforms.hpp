#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tte/autodiff.hpp"
#include "tte/tensor.hpp"

namespace tte {

enum class TransformKind { Identity, Flip, PadCrop, FlipPadCrop, Gaussian };

// A fixed, deterministic, differentiable image transform. Parameters are set
// at construction and never change; apply() is a pure function of (spec, x).
struct TransformSpec {
  TransformKind kind = TransformKind::Identity;
  int o_x = 0, o_y = 0, pad = 0;  // PadCrop / FlipPadCrop, offsets in [0, 2*pad]
  int k = 3;                      // Gaussian, odd
  double sigma = 1.0;             // Gaussian, > 0

  static TransformSpec identity();
  static TransformSpec flip();
  static TransformSpec pad_crop(int o_x, int o_y, int pad);
  static TransformSpec flip_pad_crop(int o_x, int o_y, int pad);
  static TransformSpec gaussian(int k, double sigma);

  bool operator==(const TransformSpec&) const = default;
};

// Shape-preserving: output is [B,C,H,W] like x. PadCrop zero-pads by `pad`
// then slices an HxW window at (o_y, o_x); FlipPadCrop flips after cropping.
Tensor apply(const TransformSpec& spec, const Tensor& x);
// Same map recorded on a tape, differentiable through x.
ad::Var apply(ad::Tape& tp, const TransformSpec& spec, ad::Var x);

// Normalized kxk Gaussian weights as [1,1,k,k]; truncated at k, sums to 1.
Tensor gaussian_kernel(int k, double sigma);

// n distinct (o_x, o_y) pairs drawn seed-deterministically from the
// (2*pad+1)^2 grid. Prefix-consistent: the first m specs for count n >= m
// equal the specs for count m under the same seed, so ablation rows of
// increasing n share their crops (nested sets). flip_variants appends one
// FlipPadCrop twin per crop, same offsets, after all crops.
std::vector<TransformSpec> random_crop_set(int n, int pad, bool flip_variants, uint64_t seed);

// All (2*pad+1)^2 PadCrop specs in row-major (o_y, o_x) order.
std::vector<TransformSpec> enumerate_crops(int pad);

// The 14 ablation rows: "none", "flip", "1crop".."4crops",
// "flip+1crop".."flip+4crops", "flip+1crop+1flipped".."flip+4crops+4flipped".
std::vector<TransformSpec> named_set(const std::string& name, int pad, uint64_t seed);
std::vector<std::string> named_set_names();

// Manifest text form: `kind(params)` tokens, comma-separated. parse is the
// exact inverse of serialize (doubles carried at full precision).
std::string serialize(const std::vector<TransformSpec>& specs);
std::vector<TransformSpec> parse_transforms(const std::string& text);

}  // namespace tte
