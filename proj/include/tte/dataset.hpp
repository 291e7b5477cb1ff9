#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "tte/tensor.hpp"

namespace tte {

// Synthetic glyph dataset. Glyph classes are mirror-symmetric, so a
// horizontal flip preserves the label, and the center jitter (+-3 px) plus
// glyph radius leave a 4 px margin, so pad-and-crop translations are
// label-preserving too.
struct Dataset {
  Tensor images;  // [B,C,H,W], values in [0,1], quantized to float32 precision
  std::vector<uint8_t> labels;
  int num_classes = 0;
  uint64_t seed = 0;  // generator seed; 0 when loaded from a file

  int b() const { return images.dim(0); }
  int c() const { return images.dim(1); }
  int h() const { return images.dim(2); }
  int w() const { return images.dim(3); }
  Tensor image(int i) const;  // [1,C,H,W] copy of one sample
};

Dataset generate(int n, int classes, int h, int w, uint64_t seed);
void save(const Dataset& ds, const std::string& path);
Dataset load(const std::string& path);
std::pair<Dataset, Dataset> split(const Dataset& ds, double train_fraction, uint64_t seed);
Dataset take(const Dataset& ds, int k);  // first k samples

std::vector<int> labels_int(const Dataset& ds);

// Glyph construction internals, exposed so tests can verify the invariants
// structurally rather than through a classifier.
int glyph_radius(int h, int w);                                 // max(1, min(h,w)/2 - 7)
bool glyph_stencil(int cls, double dx, double dy, double r);    // mirror-symmetric in dx
Tensor render_glyph(int cls, double cx, double cy, double intensity, int h, int w, double r);

}  // namespace tte
