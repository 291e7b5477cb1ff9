#include "tte/transforms.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>

#include "tte/errors.hpp"
#include "tte/kernels.hpp"
#include "tte/rng.hpp"

namespace tte {

namespace {

constexpr uint64_t kCropStream = 777000;  // module-unique rng stream tag

void validate(const TransformSpec& s) {
  switch (s.kind) {
    case TransformKind::Identity:
    case TransformKind::Flip:
      return;
    case TransformKind::PadCrop:
    case TransformKind::FlipPadCrop:
      if (s.pad < 0) throw ConfigError("transform: pad must be >= 0");
      if (s.o_x < 0 || s.o_x > 2 * s.pad || s.o_y < 0 || s.o_y > 2 * s.pad)
        throw ConfigError("transform: crop offsets must lie in [0, 2*pad]");
      return;
    case TransformKind::Gaussian:
      if (s.k < 1 || s.k % 2 == 0) throw ConfigError("transform: gaussian k must be odd");
      if (!(s.sigma > 0.0)) throw ConfigError("transform: gaussian sigma must be > 0");
      return;
  }
  throw ConfigError("transform: unknown kind");
}

// Gaussian as conv2d needs a [C,C,k,k] kernel with the weights on the channel
// diagonal (per-channel filtering, no cross-channel mixing).
Tensor depthwise_gaussian(int channels, int k, double sigma) {
  Tensor g = gaussian_kernel(k, sigma);
  Tensor kern({channels, channels, k, k});
  for (int c = 0; c < channels; ++c)
    for (int i = 0; i < k * k; ++i) kern[(int64_t(c) * channels + c) * k * k + i] = g[i];
  return kern;
}

}  // namespace

TransformSpec TransformSpec::identity() { return {}; }

TransformSpec TransformSpec::flip() {
  TransformSpec s;
  s.kind = TransformKind::Flip;
  return s;
}

TransformSpec TransformSpec::pad_crop(int o_x, int o_y, int pad) {
  TransformSpec s;
  s.kind = TransformKind::PadCrop;
  s.o_x = o_x;
  s.o_y = o_y;
  s.pad = pad;
  validate(s);
  return s;
}

TransformSpec TransformSpec::flip_pad_crop(int o_x, int o_y, int pad) {
  TransformSpec s = pad_crop(o_x, o_y, pad);
  s.kind = TransformKind::FlipPadCrop;
  return s;
}

TransformSpec TransformSpec::gaussian(int k, double sigma) {
  TransformSpec s;
  s.kind = TransformKind::Gaussian;
  s.k = k;
  s.sigma = sigma;
  validate(s);
  return s;
}

Tensor gaussian_kernel(int k, double sigma) {
  if (k < 1 || k % 2 == 0) throw ConfigError("gaussian_kernel: k must be odd");
  if (!(sigma > 0.0)) throw ConfigError("gaussian_kernel: sigma must be > 0");
  Tensor kern({1, 1, k, k});
  const int c = k / 2;
  double total = 0.0;
  for (int y = 0; y < k; ++y)
    for (int x = 0; x < k; ++x) {
      const double d2 = double(y - c) * (y - c) + double(x - c) * (x - c);
      const double w = std::exp(-d2 / (2.0 * sigma * sigma));
      kern[int64_t(y) * k + x] = w;
      total += w;
    }
  for (int64_t i = 0; i < kern.numel(); ++i) kern[i] /= total;
  return kern;
}

Tensor apply(const TransformSpec& s, const Tensor& x) {
  validate(s);
  if (x.ndim() != 4) throw ConfigError("apply: expected [B,C,H,W]");
  const int h = x.shape()[2], w = x.shape()[3];
  switch (s.kind) {
    case TransformKind::Identity:
      return x;
    case TransformKind::Flip:
      return kernels::flip_w(x);
    case TransformKind::PadCrop:
      return kernels::slice2d(kernels::pad2d(x, s.pad), s.o_y, s.o_x, h, w);
    case TransformKind::FlipPadCrop:
      return kernels::flip_w(kernels::slice2d(kernels::pad2d(x, s.pad), s.o_y, s.o_x, h, w));
    case TransformKind::Gaussian:
      return kernels::conv2d(x, depthwise_gaussian(x.shape()[1], s.k, s.sigma));
  }
  throw ConfigError("apply: unknown kind");
}

ad::Var apply(ad::Tape& tp, const TransformSpec& s, ad::Var x) {
  validate(s);
  if (x.value().ndim() != 4) throw ConfigError("apply: expected [B,C,H,W]");
  const int h = x.value().shape()[2], w = x.value().shape()[3];
  switch (s.kind) {
    case TransformKind::Identity:
      return x;
    case TransformKind::Flip:
      return ad::flip_w(x);
    case TransformKind::PadCrop:
      return ad::slice2d(ad::pad2d(x, s.pad), s.o_y, s.o_x, h, w);
    case TransformKind::FlipPadCrop:
      return ad::flip_w(ad::slice2d(ad::pad2d(x, s.pad), s.o_y, s.o_x, h, w));
    case TransformKind::Gaussian: {
      ad::Var kern = tp.constant(depthwise_gaussian(x.value().shape()[1], s.k, s.sigma));
      return ad::conv2d(x, kern);
    }
  }
  throw ConfigError("apply: unknown kind");
}

std::vector<TransformSpec> random_crop_set(int n, int pad, bool flip_variants, uint64_t seed) {
  if (n < 1) throw ConfigError("random_crop_set: n must be >= 1");
  if (pad < 0) throw ConfigError("random_crop_set: pad must be >= 0");
  const int side = 2 * pad + 1;
  const int grid = side * side;
  if (n > grid) throw ConfigError("random_crop_set: n exceeds crop grid size");

  // Partial Fisher-Yates over grid cells. Draw i touches only cells [0, i],
  // so smaller n yields a prefix of larger n under the same seed.
  std::vector<int> cells(grid);
  std::iota(cells.begin(), cells.end(), 0);
  Rng rng(seed, kCropStream);
  std::vector<TransformSpec> out;
  out.reserve(flip_variants ? 2 * size_t(n) : size_t(n));
  for (int i = 0; i < n; ++i) {
    const int j = i + int(rng.below(uint64_t(grid - i)));
    std::swap(cells[i], cells[j]);
    out.push_back(TransformSpec::pad_crop(cells[i] % side, cells[i] / side, pad));
  }
  if (flip_variants)
    for (int i = 0; i < n; ++i)
      out.push_back(TransformSpec::flip_pad_crop(out[i].o_x, out[i].o_y, pad));
  return out;
}

std::vector<TransformSpec> enumerate_crops(int pad) {
  if (pad < 0) throw ConfigError("enumerate_crops: pad must be >= 0");
  const int side = 2 * pad + 1;
  std::vector<TransformSpec> out;
  out.reserve(size_t(side) * side);
  for (int oy = 0; oy < side; ++oy)
    for (int ox = 0; ox < side; ++ox) out.push_back(TransformSpec::pad_crop(ox, oy, pad));
  return out;
}

std::vector<std::string> named_set_names() {
  std::vector<std::string> names = {"none", "flip"};
  const char* plural[] = {"1crop", "2crops", "3crops", "4crops"};
  for (const char* p : plural) names.push_back(p);
  for (const char* p : plural) names.push_back(std::string("flip+") + p);
  const char* twins[] = {"flip+1crop+1flipped", "flip+2crops+2flipped",
                         "flip+3crops+3flipped", "flip+4crops+4flipped"};
  for (const char* t : twins) names.push_back(t);
  return names;
}

std::vector<TransformSpec> named_set(const std::string& name, int pad, uint64_t seed) {
  const auto names = named_set_names();
  int idx = -1;
  for (size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) idx = int(i);
  if (idx < 0) throw ConfigError("named_set: unknown set name: " + name);

  if (idx == 0) return {};
  if (idx == 1) return {TransformSpec::flip()};
  std::vector<TransformSpec> out;
  if (idx >= 2 && idx <= 5) return random_crop_set(idx - 1, pad, false, seed);
  if (idx >= 6 && idx <= 9) {
    out.push_back(TransformSpec::flip());
    auto crops = random_crop_set(idx - 5, pad, false, seed);
    out.insert(out.end(), crops.begin(), crops.end());
    return out;
  }
  out.push_back(TransformSpec::flip());
  auto crops = random_crop_set(idx - 9, pad, true, seed);
  out.insert(out.end(), crops.begin(), crops.end());
  return out;
}

std::string serialize(const std::vector<TransformSpec>& specs) {
  std::string out;
  char buf[96];
  for (size_t i = 0; i < specs.size(); ++i) {
    const TransformSpec& s = specs[i];
    if (i) out += ",";
    switch (s.kind) {
      case TransformKind::Identity:
        out += "identity()";
        break;
      case TransformKind::Flip:
        out += "flip()";
        break;
      case TransformKind::PadCrop:
        std::snprintf(buf, sizeof buf, "padcrop(%d,%d,%d)", s.o_x, s.o_y, s.pad);
        out += buf;
        break;
      case TransformKind::FlipPadCrop:
        std::snprintf(buf, sizeof buf, "flippadcrop(%d,%d,%d)", s.o_x, s.o_y, s.pad);
        out += buf;
        break;
      case TransformKind::Gaussian:
        std::snprintf(buf, sizeof buf, "gaussian(%d,%.17g)", s.k, s.sigma);
        out += buf;
        break;
    }
  }
  return out;
}

namespace {

// Splits "a(1,2),b()" into tokens at depth-zero commas.
std::vector<std::string> split_tokens(const std::string& text) {
  std::vector<std::string> tokens;
  std::string cur;
  int depth = 0;
  for (char ch : text) {
    if (ch == ' ' || ch == '\t') continue;
    if (ch == '(') ++depth;
    if (ch == ')') --depth;
    if (depth < 0) throw ConfigError("parse_transforms: unbalanced parentheses");
    if (ch == ',' && depth == 0) {
      tokens.push_back(cur);
      cur.clear();
    } else {
      cur += ch;
    }
  }
  if (depth != 0) throw ConfigError("parse_transforms: unbalanced parentheses");
  if (!cur.empty() || !tokens.empty()) tokens.push_back(cur);
  return tokens;
}

std::vector<std::string> split_args(const std::string& inner) {
  std::vector<std::string> args;
  if (inner.empty()) return args;
  std::string cur;
  for (char ch : inner) {
    if (ch == ',') {
      args.push_back(cur);
      cur.clear();
    } else {
      cur += ch;
    }
  }
  args.push_back(cur);
  return args;
}

int parse_int(const std::string& s) {
  size_t pos = 0;
  int v = 0;
  try {
    v = std::stoi(s, &pos);
  } catch (const std::exception&) {
    throw ConfigError("parse_transforms: bad integer: " + s);
  }
  if (pos != s.size()) throw ConfigError("parse_transforms: bad integer: " + s);
  return v;
}

double parse_double(const std::string& s) {
  size_t pos = 0;
  double v = 0;
  try {
    v = std::stod(s, &pos);
  } catch (const std::exception&) {
    throw ConfigError("parse_transforms: bad number: " + s);
  }
  if (pos != s.size()) throw ConfigError("parse_transforms: bad number: " + s);
  return v;
}

}  // namespace

std::vector<TransformSpec> parse_transforms(const std::string& text) {
  std::vector<TransformSpec> out;
  for (const std::string& tok : split_tokens(text)) {
    const size_t open = tok.find('(');
    if (open == std::string::npos || tok.back() != ')')
      throw ConfigError("parse_transforms: malformed token: " + tok);
    const std::string kind = tok.substr(0, open);
    const auto args = split_args(tok.substr(open + 1, tok.size() - open - 2));
    auto want = [&](size_t n) {
      if (args.size() != n)
        throw ConfigError("parse_transforms: wrong argument count in: " + tok);
    };
    if (kind == "identity") {
      want(0);
      out.push_back(TransformSpec::identity());
    } else if (kind == "flip") {
      want(0);
      out.push_back(TransformSpec::flip());
    } else if (kind == "padcrop") {
      want(3);
      out.push_back(TransformSpec::pad_crop(parse_int(args[0]), parse_int(args[1]), parse_int(args[2])));
    } else if (kind == "flippadcrop") {
      want(3);
      out.push_back(
          TransformSpec::flip_pad_crop(parse_int(args[0]), parse_int(args[1]), parse_int(args[2])));
    } else if (kind == "gaussian") {
      want(2);
      out.push_back(TransformSpec::gaussian(parse_int(args[0]), parse_double(args[1])));
    } else {
      throw ConfigError("parse_transforms: unknown transform kind: " + kind);
    }
  }
  return out;
}

}  // namespace tte
