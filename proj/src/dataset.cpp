#include "tte/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <numeric>

#include "tte/errors.hpp"
#include "tte/rng.hpp"

namespace tte {

namespace {

constexpr uint16_t kFormatVersion = 1;

void put_u16(std::string& s, uint16_t v) {
  s.push_back(char(v & 0xff));
  s.push_back(char(v >> 8));
}

void put_u32(std::string& s, uint32_t v) {
  for (int i = 0; i < 4; ++i) s.push_back(char((v >> (8 * i)) & 0xff));
}

void put_f32(std::string& s, float v) {
  uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(s, bits);
}

struct Reader {
  const uint8_t* p;
  size_t left;
  void need(size_t n) {
    if (left < n) throw DataError("dataset: truncated file");
  }
  uint16_t u16() {
    need(2);
    uint16_t v = uint16_t(p[0]) | uint16_t(p[1]) << 8;
    p += 2;
    left -= 2;
    return v;
  }
  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= uint32_t(p[i]) << (8 * i);
    p += 4;
    left -= 4;
    return v;
  }
  float f32() {
    uint32_t bits = u32();
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }
  uint8_t u8() {
    need(1);
    uint8_t v = *p++;
    --left;
    return v;
  }
};

}  // namespace

Tensor Dataset::image(int i) const {
  const int64_t plane = int64_t(c()) * h() * w();
  Tensor out({1, c(), h(), w()});
  std::memcpy(out.data(), images.data() + int64_t(i) * plane, plane * sizeof(double));
  return out;
}

int glyph_radius(int h, int w) { return std::max(1, std::min(h, w) / 2 - 7); }

bool glyph_stencil(int cls, double dx, double dy, double r) {
  const double adx = std::fabs(dx), ady = std::fabs(dy);
  const double d2 = dx * dx + dy * dy;
  const double arm = std::max(0.5, r / 4.0);
  switch (cls) {
    case 0:  // disk
      return d2 <= r * r;
    case 1: {  // ring
      const double inner = r <= 2.0 ? 0.55 * r : r - 1.4;
      return d2 <= r * r && d2 > inner * inner;
    }
    case 2:  // plus
      return (adx <= arm && ady <= r) || (ady <= arm && adx <= r);
    case 3: {  // checkerboard square
      if (adx > r || ady > r) return false;
      const long px = std::lround(dx), py = std::lround(dy);
      return ((px + py) & 1) == 0;
    }
    case 4: {  // square frame
      const double m = std::max(adx, ady);
      return m <= r && m > r - std::max(1.0, 0.45 * r);
    }
    case 5:  // filled square
      return std::max(adx, ady) <= std::max(0.8, 0.72 * r);
    case 6:  // X
      return std::fabs(adx - ady) <= arm && std::max(adx, ady) <= r;
    case 7:  // vertical bar
      return adx <= arm && ady <= r;
    case 8:  // horizontal bar
      return ady <= arm && adx <= r;
    case 9: {  // dot in ring
      const double dot = std::max(0.6, 0.35 * r);
      return d2 <= dot * dot || (d2 <= r * r && d2 > (r - 1.0) * (r - 1.0));
    }
    default:
      throw DataError("glyph_stencil: unknown class " + std::to_string(cls));
  }
}

Tensor render_glyph(int cls, double cx, double cy, double intensity, int h, int w, double r) {
  Tensor plane({h, w});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (glyph_stencil(cls, x - cx, y - cy, r)) plane[int64_t(y) * w + x] = intensity;
  return plane;
}

Dataset generate(int n, int classes, int h, int w, uint64_t seed) {
  if (n < 1) throw DataError("generate: need at least one sample");
  if (h < 16 || w < 16) throw DataError("generate: h,w must be >= 16");
  if (classes < 2 || classes > 10) throw DataError("generate: classes must be in [2,10]");

  const double r = glyph_radius(h, w);
  const double c0x = (w - 1) / 2.0, c0y = (h - 1) / 2.0;
  Dataset ds;
  ds.images = Tensor({n, 1, h, w});
  ds.labels.resize(n);
  ds.num_classes = classes;
  ds.seed = seed;

  Rng rng(seed);
  for (int i = 0; i < n; ++i) {
    const int cls = int(rng.below(uint64_t(classes)));
    const double cx = c0x + rng.uniform(-3.0, 3.0);
    const double cy = c0y + rng.uniform(-3.0, 3.0);
    const double intensity = rng.uniform(0.4, 1.0);
    ds.labels[i] = uint8_t(cls);
    double* img = ds.images.data() + ds.images.offset4(i, 0, 0, 0);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double v = glyph_stencil(cls, x - cx, y - cy, r) ? intensity : 0.0;
        v += 0.1 * rng.next_unit();
        v = std::clamp(v, 0.0, 1.0);
        img[int64_t(y) * w + x] = double(float(v));  // quantize for exact f32 round-trip
      }
  }
  return ds;
}

void save(const Dataset& ds, const std::string& path) {
  if (ds.num_classes < 1 || ds.num_classes > 255) throw DataError("save: classes out of range for u8 labels");
  if (ds.labels.size() != size_t(ds.b())) throw DataError("save: label count mismatch");
  std::string buf;
  buf.reserve(30 + size_t(ds.images.numel()) * 4 + ds.labels.size());
  buf += "TTED";
  put_u16(buf, kFormatVersion);
  put_u32(buf, uint32_t(ds.b()));
  put_u32(buf, uint32_t(ds.c()));
  put_u32(buf, uint32_t(ds.h()));
  put_u32(buf, uint32_t(ds.w()));
  put_u32(buf, uint32_t(ds.num_classes));
  for (int64_t i = 0; i < ds.images.numel(); ++i) put_f32(buf, float(ds.images[i]));
  for (uint8_t l : ds.labels) buf.push_back(char(l));

  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw DataError("save: cannot open " + path);
  const size_t written = std::fwrite(buf.data(), 1, buf.size(), f);
  std::fclose(f);
  if (written != buf.size()) throw DataError("save: short write to " + path);
}

Dataset load(const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) throw DataError("load: cannot open " + path);
  std::string buf;
  char chunk[65536];
  size_t got;
  while ((got = std::fread(chunk, 1, sizeof chunk, f)) > 0) buf.append(chunk, got);
  std::fclose(f);

  Reader rd{reinterpret_cast<const uint8_t*>(buf.data()), buf.size()};
  rd.need(4);
  if (std::memcmp(rd.p, "TTED", 4) != 0) throw DataError("load: bad magic in " + path);
  rd.p += 4;
  rd.left -= 4;
  const uint16_t version = rd.u16();
  if (version != kFormatVersion) throw DataError("load: unsupported version " + std::to_string(version));
  const uint32_t b = rd.u32(), c = rd.u32(), h = rd.u32(), w = rd.u32(), n = rd.u32();
  if (b == 0 || c == 0 || h == 0 || w == 0 || n == 0) throw DataError("load: zero dimension in header");
  const uint64_t pix = uint64_t(b) * c * h * w;
  if (pix > (uint64_t(1) << 31)) throw DataError("load: dim overflow");
  if (rd.left != pix * 4 + b) throw DataError("load: file length does not match header");

  Dataset ds;
  ds.images = Tensor({int(b), int(c), int(h), int(w)});
  ds.num_classes = int(n);
  for (uint64_t i = 0; i < pix; ++i) ds.images[int64_t(i)] = double(rd.f32());
  ds.labels.resize(b);
  for (uint32_t i = 0; i < b; ++i) {
    ds.labels[i] = rd.u8();
    if (ds.labels[i] >= n) throw DataError("load: label out of range");
  }
  return ds;
}

namespace {

Dataset gather(const Dataset& ds, const std::vector<int>& idx) {
  Dataset out;
  out.images = Tensor({int(idx.size()), ds.c(), ds.h(), ds.w()});
  out.labels.resize(idx.size());
  out.num_classes = ds.num_classes;
  out.seed = ds.seed;
  const int64_t plane = int64_t(ds.c()) * ds.h() * ds.w();
  for (size_t i = 0; i < idx.size(); ++i) {
    std::memcpy(out.images.data() + int64_t(i) * plane, ds.images.data() + int64_t(idx[i]) * plane,
                plane * sizeof(double));
    out.labels[i] = ds.labels[idx[i]];
  }
  return out;
}

}  // namespace

std::pair<Dataset, Dataset> split(const Dataset& ds, double train_fraction, uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw DataError("split: fraction must be in (0,1)");
  const int b = ds.b();
  const int k = int(std::llround(train_fraction * b));
  if (k <= 0 || k >= b) throw DataError("split: degenerate split sizes");

  std::vector<int> perm(b);
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(seed, 424242);
  for (int i = b - 1; i > 0; --i) std::swap(perm[i], perm[rng.below(uint64_t(i) + 1)]);

  return {gather(ds, {perm.begin(), perm.begin() + k}), gather(ds, {perm.begin() + k, perm.end()})};
}

Dataset take(const Dataset& ds, int k) {
  if (k < 1 || k > ds.b()) throw DataError("take: bad count");
  std::vector<int> idx(k);
  std::iota(idx.begin(), idx.end(), 0);
  return gather(ds, idx);
}

std::vector<int> labels_int(const Dataset& ds) {
  return std::vector<int>(ds.labels.begin(), ds.labels.end());
}

}  // namespace tte
