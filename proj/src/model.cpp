#include "tte/model.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <memory>

#include "tte/errors.hpp"
#include "tte/kernels.hpp"
#include "tte/rng.hpp"

namespace tte {

namespace {

constexpr int kF1 = 8, kF2 = 16, kK = 3;
constexpr uint64_t kInitStream = 313000;  // module-unique rng stream tag
constexpr const char* kCkptArch = "conv8-conv16-dense";

void he_fill(Tensor& t, int fan_in, Rng& rng) {
  const double s = std::sqrt(2.0 / fan_in);
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = s * rng.normal();
}

void put_u64(std::string& s, uint64_t v) {
  for (int i = 0; i < 8; ++i) s.push_back(char((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& s, double v) {
  uint64_t bits;
  std::memcpy(&bits, &v, 8);
  put_u64(s, bits);
}

double get_f64(const uint8_t* p) {
  uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= uint64_t(p[i]) << (8 * i);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

}  // namespace

Classifier::Classifier(int in_c, int in_h, int in_w, int classes, uint64_t seed)
    : in_c_(in_c), in_h_(in_h), in_w_(in_w), classes_(classes), init_seed_(seed) {
  if (in_c < 1 || in_h < 1 || in_w < 1 || classes < 2)
    throw ConfigError("classifier: need positive dims and >= 2 classes");
  k1_ = Tensor({kF1, in_c, kK, kK});
  k2_ = Tensor({kF2, kF1, kK, kK});
  w_ = Tensor({kF2 * in_h * in_w, classes});
  Rng rng(seed, kInitStream);
  he_fill(k1_, in_c * kK * kK, rng);
  he_fill(k2_, kF1 * kK * kK, rng);
  he_fill(w_, kF2 * in_h * in_w, rng);
}

Tensor Classifier::forward(const Tensor& x) const {
  if (x.ndim() != 4 || x.dim(1) != in_c_ || x.dim(2) != in_h_ || x.dim(3) != in_w_)
    throw ConfigError("classifier forward: input shape " + x.shape_str() + " does not match model");
  Tensor h1 = kernels::relu(kernels::conv2d(x, k1_));
  Tensor h2 = kernels::relu(kernels::conv2d(h1, k2_));
  Tensor flat = h2.reshaped({x.dim(0), kF2 * in_h_ * in_w_});
  return kernels::matmul(flat, w_);
}

ad::Var Classifier::forward_diff(ad::Tape& tp, ad::Var x) const {
  return classifier_scores(tp, x, tp.constant(k1_), tp.constant(k2_), tp.constant(w_));
}

ad::Var classifier_scores(ad::Tape& tp, ad::Var x, ad::Var k1, ad::Var k2, ad::Var w) {
  (void)tp;
  ad::Var h1 = ad::relu(ad::conv2d(x, k1));
  ad::Var h2 = ad::relu(ad::conv2d(h1, k2));
  const int b = x.value().dim(0);
  const int d = int(h2.value().numel() / b);
  ad::Var flat = ad::reshape(h2, {b, d});
  return ad::matmul(flat, w);
}

std::vector<int> argmax_rows(const Tensor& scores) {
  const int b = scores.dim(0), n = scores.dim(1);
  std::vector<int> out(b);
  for (int i = 0; i < b; ++i) {
    const double* row = scores.data() + int64_t(i) * n;
    int best = 0;
    for (int j = 1; j < n; ++j)
      if (row[j] > row[best]) best = j;
    out[i] = best;
  }
  return out;
}

std::vector<int> predict(const ScoreModel& m, const Tensor& x) {
  return argmax_rows(m.forward(x));
}

double evaluate_clean(const ScoreModel& m, const Dataset& ds) {
  // chunked to bound peak memory; per-sample results are batch-independent
  const int chunk = 256;
  const int64_t plane = int64_t(ds.c()) * ds.h() * ds.w();
  int correct = 0;
  for (int start = 0; start < ds.b(); start += chunk) {
    const int n = std::min(chunk, ds.b() - start);
    Tensor xs({n, ds.c(), ds.h(), ds.w()});
    std::memcpy(xs.data(), ds.images.data() + start * plane, size_t(n) * plane * sizeof(double));
    const std::vector<int> pred = predict(m, xs);
    for (int i = 0; i < n; ++i)
      if (pred[i] == int(ds.labels[size_t(start) + i])) ++correct;
  }
  return double(correct) / ds.b();
}

void save_checkpoint(const Classifier& m, const std::string& path) {
  std::string buf;
  char head[256];
  std::snprintf(head, sizeof head,
                "TTECKPT 1\narch %s\ninput %d %d %d\nclasses %d\nseed %llu\nregime %s\nparams %lld\n",
                kCkptArch, m.in_c(), m.in_h(), m.in_w(), m.num_classes(),
                (unsigned long long)m.init_seed(), m.regime().c_str(),
                (long long)m.param_count());
  buf = head;
  for (const Tensor* t : {&m.k1(), &m.k2(), &m.w()})
    for (int64_t i = 0; i < t->numel(); ++i) put_f64(buf, (*t)[i]);

  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw DataError("checkpoint: cannot open for write: " + path);
  const size_t wrote = std::fwrite(buf.data(), 1, buf.size(), f);
  if (std::fclose(f) != 0 || wrote != buf.size())
    throw DataError("checkpoint: short write: " + path);
}

Classifier load_checkpoint(const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) throw DataError("checkpoint: cannot open: " + path);
  std::string buf;
  char tmp[65536];
  size_t got;
  while ((got = std::fread(tmp, 1, sizeof tmp, f)) > 0) buf.append(tmp, got);
  std::fclose(f);

  // header is the first 7 newline-terminated lines
  size_t pos = 0;
  auto line = [&]() {
    const size_t nl = buf.find('\n', pos);
    if (nl == std::string::npos) throw DataError("checkpoint: truncated header");
    std::string l = buf.substr(pos, nl - pos);
    pos = nl + 1;
    return l;
  };
  if (line() != "TTECKPT 1") throw DataError("checkpoint: bad magic or version");
  char arch[128] = {0}, regime[128] = {0};
  int c = 0, h = 0, w = 0, n = 0;
  unsigned long long seed = 0;
  long long params = 0;
  if (std::sscanf(line().c_str(), "arch %127s", arch) != 1 || std::string(arch) != kCkptArch)
    throw DataError("checkpoint: unknown architecture");
  if (std::sscanf(line().c_str(), "input %d %d %d", &c, &h, &w) != 3)
    throw DataError("checkpoint: bad input line");
  if (std::sscanf(line().c_str(), "classes %d", &n) != 1)
    throw DataError("checkpoint: bad classes line");
  if (std::sscanf(line().c_str(), "seed %llu", &seed) != 1)
    throw DataError("checkpoint: bad seed line");
  if (std::sscanf(line().c_str(), "regime %127s", regime) != 1)
    throw DataError("checkpoint: bad regime line");
  if (std::sscanf(line().c_str(), "params %lld", &params) != 1)
    throw DataError("checkpoint: bad params line");

  Classifier m(c, h, w, n, seed);
  m.set_regime(regime);
  if (params != m.param_count()) throw DataError("checkpoint: parameter count mismatch");
  if (buf.size() - pos != size_t(params) * 8) throw DataError("checkpoint: parameter block length mismatch");

  const uint8_t* p = reinterpret_cast<const uint8_t*>(buf.data()) + pos;
  for (Tensor* t : {&m.k1(), &m.k2(), &m.w()})
    for (int64_t i = 0; i < t->numel(); ++i, p += 8) (*t)[i] = get_f64(p);
  return m;
}

}  // namespace tte
