#include "tte/kernels.hpp"

#include <atomic>
#include <cmath>
#include <cstring>
#include <stdexcept>

namespace tte::kernels {

namespace {

std::atomic<bool> g_parallel{true};

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b))
    throw std::runtime_error(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " +
                             b.shape_str());
}

void check_4d(const Tensor& x, const char* op) {
  if (x.ndim() != 4) throw std::runtime_error(std::string(op) + ": expected 4-d tensor, got " + x.shape_str());
}

// kernel [F,C,K,K] with odd K; returns pad
int check_conv_args(const Tensor& x, const Tensor& k) {
  check_4d(x, "conv2d");
  if (k.ndim() != 4 || k.dim(2) != k.dim(3))
    throw std::runtime_error("conv2d: kernel must be [F,C,k,k], got " + k.shape_str());
  if (k.dim(2) % 2 == 0) throw std::runtime_error("conv2d: even kernel size " + k.shape_str());
  if (x.dim(1) != k.dim(1))
    throw std::runtime_error("conv2d: channel mismatch " + x.shape_str() + " vs " + k.shape_str());
  return k.dim(2) / 2;
}

// zero-padded copy of every [H,W] plane, giving the conv loops branch-free rows
Tensor pad_planes(const Tensor& x, int p) {
  const int b = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  Tensor out({b, c, h + 2 * p, w + 2 * p});
  const int wp = w + 2 * p;
  for (int i = 0; i < b; ++i)
    for (int j = 0; j < c; ++j) {
      const double* src = x.data() + x.offset4(i, j, 0, 0);
      double* dst = out.data() + out.offset4(i, j, p, p);
      for (int y = 0; y < h; ++y) std::memcpy(dst + int64_t(y) * wp, src + int64_t(y) * w, w * sizeof(double));
    }
  return out;
}

template <typename F>
Tensor map_ew(const Tensor& a, F f) {
  Tensor out(a.shape());
  const int64_t n = a.numel();
  const double* pa = a.data();
  double* po = out.data();
  const bool par = g_parallel.load() && n >= 16384;
#pragma omp parallel for if (par)
  for (int64_t i = 0; i < n; ++i) po[i] = f(pa[i]);
  return out;
}

template <typename F>
Tensor zip_ew(const Tensor& a, const Tensor& b, F f, const char* op) {
  check_same_shape(a, b, op);
  Tensor out(a.shape());
  const int64_t n = a.numel();
  const double* pa = a.data();
  const double* pb = b.data();
  double* po = out.data();
  const bool par = g_parallel.load() && n >= 16384;
#pragma omp parallel for if (par)
  for (int64_t i = 0; i < n; ++i) po[i] = f(pa[i], pb[i]);
  return out;
}

}  // namespace

bool parallel_enabled() { return g_parallel.load(); }
void set_parallel_enabled(bool on) { g_parallel.store(on); }

Tensor add(const Tensor& a, const Tensor& b) { return zip_ew(a, b, [](double x, double y) { return x + y; }, "add"); }
Tensor sub(const Tensor& a, const Tensor& b) { return zip_ew(a, b, [](double x, double y) { return x - y; }, "sub"); }
Tensor mul(const Tensor& a, const Tensor& b) { return zip_ew(a, b, [](double x, double y) { return x * y; }, "mul"); }
Tensor divide(const Tensor& a, const Tensor& b) { return zip_ew(a, b, [](double x, double y) { return x / y; }, "divide"); }

Tensor scale(const Tensor& a, double c) { return map_ew(a, [c](double x) { return x * c; }); }
Tensor add_scalar(const Tensor& a, double c) { return map_ew(a, [c](double x) { return x + c; }); }
Tensor rsub_scalar(double c, const Tensor& a) { return map_ew(a, [c](double x) { return c - x; }); }
Tensor rdiv_scalar(double c, const Tensor& a) { return map_ew(a, [c](double x) { return c / x; }); }
Tensor div_scalar(const Tensor& a, double c) { return map_ew(a, [c](double x) { return x / c; }); }

Tensor relu(const Tensor& a) { return map_ew(a, [](double x) { return x > 0.0 ? x : 0.0; }); }
Tensor relu_mask_mul(const Tensor& x, const Tensor& g) {
  return zip_ew(x, g, [](double xv, double gv) { return xv > 0.0 ? gv : 0.0; }, "relu_mask_mul");
}
Tensor exp_ew(const Tensor& a) { return map_ew(a, [](double x) { return std::exp(x); }); }
Tensor log_ew(const Tensor& a) { return map_ew(a, [](double x) { return std::log(x); }); }
Tensor negate(const Tensor& a) { return map_ew(a, [](double x) { return -x; }); }
Tensor sign_ew(const Tensor& a) {
  return map_ew(a, [](double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}
Tensor clamp(const Tensor& a, double lo, double hi) {
  return map_ew(a, [lo, hi](double x) { return x < lo ? lo : (x > hi ? hi : x); });
}
Tensor clamp_ball(const Tensor& a, const Tensor& center, double eps) {
  return zip_ew(a, center,
                [eps](double x, double c) {
                  double lo = c - eps, hi = c + eps;
                  return x < lo ? lo : (x > hi ? hi : x);
                },
                "clamp_ball");
}

void acc_add(Tensor& target, const Tensor& g) {
  check_same_shape(target, g, "acc_add");
  double* pt = target.data();
  const double* pg = g.data();
  const int64_t n = target.numel();
  for (int64_t i = 0; i < n; ++i) pt[i] += pg[i];
}

double reduce_sum(const Tensor& a) {
  double s = 0.0;
  const double* p = a.data();
  const int64_t n = a.numel();
  for (int64_t i = 0; i < n; ++i) s += p[i];
  return s;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(0))
    throw std::runtime_error("matmul: bad shapes " + a.shape_str() + " x " + b.shape_str());
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor out({m, n});
  const bool par = g_parallel.load() && int64_t(m) * k * n >= 32768;
#pragma omp parallel for if (par)
  for (int i = 0; i < m; ++i) {
    double* orow = out.data() + int64_t(i) * n;
    const double* arow = a.data() + int64_t(i) * k;
    for (int l = 0; l < k; ++l) {
      const double w = arow[l];
      const double* brow = b.data() + int64_t(l) * n;
      for (int j = 0; j < n; ++j) orow[j] = std::fma(w, brow[j], orow[j]);
    }
  }
  return out;
}

Tensor matmul_at_b(const Tensor& a, const Tensor& g) {
  if (a.ndim() != 2 || g.ndim() != 2 || a.dim(0) != g.dim(0))
    throw std::runtime_error("matmul_at_b: bad shapes " + a.shape_str() + " x " + g.shape_str());
  const int m = a.dim(0), k = a.dim(1), n = g.dim(1);
  Tensor out({k, n});
  const bool par = g_parallel.load() && int64_t(m) * k * n >= 32768;
#pragma omp parallel for if (par)
  for (int i = 0; i < k; ++i) {
    double* orow = out.data() + int64_t(i) * n;
    for (int l = 0; l < m; ++l) {
      const double w = a.data()[int64_t(l) * k + i];
      const double* grow = g.data() + int64_t(l) * n;
      for (int j = 0; j < n; ++j) orow[j] = std::fma(w, grow[j], orow[j]);
    }
  }
  return out;
}

Tensor matmul_a_bt(const Tensor& g, const Tensor& b) {
  if (g.ndim() != 2 || b.ndim() != 2 || g.dim(1) != b.dim(1))
    throw std::runtime_error("matmul_a_bt: bad shapes " + g.shape_str() + " x " + b.shape_str());
  const int m = g.dim(0), n = g.dim(1), k = b.dim(0);
  Tensor out({m, k});
  const bool par = g_parallel.load() && int64_t(m) * k * n >= 32768;
#pragma omp parallel for if (par)
  for (int i = 0; i < m; ++i) {
    double* orow = out.data() + int64_t(i) * k;
    const double* grow = g.data() + int64_t(i) * n;
    for (int j = 0; j < k; ++j) {
      const double* brow = b.data() + int64_t(j) * n;
      double acc = 0.0;
      for (int l = 0; l < n; ++l) acc = std::fma(grow[l], brow[l], acc);
      orow[j] = acc;
    }
  }
  return out;
}

Tensor conv2d(const Tensor& x, const Tensor& k) {
  const int pad = check_conv_args(x, k);
  const int b = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int f = k.dim(0), ks = k.dim(2);
  const int wp = w + 2 * pad;
  const Tensor xp = pad_planes(x, pad);
  Tensor out({b, f, h, w});
  const bool par = g_parallel.load() && int64_t(b) * f * h * w >= 4096;
#pragma omp parallel for collapse(2) if (par)
  for (int i = 0; i < b; ++i)
    for (int fo = 0; fo < f; ++fo) {
      double* oplane = out.data() + out.offset4(i, fo, 0, 0);
      for (int j = 0; j < c; ++j) {
        const double* xplane = xp.data() + xp.offset4(i, j, 0, 0);
        const double* kbase = k.data() + k.offset4(fo, j, 0, 0);
        if (ks == 3 && w >= 4) {
          // fused 3-tap rows; tap order matches the generic path bit for bit
          for (int ky = 0; ky < 3; ++ky) {
            const double w0 = kbase[ky * 3], w1 = kbase[ky * 3 + 1], w2 = kbase[ky * 3 + 2];
            const double* ibase = xplane + int64_t(ky) * wp;
            for (int y = 0; y < h; ++y) {
              double* orow = oplane + int64_t(y) * w;
              const double* irow = ibase + int64_t(y) * wp;
              for (int xx = 0; xx < w; ++xx)
                orow[xx] = std::fma(w2, irow[xx + 2],
                                    std::fma(w1, irow[xx + 1], std::fma(w0, irow[xx], orow[xx])));
            }
          }
          continue;
        }
        for (int ky = 0; ky < ks; ++ky)
          for (int kx = 0; kx < ks; ++kx) {
            const double wt = kbase[ky * ks + kx];
            const double* ibase = xplane + int64_t(ky) * wp + kx;
            for (int y = 0; y < h; ++y) {
              double* orow = oplane + int64_t(y) * w;
              const double* irow = ibase + int64_t(y) * wp;
              for (int xx = 0; xx < w; ++xx) orow[xx] = std::fma(wt, irow[xx], orow[xx]);
            }
          }
      }
    }
  return out;
}

Tensor conv2d_input_grad(const Tensor& g, const Tensor& k) {
  check_4d(g, "conv2d_input_grad");
  const int pad = k.dim(2) / 2;
  const int b = g.dim(0), f = g.dim(1), h = g.dim(2), w = g.dim(3);
  const int c = k.dim(1), ks = k.dim(2);
  if (g.dim(1) != k.dim(0))
    throw std::runtime_error("conv2d_input_grad: filter mismatch " + g.shape_str() + " vs " + k.shape_str());
  const int wp = w + 2 * pad;
  const Tensor gp = pad_planes(g, pad);
  Tensor out({b, c, h, w});
  const bool par = g_parallel.load() && int64_t(b) * c * h * w >= 4096;
#pragma omp parallel for collapse(2) if (par)
  for (int i = 0; i < b; ++i)
    for (int j = 0; j < c; ++j) {
      double* oplane = out.data() + out.offset4(i, j, 0, 0);
      for (int fo = 0; fo < f; ++fo) {
        const double* gplane = gp.data() + gp.offset4(i, fo, 0, 0);
        const double* kbase = k.data() + k.offset4(fo, j, 0, 0);
        if (ks == 3 && w >= 4) {
          for (int ky = 0; ky < 3; ++ky) {
            const int r = 2 - ky;
            const double w0 = kbase[r * 3 + 2], w1 = kbase[r * 3 + 1], w2 = kbase[r * 3];
            const double* ibase = gplane + int64_t(ky) * wp;
            for (int y = 0; y < h; ++y) {
              double* orow = oplane + int64_t(y) * w;
              const double* irow = ibase + int64_t(y) * wp;
              for (int xx = 0; xx < w; ++xx)
                orow[xx] = std::fma(w2, irow[xx + 2],
                                    std::fma(w1, irow[xx + 1], std::fma(w0, irow[xx], orow[xx])));
            }
          }
          continue;
        }
        for (int ky = 0; ky < ks; ++ky)
          for (int kx = 0; kx < ks; ++kx) {
            const double wt = kbase[(ks - 1 - ky) * ks + (ks - 1 - kx)];
            const double* ibase = gplane + int64_t(ky) * wp + kx;
            for (int y = 0; y < h; ++y) {
              double* orow = oplane + int64_t(y) * w;
              const double* irow = ibase + int64_t(y) * wp;
              for (int xx = 0; xx < w; ++xx) orow[xx] = std::fma(wt, irow[xx], orow[xx]);
            }
          }
      }
    }
  return out;
}

Tensor conv2d_kernel_grad(const Tensor& x, const Tensor& g, int k_size) {
  check_4d(x, "conv2d_kernel_grad");
  check_4d(g, "conv2d_kernel_grad");
  if (k_size % 2 == 0) throw std::runtime_error("conv2d_kernel_grad: even kernel size");
  const int pad = k_size / 2;
  const int b = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int f = g.dim(1);
  const int wp = w + 2 * pad;
  const Tensor xp = pad_planes(x, pad);
  Tensor out({f, c, k_size, k_size});
  const bool par = g_parallel.load() && f * c >= 4;
#pragma omp parallel for collapse(2) if (par)
  for (int fo = 0; fo < f; ++fo)
    for (int j = 0; j < c; ++j) {
      double* kslice = out.data() + out.offset4(fo, j, 0, 0);
      for (int ky = 0; ky < k_size; ++ky)
        for (int kx = 0; kx < k_size; ++kx) {
          double total = 0.0;
          for (int i = 0; i < b; ++i) {
            const double* gplane = g.data() + g.offset4(i, fo, 0, 0);
            const double* ibase = xp.data() + xp.offset4(i, j, 0, 0) + int64_t(ky) * wp + kx;
            double acc = 0.0;
            for (int y = 0; y < h; ++y) {
              const double* grow = gplane + int64_t(y) * w;
              const double* irow = ibase + int64_t(y) * wp;
              for (int xx = 0; xx < w; ++xx) acc = std::fma(grow[xx], irow[xx], acc);
            }
            total += acc;
          }
          kslice[ky * k_size + kx] = total;
        }
    }
  return out;
}

Tensor pad2d(const Tensor& x, int p) {
  check_4d(x, "pad2d");
  if (p < 0) throw std::runtime_error("pad2d: negative pad");
  return pad_planes(x, p);
}

Tensor unpad2d(const Tensor& g, int p) {
  check_4d(g, "unpad2d");
  const int h = g.dim(2) - 2 * p, w = g.dim(3) - 2 * p;
  if (p < 0 || h <= 0 || w <= 0) throw std::runtime_error("unpad2d: bad pad for " + g.shape_str());
  return slice2d(g, p, p, h, w);
}

Tensor slice2d(const Tensor& x, int oy, int ox, int oh, int ow) {
  check_4d(x, "slice2d");
  if (oy < 0 || ox < 0 || oh <= 0 || ow <= 0 || oy + oh > x.dim(2) || ox + ow > x.dim(3))
    throw std::runtime_error("slice2d: window out of range for " + x.shape_str());
  const int b = x.dim(0), c = x.dim(1);
  Tensor out({b, c, oh, ow});
  for (int i = 0; i < b; ++i)
    for (int j = 0; j < c; ++j)
      for (int y = 0; y < oh; ++y)
        std::memcpy(out.data() + out.offset4(i, j, y, 0), x.data() + x.offset4(i, j, oy + y, ox),
                    ow * sizeof(double));
  return out;
}

Tensor scatter2d(const Tensor& g, int oy, int ox, int h, int w) {
  check_4d(g, "scatter2d");
  if (oy < 0 || ox < 0 || oy + g.dim(2) > h || ox + g.dim(3) > w)
    throw std::runtime_error("scatter2d: window out of range");
  const int b = g.dim(0), c = g.dim(1), oh = g.dim(2), ow = g.dim(3);
  Tensor out({b, c, h, w});
  for (int i = 0; i < b; ++i)
    for (int j = 0; j < c; ++j)
      for (int y = 0; y < oh; ++y)
        std::memcpy(out.data() + out.offset4(i, j, oy + y, ox), g.data() + g.offset4(i, j, y, 0),
                    ow * sizeof(double));
  return out;
}

Tensor flip_w(const Tensor& x) {
  check_4d(x, "flip_w");
  const int b = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  Tensor out(x.shape());
  for (int i = 0; i < b; ++i)
    for (int j = 0; j < c; ++j)
      for (int y = 0; y < h; ++y) {
        const double* src = x.data() + x.offset4(i, j, y, 0);
        double* dst = out.data() + out.offset4(i, j, y, 0);
        for (int xx = 0; xx < w; ++xx) dst[xx] = src[w - 1 - xx];
      }
  return out;
}

// ---- serial reference twins -------------------------------------------------
// Plain textbook loops, written independently of the fast paths above but with
// the same per-element accumulation order so parity is bitwise.

namespace ref {

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "ref::add");
  Tensor out(a.shape());
  for (int64_t i = 0; i < a.numel(); ++i) out[i] = a[i] + b[i];
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "ref::sub");
  Tensor out(a.shape());
  for (int64_t i = 0; i < a.numel(); ++i) out[i] = a[i] - b[i];
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "ref::mul");
  Tensor out(a.shape());
  for (int64_t i = 0; i < a.numel(); ++i) out[i] = a[i] * b[i];
  return out;
}

Tensor divide(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "ref::divide");
  Tensor out(a.shape());
  for (int64_t i = 0; i < a.numel(); ++i) out[i] = a[i] / b[i];
  return out;
}

Tensor scale(const Tensor& a, double c) {
  Tensor out(a.shape());
  for (int64_t i = 0; i < a.numel(); ++i) out[i] = a[i] * c;
  return out;
}

Tensor relu(const Tensor& a) {
  Tensor out(a.shape());
  for (int64_t i = 0; i < a.numel(); ++i) out[i] = a[i] > 0.0 ? a[i] : 0.0;
  return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor out({m, n});
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int l = 0; l < k; ++l) acc = std::fma(a[int64_t(i) * k + l], b[int64_t(l) * n + j], acc);
      out[int64_t(i) * n + j] = acc;
    }
  return out;
}

Tensor matmul_at_b(const Tensor& a, const Tensor& g) {
  const int m = a.dim(0), k = a.dim(1), n = g.dim(1);
  Tensor out({k, n});
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int l = 0; l < m; ++l) acc = std::fma(a[int64_t(l) * k + i], g[int64_t(l) * n + j], acc);
      out[int64_t(i) * n + j] = acc;
    }
  return out;
}

Tensor matmul_a_bt(const Tensor& g, const Tensor& b) {
  const int m = g.dim(0), n = g.dim(1), k = b.dim(0);
  Tensor out({m, k});
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < k; ++j) {
      double acc = 0.0;
      for (int l = 0; l < n; ++l) acc = std::fma(g[int64_t(i) * n + l], b[int64_t(j) * n + l], acc);
      out[int64_t(i) * k + j] = acc;
    }
  return out;
}

Tensor conv2d(const Tensor& x, const Tensor& k) {
  const int pad = check_conv_args(x, k);
  const int b = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int f = k.dim(0), ks = k.dim(2);
  Tensor out({b, f, h, w});
  for (int i = 0; i < b; ++i)
    for (int fo = 0; fo < f; ++fo)
      for (int y = 0; y < h; ++y)
        for (int xx = 0; xx < w; ++xx) {
          double acc = 0.0;
          for (int j = 0; j < c; ++j)
            for (int ky = 0; ky < ks; ++ky)
              for (int kx = 0; kx < ks; ++kx) {
                const int iy = y + ky - pad, ix = xx + kx - pad;
                if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
                acc = std::fma(x.at4(i, j, iy, ix), k.at4(fo, j, ky, kx), acc);
              }
          out.at4(i, fo, y, xx) = acc;
        }
  return out;
}

Tensor conv2d_input_grad(const Tensor& g, const Tensor& k) {
  const int pad = k.dim(2) / 2;
  const int b = g.dim(0), f = g.dim(1), h = g.dim(2), w = g.dim(3);
  const int c = k.dim(1), ks = k.dim(2);
  Tensor out({b, c, h, w});
  for (int i = 0; i < b; ++i)
    for (int j = 0; j < c; ++j)
      for (int y = 0; y < h; ++y)
        for (int xx = 0; xx < w; ++xx) {
          double acc = 0.0;
          for (int fo = 0; fo < f; ++fo)
            for (int ky = 0; ky < ks; ++ky)
              for (int kx = 0; kx < ks; ++kx) {
                const int oy = y + ky - pad, ox = xx + kx - pad;
                if (oy < 0 || oy >= h || ox < 0 || ox >= w) continue;
                acc = std::fma(g.at4(i, fo, oy, ox), k.at4(fo, j, ks - 1 - ky, ks - 1 - kx), acc);
              }
          out.at4(i, j, y, xx) = acc;
        }
  return out;
}

Tensor conv2d_kernel_grad(const Tensor& x, const Tensor& g, int k_size) {
  const int pad = k_size / 2;
  const int b = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int f = g.dim(1);
  Tensor out({f, c, k_size, k_size});
  for (int fo = 0; fo < f; ++fo)
    for (int j = 0; j < c; ++j)
      for (int ky = 0; ky < k_size; ++ky)
        for (int kx = 0; kx < k_size; ++kx) {
          double total = 0.0;
          for (int i = 0; i < b; ++i) {
            double acc = 0.0;
            for (int y = 0; y < h; ++y)
              for (int xx = 0; xx < w; ++xx) {
                const int iy = y + ky - pad, ix = xx + kx - pad;
                if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
                acc = std::fma(g.at4(i, fo, y, xx), x.at4(i, j, iy, ix), acc);
              }
            total += acc;
          }
          out.at4(fo, j, ky, kx) = total;
        }
  return out;
}

}  // namespace ref

}  // namespace tte::kernels
