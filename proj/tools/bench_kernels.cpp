// Times the OpenMP kernels against the serial reference implementations.
#include <chrono>
#include <cstdio>
#include <functional>

#include "tte/kernels.hpp"
#include "tte/rng.hpp"

using namespace tte;
using Clock = std::chrono::steady_clock;

namespace {

Tensor random_tensor(std::vector<int> shape, uint64_t seed) {
  Tensor t(std::move(shape));
  Rng rng(seed);
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(-1.0, 1.0);
  return t;
}

double time_best_of(int reps, const std::function<void()>& fn) {
  double best = 1e100;
  for (int r = 0; r < reps; ++r) {
    auto t0 = Clock::now();
    fn();
    auto t1 = Clock::now();
    best = std::min(best, std::chrono::duration<double>(t1 - t0).count());
  }
  return best;
}

void report(const char* name, double flops, double t_ref, double t_par) {
  std::printf("%-24s ref %8.3f ms (%6.2f GF/s)   omp %8.3f ms (%6.2f GF/s)   speedup %.2fx\n",
              name, t_ref * 1e3, flops / t_ref * 1e-9, t_par * 1e3, flops / t_par * 1e-9,
              t_ref / t_par);
}

}  // namespace

int main() {
  const int b = 64, h = 20, w = 20;

  {
    Tensor x = random_tensor({b, 8, h, w}, 1);
    Tensor k = random_tensor({16, 8, 3, 3}, 2);
    double flops = 2.0 * b * 16 * h * w * 8 * 9;
    double t_ref = time_best_of(3, [&] { (void)kernels::ref::conv2d(x, k); });
    double t_par = time_best_of(3, [&] { (void)kernels::conv2d(x, k); });
    report("conv2d 8->16", flops, t_ref, t_par);

    Tensor g = random_tensor({b, 16, h, w}, 3);
    t_ref = time_best_of(3, [&] { (void)kernels::ref::conv2d_input_grad(g, k); });
    t_par = time_best_of(3, [&] { (void)kernels::conv2d_input_grad(g, k); });
    report("conv2d input grad", flops, t_ref, t_par);

    t_ref = time_best_of(3, [&] { (void)kernels::ref::conv2d_kernel_grad(x, g, 3); });
    t_par = time_best_of(3, [&] { (void)kernels::conv2d_kernel_grad(x, g, 3); });
    report("conv2d kernel grad", flops, t_ref, t_par);
  }

  {
    const int m = 64, kk = 16 * h * w, n = 10;
    Tensor a = random_tensor({m, kk}, 4);
    Tensor bm = random_tensor({kk, n}, 5);
    double flops = 2.0 * m * kk * n;
    double t_ref = time_best_of(5, [&] { (void)kernels::ref::matmul(a, bm); });
    double t_par = time_best_of(5, [&] { (void)kernels::matmul(a, bm); });
    report("matmul dense layer", flops, t_ref, t_par);
  }

  {
    Tensor a = random_tensor({1 << 20}, 6);
    Tensor c = random_tensor({1 << 20}, 7);
    double flops = double(1 << 20);
    double t_ref = time_best_of(5, [&] { (void)kernels::ref::add(a, c); });
    double t_par = time_best_of(5, [&] { (void)kernels::add(a, c); });
    report("elementwise add 1M", flops, t_ref, t_par);
  }

  return 0;
}
