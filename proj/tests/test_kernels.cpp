#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "tte/kernels.hpp"
#include "tte/rng.hpp"

using namespace tte;
namespace K = tte::kernels;

namespace {

// nonzero random data so the ref/omp comparison is not muddied by signed zeros
Tensor rand_nonzero(std::vector<int> shape, uint64_t seed) {
  Tensor t(std::move(shape));
  Rng rng(seed);
  for (int64_t i = 0; i < t.numel(); ++i) {
    double v = rng.uniform(0.05, 1.0);
    t[i] = rng.next_unit() < 0.5 ? -v : v;
  }
  return t;
}

}  // namespace

TEST_CASE("elementwise parity with serial reference is bitwise") {
  for (int64_t n : {int64_t(7), int64_t(1 << 15)}) {  // below and above the parallel threshold
    Tensor a = rand_nonzero({int(n)}, 11);
    Tensor b = rand_nonzero({int(n)}, 12);
    CHECK(K::add(a, b).bitwise_equal(K::ref::add(a, b)));
    CHECK(K::sub(a, b).bitwise_equal(K::ref::sub(a, b)));
    CHECK(K::mul(a, b).bitwise_equal(K::ref::mul(a, b)));
    CHECK(K::divide(a, b).bitwise_equal(K::ref::divide(a, b)));
    CHECK(K::scale(a, 0.37).bitwise_equal(K::ref::scale(a, 0.37)));
    CHECK(K::relu(a).bitwise_equal(K::ref::relu(a)));
  }
}

TEST_CASE("matmul family parity is bitwise") {
  Tensor a = rand_nonzero({33, 47}, 21);
  Tensor b = rand_nonzero({47, 29}, 22);
  CHECK(K::matmul(a, b).bitwise_equal(K::ref::matmul(a, b)));

  Tensor g = rand_nonzero({33, 29}, 23);
  CHECK(K::matmul_at_b(a, g).bitwise_equal(K::ref::matmul_at_b(a, g)));
  CHECK(K::matmul_a_bt(g, b).bitwise_equal(K::ref::matmul_a_bt(g, b)));
}

TEST_CASE("conv2d forward and both grads match serial reference bitwise") {
  for (int ks : {1, 3, 5}) {
    Tensor x = rand_nonzero({4, 3, 13, 11}, 30 + ks);
    Tensor k = rand_nonzero({5, 3, ks, ks}, 40 + ks);
    Tensor up = K::conv2d(x, k);
    CHECK(up.bitwise_equal(K::ref::conv2d(x, k)));

    Tensor g = rand_nonzero({4, 5, 13, 11}, 50 + ks);
    CHECK(K::conv2d_input_grad(g, k).bitwise_equal(K::ref::conv2d_input_grad(g, k)));
    CHECK(K::conv2d_kernel_grad(x, g, ks).bitwise_equal(K::ref::conv2d_kernel_grad(x, g, ks)));
  }
}

TEST_CASE("parallel toggle does not change results") {
  Tensor x = rand_nonzero({8, 8, 20, 20}, 60);
  Tensor k = rand_nonzero({16, 8, 3, 3}, 61);
  K::set_parallel_enabled(true);
  Tensor on = K::conv2d(x, k);
  K::set_parallel_enabled(false);
  Tensor off = K::conv2d(x, k);
  K::set_parallel_enabled(true);
  CHECK(on.bitwise_equal(off));
}

TEST_CASE("conv2d rejects malformed arguments") {
  Tensor x = rand_nonzero({2, 3, 8, 8}, 70);
  CHECK_THROWS(K::conv2d(x, rand_nonzero({4, 3, 2, 2}, 71)));  // even kernel
  CHECK_THROWS(K::conv2d(x, rand_nonzero({4, 2, 3, 3}, 72)));  // channel mismatch
  CHECK_THROWS(K::matmul(rand_nonzero({3, 4}, 73), rand_nonzero({5, 2}, 74)));
  CHECK_THROWS(K::slice2d(x, 5, 5, 8, 8));  // window out of range
}

TEST_CASE("layout ops behave as adjoint pairs") {
  Tensor x = rand_nonzero({2, 2, 9, 9}, 80);
  CHECK(K::unpad2d(K::pad2d(x, 3), 3).bitwise_equal(x));
  CHECK(K::flip_w(K::flip_w(x)).bitwise_equal(x));

  // <slice(x), g> == <x, scatter(g)> for random g
  Tensor s = K::slice2d(x, 2, 1, 5, 6);
  Tensor g = rand_nonzero({2, 2, 5, 6}, 81);
  double lhs = K::reduce_sum(K::mul(s, g));
  Tensor sc = K::scatter2d(g, 2, 1, 9, 9);
  double rhs = K::reduce_sum(K::mul(x, sc));
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
}
