#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>

#include "tte/autodiff.hpp"
#include "tte/rng.hpp"

using namespace tte;
namespace ad = tte::ad;

namespace {

Tensor rand_tensor(std::vector<int> shape, uint64_t seed, double lo, double hi) {
  Tensor t(std::move(shape));
  Rng rng(seed);
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

// values bounded away from zero, for relu/log-safe graphs
Tensor rand_posneg(std::vector<int> shape, uint64_t seed) {
  Tensor t(std::move(shape));
  Rng rng(seed);
  for (int64_t i = 0; i < t.numel(); ++i) {
    double v = rng.uniform(0.2, 1.5);
    t[i] = rng.next_unit() < 0.5 ? -v : v;
  }
  return t;
}

using BuildFn = std::function<ad::Var(ad::Tape&, std::vector<ad::Var>&)>;

// Central finite differences (h=1e-5) against the tape gradient, max relative
// error over every element of every input.
double fd_max_rel_err(const std::vector<Tensor>& inputs, const BuildFn& build, double h = 1e-5) {
  ad::Tape t;
  std::vector<ad::Var> vars;
  for (const Tensor& in : inputs) vars.push_back(t.leaf(in));
  ad::Var loss = build(t, vars);
  ad::backward(t, loss);

  auto eval = [&](const std::vector<Tensor>& xs) {
    ad::Tape tp;
    std::vector<ad::Var> vs;
    for (const Tensor& in : xs) vs.push_back(tp.leaf(in));
    return build(tp, vs).value()[0];
  };

  double worst = 0.0;
  for (size_t k = 0; k < inputs.size(); ++k) {
    Tensor ga = t.grad(vars[k].id);
    for (int64_t i = 0; i < inputs[k].numel(); ++i) {
      std::vector<Tensor> xp = inputs, xm = inputs;
      xp[k][i] += h;
      xm[k][i] -= h;
      double num = (eval(xp) - eval(xm)) / (2.0 * h);
      double rel = std::fabs(ga[i] - num) / std::max({1.0, std::fabs(ga[i]), std::fabs(num)});
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

}  // namespace

TEST_CASE("elementwise forward basics") {
  ad::Tape t;
  ad::Var x = t.leaf(Tensor({3}, {-1.0, 0.0, 2.0}));
  CHECK(ad::relu(x).value().bitwise_equal(Tensor({3}, {0.0, 0.0, 2.0})));

  ad::Var zero = t.constant(Tensor({3}, {0.0, 0.0, 0.0}));
  CHECK(ad::add(x, zero).value().bitwise_equal(x.value()));

  ad::Var s = ad::sign(t.leaf(Tensor({3}, {-0.5, 0.0, 3.0})));
  CHECK(s.value().bitwise_equal(Tensor({3}, {-1.0, 0.0, 1.0})));
}

TEST_CASE("d/dx mul(x,x) at 3 is 6, against finite differences") {
  Tensor x0({1}, {3.0});
  double err = fd_max_rel_err({x0}, [](ad::Tape&, std::vector<ad::Var>& v) {
    return ad::sum(ad::mul(v[0], v[0]));
  });
  CHECK(err < 1e-6);
  ad::Tape t;
  ad::Var x = t.leaf(x0);
  ad::Var loss = ad::sum(ad::mul(x, x));
  ad::backward(t, loss);
  CHECK(t.grad(x.id)[0] == doctest::Approx(6.0).epsilon(1e-12));
}

TEST_CASE("matmul forward and gradients") {
  // identity matrix
  Tensor eye({2, 2}, {1.0, 0.0, 0.0, 1.0});
  Tensor m({2, 2}, {3.0, -1.0, 2.0, 5.0});
  ad::Tape t;
  CHECK(ad::matmul(t.leaf(eye), t.leaf(m)).value().bitwise_equal(m));

  Tensor a({2, 2}, {1.0, 2.0, 3.0, 4.0});
  Tensor b({2, 1}, {1.0, 1.0});
  CHECK(ad::matmul(t.leaf(a), t.leaf(b)).value().bitwise_equal(Tensor({2, 1}, {3.0, 7.0})));

  double err = fd_max_rel_err({rand_posneg({4, 5}, 1), rand_posneg({5, 3}, 2)},
                              [](ad::Tape&, std::vector<ad::Var>& v) {
                                return ad::sum(ad::matmul(v[0], v[1]));
                              });
  CHECK(err < 1e-6);
}

TEST_CASE("conv2d forward and gradients") {
  // 1x1 kernel of [[1]] is the identity map
  Tensor x = rand_posneg({2, 1, 4, 4}, 3);
  Tensor k1({1, 1, 1, 1}, {1.0});
  ad::Tape t;
  CHECK(ad::conv2d(t.leaf(x), t.leaf(k1)).value().bitwise_equal(x));

  // all-ones 3x3 kernel on a constant image: interior pixels 9c
  Tensor xc = Tensor::full({1, 1, 5, 5}, 2.0);
  Tensor k3 = Tensor::full({1, 1, 3, 3}, 1.0);
  Tensor out = ad::conv2d(t.leaf(xc), t.leaf(k3)).value();
  CHECK(out.at4(0, 0, 2, 2) == doctest::Approx(18.0).epsilon(1e-12));
  CHECK(out.at4(0, 0, 0, 0) == doctest::Approx(8.0).epsilon(1e-12));  // corner sees 4 taps

  CHECK_THROWS(ad::conv2d(t.leaf(x), t.leaf(Tensor::zeros({1, 1, 2, 2}))));  // even k

  double err = fd_max_rel_err({rand_posneg({2, 2, 6, 6}, 4), rand_posneg({3, 2, 3, 3}, 5)},
                              [](ad::Tape&, std::vector<ad::Var>& v) {
                                return ad::sum(ad::conv2d(v[0], v[1]));
                              });
  CHECK(err < 1e-5);
}

TEST_CASE("pad2d and slice2d") {
  Tensor x = rand_posneg({1, 1, 2, 2}, 6);
  ad::Tape t;
  CHECK(ad::pad2d(t.leaf(x), 0).value().bitwise_equal(x));

  Tensor ones = Tensor::full({1, 1, 2, 2}, 1.0);
  Tensor padded = ad::pad2d(t.leaf(ones), 1).value();
  CHECK(padded.shape() == std::vector<int>{1, 1, 4, 4});
  CHECK(padded.at4(0, 0, 0, 0) == 0.0);
  CHECK(padded.at4(0, 0, 1, 1) == 1.0);
  CHECK(padded.at4(0, 0, 2, 2) == 1.0);
  CHECK(padded.at4(0, 0, 3, 3) == 0.0);

  Tensor big = rand_posneg({1, 1, 6, 6}, 7);
  CHECK(ad::slice2d(t.leaf(big), 0, 0, 6, 6).value().bitwise_equal(big));
  CHECK(ad::slice2d(ad::pad2d(t.leaf(big), 4), 4, 4, 6, 6).value().bitwise_equal(big));
  CHECK_THROWS(ad::slice2d(t.leaf(big), 3, 3, 6, 6));

  double err = fd_max_rel_err({rand_posneg({1, 1, 6, 6}, 8)},
                              [](ad::Tape&, std::vector<ad::Var>& v) {
                                return ad::sum(ad::slice2d(ad::pad2d(v[0], 2), 1, 3, 5, 5));
                              });
  CHECK(err < 1e-6);
}

TEST_CASE("flip_width") {
  ad::Tape t;
  Tensor row({1, 1, 1, 4}, {1.0, 2.0, 3.0, 4.0});
  CHECK(ad::flip_w(t.leaf(row)).value().bitwise_equal(Tensor({1, 1, 1, 4}, {4.0, 3.0, 2.0, 1.0})));

  Tensor x = rand_posneg({2, 1, 3, 5}, 9);
  CHECK(ad::flip_w(ad::flip_w(t.leaf(x))).value().bitwise_equal(x));

  double err = fd_max_rel_err({x}, [](ad::Tape&, std::vector<ad::Var>& v) {
    return ad::sum(ad::mul(ad::flip_w(v[0]), v[0]));
  });
  CHECK(err < 1e-6);
}

TEST_CASE("softmax cross-entropy values and gradient") {
  ad::Tape t;
  Tensor uniform = Tensor::zeros({1, 4});
  CHECK(ad::softmax_cross_entropy(t.leaf(uniform), {0}).value()[0] ==
        doctest::Approx(std::log(4.0)).epsilon(1e-12));

  Tensor onehot({1, 4}, {50.0, 0.0, 0.0, 0.0});
  CHECK(ad::softmax_cross_entropy(t.leaf(onehot), {0}).value()[0] < 1e-20);

  CHECK_THROWS(ad::softmax_cross_entropy(t.leaf(uniform), {4}));  // label out of range

  // gradient equals softmax(scores) - onehot(label), per batch mean
  Tensor scores = rand_posneg({3, 5}, 10);
  std::vector<int> labels = {1, 4, 0};
  ad::Tape t2;
  ad::Var sv = t2.leaf(scores);
  ad::backward(t2, ad::softmax_cross_entropy(sv, labels));
  Tensor g = t2.grad(sv.id);
  for (int i = 0; i < 3; ++i) {
    double m = -1e300, z = 0.0;
    for (int j = 0; j < 5; ++j) m = std::max(m, scores[i * 5 + j]);
    for (int j = 0; j < 5; ++j) z += std::exp(scores[i * 5 + j] - m);
    for (int j = 0; j < 5; ++j) {
      double expect = (std::exp(scores[i * 5 + j] - m) / z - (labels[i] == j ? 1.0 : 0.0)) / 3.0;
      CHECK(g[i * 5 + j] == doctest::Approx(expect).epsilon(1e-9));
    }
  }

  double err = fd_max_rel_err({scores}, [labels](ad::Tape&, std::vector<ad::Var>& v) {
    return ad::softmax_cross_entropy(v[0], labels);
  });
  CHECK(err < 1e-6);
}

TEST_CASE("backward mechanics") {
  // mean: gradient 1/n everywhere
  ad::Tape t;
  ad::Var x = t.leaf(rand_posneg({8}, 11));
  ad::backward(t, ad::mean(x));
  Tensor g = t.grad(x.id);
  for (int64_t i = 0; i < 8; ++i) CHECK(g[i] == doctest::Approx(0.125).epsilon(1e-12));

  // unreachable node has zero gradient
  ad::Var orphan = t.leaf(rand_posneg({3}, 12));
  ad::Var y = t.leaf(rand_posneg({3}, 13));
  ad::backward(t, ad::sum(y));
  CHECK(t.grad(orphan.id).bitwise_equal(Tensor::zeros({3})));

  // non-scalar loss rejected
  CHECK_THROWS(ad::backward(t, y));

  // vars from different tapes rejected
  ad::Tape t2;
  ad::Var z = t2.leaf(rand_posneg({3}, 14));
  CHECK_THROWS(ad::add(y, z));

  // log of non-positive input rejected
  CHECK_THROWS(ad::log(t.leaf(Tensor({2}, {1.0, 0.0}))));
}

TEST_CASE("composite graph conv-relu-dense-CE against finite differences") {
  Tensor x = rand_tensor({2, 1, 6, 6}, 15, 0.1, 1.0);
  Tensor k = rand_posneg({3, 1, 3, 3}, 16);
  Tensor w = rand_posneg({3 * 6 * 6, 4}, 17);
  std::vector<int> labels = {2, 0};
  double err = fd_max_rel_err({x, k, w}, [labels](ad::Tape&, std::vector<ad::Var>& v) {
    ad::Var h = ad::relu(ad::conv2d(v[0], v[1]));
    ad::Var flat = ad::reshape(h, {2, 3 * 6 * 6});
    return ad::softmax_cross_entropy(ad::matmul(flat, v[2]), labels);
  });
  CHECK(err < 1e-4);
}

TEST_CASE("graph evaluation is deterministic bitwise") {
  auto run = [] {
    ad::Tape t;
    ad::Var x = t.leaf(rand_posneg({2, 1, 5, 5}, 18));
    ad::Var k = t.leaf(rand_posneg({2, 1, 3, 3}, 19));
    ad::Var loss = ad::mean(ad::relu(ad::conv2d(x, k)));
    ad::backward(t, loss);
    return std::pair<Tensor, Tensor>(t.grad(x.id), t.grad(k.id));
  };
  auto [gx1, gk1] = run();
  auto [gx2, gk2] = run();
  CHECK(gx1.bitwise_equal(gx2));
  CHECK(gk1.bitwise_equal(gk2));
}

TEST_CASE("every primitive passes the 100-seed finite-difference property") {
  // one graph family per primitive, cycled over 100 seeds; gate 1e-4
  using Fam = std::function<double(uint64_t)>;
  std::vector<Fam> families = {
      [](uint64_t s) {
        return fd_max_rel_err({rand_posneg({7}, s), rand_posneg({7}, s + 1000)},
                              [](ad::Tape&, std::vector<ad::Var>& v) { return ad::sum(ad::add(v[0], v[1])); });
      },
      [](uint64_t s) {
        return fd_max_rel_err({rand_posneg({7}, s), rand_posneg({7}, s + 1000)},
                              [](ad::Tape&, std::vector<ad::Var>& v) { return ad::sum(ad::sub(v[0], v[1])); });
      },
      [](uint64_t s) {
        return fd_max_rel_err({rand_posneg({7}, s), rand_posneg({7}, s + 1000)},
                              [](ad::Tape&, std::vector<ad::Var>& v) { return ad::sum(ad::mul(v[0], v[1])); });
      },
      [](uint64_t s) {
        return fd_max_rel_err({rand_posneg({7}, s), rand_tensor({7}, s + 1000, 0.5, 2.0)},
                              [](ad::Tape&, std::vector<ad::Var>& v) { return ad::sum(ad::div(v[0], v[1])); });
      },
      [](uint64_t s) {
        return fd_max_rel_err({rand_posneg({7}, s), rand_posneg({1}, s + 1000)},
                              [](ad::Tape&, std::vector<ad::Var>& v) { return ad::sum(ad::mul(v[0], v[1])); });
      },  // scalar broadcast
      [](uint64_t s) {
        return fd_max_rel_err({rand_posneg({9}, s)},
                              [](ad::Tape&, std::vector<ad::Var>& v) { return ad::sum(ad::scale(v[0], -1.7)); });
      },
      [](uint64_t s) {
        return fd_max_rel_err({rand_posneg({9}, s)}, [](ad::Tape&, std::vector<ad::Var>& v) {
          return ad::sum(ad::relu(ad::add_const(v[0], 0.01)));
        });
      },
      [](uint64_t s) {
        return fd_max_rel_err({rand_posneg({9}, s)},
                              [](ad::Tape&, std::vector<ad::Var>& v) { return ad::sum(ad::negate(v[0])); });
      },
      [](uint64_t s) {
        return fd_max_rel_err({rand_tensor({9}, s, -1.0, 1.0)},
                              [](ad::Tape&, std::vector<ad::Var>& v) { return ad::sum(ad::exp(v[0])); });
      },
      [](uint64_t s) {
        return fd_max_rel_err({rand_tensor({9}, s, 0.5, 2.0)},
                              [](ad::Tape&, std::vector<ad::Var>& v) { return ad::sum(ad::log(v[0])); });
      },
      [](uint64_t s) {
        return fd_max_rel_err({rand_posneg({3, 4}, s), rand_posneg({4, 2}, s + 1000)},
                              [](ad::Tape&, std::vector<ad::Var>& v) { return ad::sum(ad::matmul(v[0], v[1])); });
      },
      [](uint64_t s) {
        return fd_max_rel_err({rand_posneg({1, 2, 5, 5}, s), rand_posneg({2, 2, 3, 3}, s + 1000)},
                              [](ad::Tape&, std::vector<ad::Var>& v) { return ad::sum(ad::conv2d(v[0], v[1])); });
      },
      [](uint64_t s) {
        return fd_max_rel_err({rand_posneg({1, 1, 4, 4}, s)}, [](ad::Tape&, std::vector<ad::Var>& v) {
          return ad::sum(ad::mul(ad::pad2d(v[0], 2), ad::pad2d(v[0], 2)));
        });
      },
      [](uint64_t s) {
        return fd_max_rel_err({rand_posneg({1, 1, 6, 6}, s)}, [](ad::Tape&, std::vector<ad::Var>& v) {
          return ad::sum(ad::slice2d(v[0], 1, 2, 4, 4));
        });
      },
      [](uint64_t s) {
        return fd_max_rel_err({rand_posneg({1, 1, 3, 6}, s)}, [](ad::Tape&, std::vector<ad::Var>& v) {
          return ad::sum(ad::mul(ad::flip_w(v[0]), v[0]));
        });
      },
      [](uint64_t s) {
        return fd_max_rel_err({rand_posneg({2, 8}, s)}, [](ad::Tape&, std::vector<ad::Var>& v) {
          return ad::mean(ad::mul(ad::reshape(v[0], {4, 4}), ad::reshape(v[0], {4, 4})));
        });
      },
      [](uint64_t s) {
        return fd_max_rel_err({rand_posneg({3, 5}, s)}, [](ad::Tape&, std::vector<ad::Var>& v) {
          return ad::sum(ad::gather_rows(v[0], {4, 0, 2}));
        });
      },
      [](uint64_t s) {
        return fd_max_rel_err({rand_posneg({2, 6}, s)}, [](ad::Tape&, std::vector<ad::Var>& v) {
          return ad::softmax_cross_entropy(v[0], {1, 5});
        });
      },
  };
  double worst = 0.0;
  for (uint64_t seed = 0; seed < 100; ++seed) {
    double e = families[seed % families.size()](seed * 7919 + 13);
    worst = std::max(worst, e);
  }
  CHECK(worst <= 1e-4);

  // sign: zero gradient everywhere by definition
  ad::Tape t;
  ad::Var x = t.leaf(rand_posneg({6}, 999));
  ad::backward(t, ad::sum(ad::mul(ad::sign(x), x)));
  // only the mul path contributes: d/dx (sign(x)*x) = sign(x)
  Tensor g = t.grad(x.id);
  for (int64_t i = 0; i < 6; ++i)
    CHECK(g[i] == doctest::Approx(x.value()[i] > 0 ? 1.0 : -1.0).epsilon(1e-12));
}
