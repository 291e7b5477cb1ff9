#include "tte/autodiff.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <stdexcept>

#include "tte/kernels.hpp"

namespace tte::ad {

namespace K = tte::kernels;

namespace {

std::atomic<uint64_t> g_backward_count{0};

Tape* same_tape(Var a, Var b) {
  if (a.tape == nullptr || a.tape != b.tape) throw std::runtime_error("autodiff: vars from different tapes");
  return a.tape;
}

void check_valid(Var a) {
  if (a.tape == nullptr || a.id < 0) throw std::runtime_error("autodiff: invalid var");
}

}  // namespace

const Tensor& Var::value() const {
  if (tape == nullptr) throw std::runtime_error("autodiff: invalid var");
  return tape->value(id);
}

Var Tape::leaf(Tensor value) { return record(std::move(value), {}, nullptr, true); }
Var Tape::constant(Tensor value) { return record(std::move(value), {}, nullptr, false); }

Var Tape::record(Tensor value, std::vector<int> inputs, BackwardFn fn, bool needs_grad) {
  Node n;
  n.value = std::move(value);
  n.inputs = std::move(inputs);
  n.backward = std::move(fn);
  n.needs_grad = needs_grad;
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Tensor Tape::grad(int id) const {
  if (id < 0 || id >= size()) throw std::runtime_error("autodiff: grad of unknown node");
  if (id < static_cast<int>(grads_.size()) && !grads_[id].empty()) return grads_[id];
  return Tensor::zeros(nodes_[id].value.shape());
}

void Tape::accumulate(int id, const Tensor& g) {
  if (!g.same_shape(nodes_[id].value))
    throw std::runtime_error("autodiff: gradient shape " + g.shape_str() + " does not match value " +
                             nodes_[id].value.shape_str());
  if (grads_[id].empty())
    grads_[id] = g;
  else
    K::acc_add(grads_[id], g);
}

void backward(Tape& t, Var loss) {
  check_valid(loss);
  if (loss.tape != &t) throw std::runtime_error("autodiff: loss from another tape");
  if (!t.value(loss.id).is_scalar())
    throw std::runtime_error("autodiff: backward requires a scalar loss, got " +
                             t.value(loss.id).shape_str());
  g_backward_count.fetch_add(1);
  t.grads_.assign(t.nodes_.size(), Tensor{});
  t.grads_[loss.id] = Tensor({1}, {1.0});
  for (int i = loss.id; i >= 0; --i) {
    if (t.grads_[i].empty() || !t.nodes_[i].backward) continue;
    t.nodes_[i].backward(t, t.grads_[i], i);
  }
}

uint64_t backward_invocations() { return g_backward_count.load(); }

namespace {

// Binary op with scalar broadcast on either side. make_equal/make_bs/make_sb
// return {value, backward} for the three layouts.
enum class Layout { Equal, ScalarRight, ScalarLeft };

Layout broadcast_layout(const Tensor& a, const Tensor& b, const char* op) {
  if (a.same_shape(b)) return Layout::Equal;
  if (b.is_scalar()) return Layout::ScalarRight;
  if (a.is_scalar()) return Layout::ScalarLeft;
  throw std::runtime_error(std::string(op) + ": broadcasting is limited to scalars, got " +
                           a.shape_str() + " vs " + b.shape_str());
}

Tensor sum_to_scalar(const Tensor& g) { return Tensor({1}, {K::reduce_sum(g)}); }

}  // namespace

Var add(Var a, Var b) {
  Tape* t = same_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const Layout lay = broadcast_layout(av, bv, "add");
  Tensor value = lay == Layout::Equal        ? K::add(av, bv)
                 : lay == Layout::ScalarRight ? K::add_scalar(av, bv[0])
                                              : K::add_scalar(bv, av[0]);
  const int ia = a.id, ib = b.id;
  return t->record(std::move(value), {ia, ib},
                   [ia, ib, lay](Tape& tp, const Tensor& g, int) {
                     if (tp.needs_grad(ia))
                       tp.accumulate(ia, lay == Layout::ScalarLeft ? sum_to_scalar(g) : g);
                     if (tp.needs_grad(ib))
                       tp.accumulate(ib, lay == Layout::ScalarRight ? sum_to_scalar(g) : g);
                   },
                   t->needs_grad(ia) || t->needs_grad(ib));
}

Var sub(Var a, Var b) {
  Tape* t = same_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const Layout lay = broadcast_layout(av, bv, "sub");
  Tensor value = lay == Layout::Equal        ? K::sub(av, bv)
                 : lay == Layout::ScalarRight ? K::add_scalar(av, -bv[0])
                                              : K::rsub_scalar(av[0], bv);
  const int ia = a.id, ib = b.id;
  return t->record(std::move(value), {ia, ib},
                   [ia, ib, lay](Tape& tp, const Tensor& g, int) {
                     if (tp.needs_grad(ia))
                       tp.accumulate(ia, lay == Layout::ScalarLeft ? sum_to_scalar(g) : g);
                     if (tp.needs_grad(ib)) {
                       Tensor ng = K::negate(g);
                       tp.accumulate(ib, lay == Layout::ScalarRight ? sum_to_scalar(ng) : ng);
                     }
                   },
                   t->needs_grad(ia) || t->needs_grad(ib));
}

Var mul(Var a, Var b) {
  Tape* t = same_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const Layout lay = broadcast_layout(av, bv, "mul");
  Tensor value = lay == Layout::Equal        ? K::mul(av, bv)
                 : lay == Layout::ScalarRight ? K::scale(av, bv[0])
                                              : K::scale(bv, av[0]);
  const int ia = a.id, ib = b.id;
  return t->record(std::move(value), {ia, ib},
                   [ia, ib, lay](Tape& tp, const Tensor& g, int) {
                     const Tensor& av2 = tp.value(ia);
                     const Tensor& bv2 = tp.value(ib);
                     if (tp.needs_grad(ia)) {
                       if (lay == Layout::Equal)
                         tp.accumulate(ia, K::mul(g, bv2));
                       else if (lay == Layout::ScalarRight)
                         tp.accumulate(ia, K::scale(g, bv2[0]));
                       else
                         tp.accumulate(ia, sum_to_scalar(K::mul(g, bv2)));
                     }
                     if (tp.needs_grad(ib)) {
                       if (lay == Layout::Equal)
                         tp.accumulate(ib, K::mul(g, av2));
                       else if (lay == Layout::ScalarLeft)
                         tp.accumulate(ib, K::scale(g, av2[0]));
                       else
                         tp.accumulate(ib, sum_to_scalar(K::mul(g, av2)));
                     }
                   },
                   t->needs_grad(ia) || t->needs_grad(ib));
}

Var div(Var a, Var b) {
  Tape* t = same_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const Layout lay = broadcast_layout(av, bv, "div");
  Tensor value = lay == Layout::Equal        ? K::divide(av, bv)
                 : lay == Layout::ScalarRight ? K::div_scalar(av, bv[0])
                                              : K::rdiv_scalar(av[0], bv);
  const int ia = a.id, ib = b.id;
  return t->record(std::move(value), {ia, ib},
                   [ia, ib, lay](Tape& tp, const Tensor& g, int self) {
                     const Tensor& bv2 = tp.value(ib);
                     const Tensor& out = tp.value(self);  // a/b
                     if (tp.needs_grad(ia)) {
                       if (lay == Layout::Equal)
                         tp.accumulate(ia, K::divide(g, bv2));
                       else if (lay == Layout::ScalarRight)
                         tp.accumulate(ia, K::div_scalar(g, bv2[0]));
                       else
                         tp.accumulate(ia, sum_to_scalar(K::divide(g, bv2)));
                     }
                     if (tp.needs_grad(ib)) {
                       // d(a/b)/db = -(a/b)/b
                       Tensor gb = K::negate(K::mul(g, out));
                       if (lay == Layout::Equal)
                         tp.accumulate(ib, K::divide(gb, bv2));
                       else if (lay == Layout::ScalarRight)
                         tp.accumulate(ib, sum_to_scalar(K::div_scalar(gb, bv2[0])));
                       else
                         tp.accumulate(ib, K::divide(gb, bv2));
                     }
                   },
                   t->needs_grad(ia) || t->needs_grad(ib));
}

Var scale(Var a, double c) {
  check_valid(a);
  Tape* t = a.tape;
  const int ia = a.id;
  return t->record(K::scale(a.value(), c), {ia},
                   [ia, c](Tape& tp, const Tensor& g, int) {
                     if (tp.needs_grad(ia)) tp.accumulate(ia, K::scale(g, c));
                   },
                   t->needs_grad(ia));
}

Var add_const(Var a, double c) {
  check_valid(a);
  Tape* t = a.tape;
  const int ia = a.id;
  return t->record(K::add_scalar(a.value(), c), {ia},
                   [ia](Tape& tp, const Tensor& g, int) {
                     if (tp.needs_grad(ia)) tp.accumulate(ia, g);
                   },
                   t->needs_grad(ia));
}

Var relu(Var a) {
  check_valid(a);
  Tape* t = a.tape;
  const int ia = a.id;
  return t->record(K::relu(a.value()), {ia},
                   [ia](Tape& tp, const Tensor& g, int) {
                     if (tp.needs_grad(ia)) tp.accumulate(ia, K::relu_mask_mul(tp.value(ia), g));
                   },
                   t->needs_grad(ia));
}

Var negate(Var a) {
  check_valid(a);
  Tape* t = a.tape;
  const int ia = a.id;
  return t->record(K::negate(a.value()), {ia},
                   [ia](Tape& tp, const Tensor& g, int) {
                     if (tp.needs_grad(ia)) tp.accumulate(ia, K::negate(g));
                   },
                   t->needs_grad(ia));
}

Var exp(Var a) {
  check_valid(a);
  Tape* t = a.tape;
  const int ia = a.id;
  return t->record(K::exp_ew(a.value()), {ia},
                   [ia](Tape& tp, const Tensor& g, int self) {
                     if (tp.needs_grad(ia)) tp.accumulate(ia, K::mul(g, tp.value(self)));
                   },
                   t->needs_grad(ia));
}

Var log(Var a) {
  check_valid(a);
  const Tensor& av = a.value();
  for (int64_t i = 0; i < av.numel(); ++i)
    if (!(av[i] > 0.0)) throw std::runtime_error("autodiff: log of non-positive input");
  Tape* t = a.tape;
  const int ia = a.id;
  return t->record(K::log_ew(av), {ia},
                   [ia](Tape& tp, const Tensor& g, int) {
                     if (tp.needs_grad(ia)) tp.accumulate(ia, K::divide(g, tp.value(ia)));
                   },
                   t->needs_grad(ia));
}

Var sign(Var a) {
  check_valid(a);
  // zero gradient everywhere, so the output does not require grad
  return a.tape->record(K::sign_ew(a.value()), {a.id}, nullptr, false);
}

Var matmul(Var a, Var b) {
  Tape* t = same_tape(a, b);
  const int ia = a.id, ib = b.id;
  return t->record(K::matmul(a.value(), b.value()), {ia, ib},
                   [ia, ib](Tape& tp, const Tensor& g, int) {
                     if (tp.needs_grad(ia)) tp.accumulate(ia, K::matmul_a_bt(g, tp.value(ib)));
                     if (tp.needs_grad(ib)) tp.accumulate(ib, K::matmul_at_b(tp.value(ia), g));
                   },
                   t->needs_grad(ia) || t->needs_grad(ib));
}

Var conv2d(Var x, Var k) {
  Tape* t = same_tape(x, k);
  const int ix = x.id, ik = k.id;
  const int ks = k.value().dim(2);
  return t->record(K::conv2d(x.value(), k.value()), {ix, ik},
                   [ix, ik, ks](Tape& tp, const Tensor& g, int) {
                     if (tp.needs_grad(ix)) tp.accumulate(ix, K::conv2d_input_grad(g, tp.value(ik)));
                     if (tp.needs_grad(ik)) tp.accumulate(ik, K::conv2d_kernel_grad(tp.value(ix), g, ks));
                   },
                   t->needs_grad(ix) || t->needs_grad(ik));
}

Var pad2d(Var x, int p) {
  check_valid(x);
  Tape* t = x.tape;
  const int ix = x.id;
  return t->record(K::pad2d(x.value(), p), {ix},
                   [ix, p](Tape& tp, const Tensor& g, int) {
                     if (tp.needs_grad(ix)) tp.accumulate(ix, K::unpad2d(g, p));
                   },
                   t->needs_grad(ix));
}

Var slice2d(Var x, int oy, int ox, int oh, int ow) {
  check_valid(x);
  Tape* t = x.tape;
  const int ix = x.id;
  const int h = x.value().dim(2), w = x.value().dim(3);
  return t->record(K::slice2d(x.value(), oy, ox, oh, ow), {ix},
                   [ix, oy, ox, h, w](Tape& tp, const Tensor& g, int) {
                     if (tp.needs_grad(ix)) tp.accumulate(ix, K::scatter2d(g, oy, ox, h, w));
                   },
                   t->needs_grad(ix));
}

Var flip_w(Var x) {
  check_valid(x);
  Tape* t = x.tape;
  const int ix = x.id;
  return t->record(K::flip_w(x.value()), {ix},
                   [ix](Tape& tp, const Tensor& g, int) {
                     if (tp.needs_grad(ix)) tp.accumulate(ix, K::flip_w(g));
                   },
                   t->needs_grad(ix));
}

Var reshape(Var a, std::vector<int> shape) {
  check_valid(a);
  Tape* t = a.tape;
  const int ia = a.id;
  std::vector<int> old_shape = a.value().shape();
  return t->record(a.value().reshaped(std::move(shape)), {ia},
                   [ia, old_shape](Tape& tp, const Tensor& g, int) {
                     if (tp.needs_grad(ia)) tp.accumulate(ia, g.reshaped(old_shape));
                   },
                   t->needs_grad(ia));
}

Var sum(Var a) {
  check_valid(a);
  Tape* t = a.tape;
  const int ia = a.id;
  std::vector<int> shape = a.value().shape();
  return t->record(Tensor({1}, {K::reduce_sum(a.value())}), {ia},
                   [ia, shape](Tape& tp, const Tensor& g, int) {
                     if (tp.needs_grad(ia)) tp.accumulate(ia, Tensor::full(shape, g[0]));
                   },
                   t->needs_grad(ia));
}

Var mean(Var a) {
  check_valid(a);
  Tape* t = a.tape;
  const int ia = a.id;
  std::vector<int> shape = a.value().shape();
  const double inv_n = 1.0 / double(a.value().numel());
  return t->record(Tensor({1}, {K::reduce_sum(a.value()) * inv_n}), {ia},
                   [ia, shape, inv_n](Tape& tp, const Tensor& g, int) {
                     if (tp.needs_grad(ia)) tp.accumulate(ia, Tensor::full(shape, g[0] * inv_n));
                   },
                   t->needs_grad(ia));
}

Var gather_rows(Var scores, const std::vector<int>& idx) {
  check_valid(scores);
  const Tensor& sv = scores.value();
  if (sv.ndim() != 2) throw std::runtime_error("gather_rows: expected [B,N], got " + sv.shape_str());
  const int b = sv.dim(0), n = sv.dim(1);
  if (static_cast<int>(idx.size()) != b) throw std::runtime_error("gather_rows: index count mismatch");
  Tensor value({b});
  for (int i = 0; i < b; ++i) {
    if (idx[i] < 0 || idx[i] >= n) throw std::runtime_error("gather_rows: index out of range");
    value[i] = sv[int64_t(i) * n + idx[i]];
  }
  Tape* t = scores.tape;
  const int is = scores.id;
  std::vector<int> picked = idx;
  return t->record(std::move(value), {is},
                   [is, picked, b, n](Tape& tp, const Tensor& g, int) {
                     if (!tp.needs_grad(is)) return;
                     Tensor gs({b, n});
                     for (int i = 0; i < b; ++i) gs[int64_t(i) * n + picked[i]] = g[i];
                     tp.accumulate(is, gs);
                   },
                   t->needs_grad(is));
}

std::vector<double> cross_entropy_rows(const Tensor& scores, const std::vector<int>& labels) {
  if (scores.ndim() != 2) throw std::runtime_error("cross_entropy: expected [B,N], got " + scores.shape_str());
  const int b = scores.dim(0), n = scores.dim(1);
  if (static_cast<int>(labels.size()) != b) throw std::runtime_error("cross_entropy: label count mismatch");
  std::vector<double> out(b);
  for (int i = 0; i < b; ++i) {
    if (labels[i] < 0 || labels[i] >= n) throw std::runtime_error("cross_entropy: label out of range");
    const double* row = scores.data() + int64_t(i) * n;
    double m = row[0];
    for (int j = 1; j < n; ++j) m = std::max(m, row[j]);
    double z = 0.0;
    for (int j = 0; j < n; ++j) z += std::exp(row[j] - m);
    out[i] = std::log(z) - (row[labels[i]] - m);
  }
  return out;
}

Var softmax_cross_entropy(Var scores, const std::vector<int>& labels) {
  check_valid(scores);
  std::vector<double> rows = cross_entropy_rows(scores.value(), labels);
  const int b = scores.value().dim(0), n = scores.value().dim(1);
  double total = 0.0;
  for (double v : rows) total += v;
  Tape* t = scores.tape;
  const int is = scores.id;
  std::vector<int> lab = labels;
  return t->record(Tensor({1}, {total / b}), {is},
                   [is, lab, b, n](Tape& tp, const Tensor& g, int) {
                     if (!tp.needs_grad(is)) return;
                     const Tensor& sv = tp.value(is);
                     Tensor gs({b, n});
                     const double gb = g[0] / double(b);
                     for (int i = 0; i < b; ++i) {
                       const double* row = sv.data() + int64_t(i) * n;
                       double m = row[0];
                       for (int j = 1; j < n; ++j) m = std::max(m, row[j]);
                       double z = 0.0;
                       for (int j = 0; j < n; ++j) z += std::exp(row[j] - m);
                       double* grow = gs.data() + int64_t(i) * n;
                       for (int j = 0; j < n; ++j) {
                         const double p = std::exp(row[j] - m) / z;
                         grow[j] = (p - (j == lab[i] ? 1.0 : 0.0)) * gb;
                       }
                     }
                     tp.accumulate(is, gs);
                   },
                   t->needs_grad(is));
}

}  // namespace tte::ad
