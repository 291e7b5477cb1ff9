#pragma once

#include "tte/tensor.hpp"

namespace tte::kernels {

// Parallelism is restricted to independent output elements; every reduction
// runs in a fixed serial order. Results are therefore bitwise identical with
// parallelism on or off, which the parity tests assert against the ref
// implementations below.
bool parallel_enabled();
void set_parallel_enabled(bool on);

// elementwise, equal shapes
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor divide(const Tensor& a, const Tensor& b);

// tensor-scalar
Tensor scale(const Tensor& a, double c);
Tensor add_scalar(const Tensor& a, double c);
Tensor rsub_scalar(double c, const Tensor& a);    // c - a[i]
Tensor rdiv_scalar(double c, const Tensor& a);    // c / a[i]
Tensor div_scalar(const Tensor& a, double c);     // a[i] / c

Tensor relu(const Tensor& a);
Tensor relu_mask_mul(const Tensor& x, const Tensor& g);  // g[i] * (x[i] > 0)
Tensor exp_ew(const Tensor& a);
Tensor log_ew(const Tensor& a);
Tensor negate(const Tensor& a);
Tensor sign_ew(const Tensor& a);  // -1/0/+1
Tensor clamp(const Tensor& a, double lo, double hi);
Tensor clamp_ball(const Tensor& a, const Tensor& center, double eps);

void acc_add(Tensor& target, const Tensor& g);  // target += g
double reduce_sum(const Tensor& a);             // serial, fixed order

// matmul family; shapes [m,k]x[k,n] -> [m,n] and the two transposed adjoints
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor matmul_at_b(const Tensor& a, const Tensor& g);  // a^T g : [m,k],[m,n] -> [k,n]
Tensor matmul_a_bt(const Tensor& g, const Tensor& b);  // g b^T : [m,n],[k,n] -> [m,k]

// conv2d, stride 1, zero padding k/2 (odd k only), kernel [F,C,k,k]
Tensor conv2d(const Tensor& x, const Tensor& k);
Tensor conv2d_input_grad(const Tensor& g, const Tensor& k);
Tensor conv2d_kernel_grad(const Tensor& x, const Tensor& g, int k_size);

// layout ops on [B,C,H,W]; serial (memory moves, not compute)
Tensor pad2d(const Tensor& x, int p);
Tensor unpad2d(const Tensor& g, int p);
Tensor slice2d(const Tensor& x, int oy, int ox, int oh, int ow);
Tensor scatter2d(const Tensor& g, int oy, int ox, int h, int w);
Tensor flip_w(const Tensor& x);

// Serial reference twins, kept for the parity tests and the benchmark.
namespace ref {
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor divide(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
Tensor relu(const Tensor& a);
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor matmul_at_b(const Tensor& a, const Tensor& g);
Tensor matmul_a_bt(const Tensor& g, const Tensor& b);
Tensor conv2d(const Tensor& x, const Tensor& k);
Tensor conv2d_input_grad(const Tensor& g, const Tensor& k);
Tensor conv2d_kernel_grad(const Tensor& x, const Tensor& g, int k_size);
}  // namespace ref

}  // namespace tte::kernels
