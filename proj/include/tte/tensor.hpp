#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace tte {

// Dense row-major tensor of doubles. All numerics in the project run in
// 64-bit; datasets are quantized to float32 only at the file boundary.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape);
  Tensor(std::vector<int> shape, std::vector<double> data);

  static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }
  static Tensor full(std::vector<int> shape, double v);
  static Tensor scalar(double v) { return Tensor({1}, {v}); }

  const std::vector<int>& shape() const { return shape_; }
  int dim(int i) const { return shape_[i]; }
  int ndim() const { return static_cast<int>(shape_.size()); }
  int64_t numel() const { return static_cast<int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }
  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
  bool is_scalar() const { return data_.size() == 1; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  double& operator[](int64_t i) { return data_[i]; }
  double operator[](int64_t i) const { return data_[i]; }

  // accessors for [B,C,H,W] tensors
  double& at4(int b, int c, int y, int x) { return data_[offset4(b, c, y, x)]; }
  double at4(int b, int c, int y, int x) const { return data_[offset4(b, c, y, x)]; }
  int64_t offset4(int b, int c, int y, int x) const {
    return ((int64_t(b) * shape_[1] + c) * shape_[2] + y) * shape_[3] + x;
  }

  Tensor reshaped(std::vector<int> new_shape) const;
  bool all_finite() const;
  bool bitwise_equal(const Tensor& o) const;
  std::string shape_str() const;  // e.g. "[2,3,4]"

 private:
  std::vector<int> shape_;
  std::vector<double> data_;
};

int64_t shape_numel(const std::vector<int>& shape);

}  // namespace tte
