#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "del/rng.hpp"

namespace del {

// Dense row-major tensor of doubles. Shapes are lists of positive dims and
// product(shape) == data.size() always holds. Tensors are plain values;
// sharing is by copy, so concurrent reads of distinct copies are safe.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape);  // zero-filled
  Tensor(std::vector<int> shape, std::vector<double> data);

  static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }
  static Tensor full(std::vector<int> shape, double value);

  int ndim() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_[static_cast<size_t>(i)]; }
  const std::vector<int>& shape() const { return shape_; }
  int size() const { return static_cast<int>(data_.size()); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& values() { return data_; }
  const std::vector<double>& values() const { return data_; }

  double& operator()(int i) { return data_[static_cast<size_t>(i)]; }
  double operator()(int i) const { return data_[static_cast<size_t>(i)]; }
  double& operator()(int i, int j) {
    return data_[static_cast<size_t>(i) * shape_[1] + j];
  }
  double operator()(int i, int j) const {
    return data_[static_cast<size_t>(i) * shape_[1] + j];
  }
  double& operator()(int i, int j, int k) {
    return data_[(static_cast<size_t>(i) * shape_[1] + j) * shape_[2] + k];
  }
  double operator()(int i, int j, int k) const {
    return data_[(static_cast<size_t>(i) * shape_[1] + j) * shape_[2] + k];
  }

  // Row view of a 2-D tensor.
  std::span<double> row(int i);
  std::span<const double> row(int i) const;

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  void fill(double v);
  bool all_finite() const;

 private:
  std::vector<int> shape_;
  std::vector<double> data_;
};

// Throws std::runtime_error mentioning `context` if t holds a NaN or Inf.
void check_finite(const Tensor& t, const std::string& context);

// C = A[m x k] * B[k x n]. Shape mismatch throws.
Tensor matmul(const Tensor& a, const Tensor& b);
// C += A * B into an existing, correctly shaped tensor.
void matmul_accum(const Tensor& a, const Tensor& b, Tensor& c);
// C = A^T * B for A[k x m], B[k x n] -> [m x n]. Weight-gradient shape.
Tensor matmul_tn(const Tensor& a, const Tensor& b);
void matmul_tn_accum(const Tensor& a, const Tensor& b, Tensor& c);
// C = A * B^T for A[m x k], B[n x k] -> [m x n]. Input-gradient shape.
Tensor matmul_nt(const Tensor& a, const Tensor& b);
void matmul_nt_accum(const Tensor& a, const Tensor& b, Tensor& c);

Tensor transpose(const Tensor& a);  // 2-D

// Softmax along `axis` with per-slice max subtraction. Finite input required.
Tensor softmax(const Tensor& x, int axis);

enum class Activation { sigmoid, tanh, relu };

Tensor elementwise(const Tensor& x, Activation f);
double activate(double x, Activation f);
// Derivative expressed in terms of the activation output y = f(x).
double activate_grad_from_output(double y, Activation f);

// Inverted dropout: each element zeroed with probability rate, survivors
// scaled by 1/(1-rate); identity when training == false. rate must be < 1.
Tensor dropout(const Tensor& x, double rate, Rng& rng, bool training);
// Variant that exposes the 0/scale mask for backward passes.
Tensor dropout(const Tensor& x, double rate, Rng& rng, bool training,
               Tensor* mask_out);

}  // namespace del
