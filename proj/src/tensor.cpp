#include "del/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace del {

namespace {

size_t checked_size(const std::vector<int>& shape) {
  size_t n = 1;
  for (int d : shape) {
    if (d <= 0) throw std::invalid_argument("tensor dims must be positive");
    n *= static_cast<size_t>(d);
  }
  return n;
}

}  // namespace

Tensor::Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
  data_.assign(checked_size(shape_), 0.0);
}

Tensor::Tensor(std::vector<int> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (checked_size(shape_) != data_.size())
    throw std::invalid_argument("tensor shape does not match data length");
}

Tensor Tensor::full(std::vector<int> shape, double value) {
  Tensor t(std::move(shape));
  t.fill(value);
  return t;
}

std::span<double> Tensor::row(int i) {
  if (ndim() != 2) throw std::invalid_argument("row() requires a 2-D tensor");
  return {data_.data() + static_cast<size_t>(i) * shape_[1],
          static_cast<size_t>(shape_[1])};
}

std::span<const double> Tensor::row(int i) const {
  if (ndim() != 2) throw std::invalid_argument("row() requires a 2-D tensor");
  return {data_.data() + static_cast<size_t>(i) * shape_[1],
          static_cast<size_t>(shape_[1])};
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor::all_finite() const {
  for (double v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

void check_finite(const Tensor& t, const std::string& context) {
  if (!t.all_finite())
    throw std::runtime_error("non-finite values in " + context);
}

namespace {

void require_matmul_shapes(const Tensor& a, const Tensor& b, int ak, int bk,
                           const char* what) {
  if (a.ndim() != 2 || b.ndim() != 2)
    throw std::invalid_argument(std::string(what) + ": operands must be 2-D");
  if (ak != bk)
    throw std::invalid_argument(std::string(what) + ": inner dims disagree");
}

}  // namespace

void matmul_accum(const Tensor& a, const Tensor& b, Tensor& c) {
  require_matmul_shapes(a, b, a.dim(1), b.dim(0), "matmul");
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (c.ndim() != 2 || c.dim(0) != m || c.dim(1) != n)
    throw std::invalid_argument("matmul: output shape mismatch");
  const double* ap = a.data();
  const double* bp = b.data();
  double* cp = c.data();
  for (int i = 0; i < m; ++i) {
    const double* arow = ap + static_cast<size_t>(i) * k;
    double* crow = cp + static_cast<size_t>(i) * n;
    for (int p = 0; p < k; ++p) {
      const double av = arow[p];
      const double* brow = bp + static_cast<size_t>(p) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matmul_shapes(a, b, a.dim(1), b.dim(0), "matmul");
  Tensor c({a.dim(0), b.dim(1)});
  matmul_accum(a, b, c);
  return c;
}

void matmul_tn_accum(const Tensor& a, const Tensor& b, Tensor& c) {
  require_matmul_shapes(a, b, a.dim(0), b.dim(0), "matmul_tn");
  const int k = a.dim(0), m = a.dim(1), n = b.dim(1);
  if (c.ndim() != 2 || c.dim(0) != m || c.dim(1) != n)
    throw std::invalid_argument("matmul_tn: output shape mismatch");
  const double* ap = a.data();
  const double* bp = b.data();
  double* cp = c.data();
  for (int t = 0; t < k; ++t) {
    const double* arow = ap + static_cast<size_t>(t) * m;
    const double* brow = bp + static_cast<size_t>(t) * n;
    for (int i = 0; i < m; ++i) {
      const double av = arow[i];
      double* crow = cp + static_cast<size_t>(i) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
  require_matmul_shapes(a, b, a.dim(0), b.dim(0), "matmul_tn");
  Tensor c({a.dim(1), b.dim(1)});
  matmul_tn_accum(a, b, c);
  return c;
}

void matmul_nt_accum(const Tensor& a, const Tensor& b, Tensor& c) {
  require_matmul_shapes(a, b, a.dim(1), b.dim(1), "matmul_nt");
  const int m = a.dim(0), k = a.dim(1), n = b.dim(0);
  if (c.ndim() != 2 || c.dim(0) != m || c.dim(1) != n)
    throw std::invalid_argument("matmul_nt: output shape mismatch");
  // B is walked row-wise: C[i,j] = sum_k A[i,k] * B[j,k].
  const double* ap = a.data();
  const double* bp = b.data();
  double* cp = c.data();
  for (int i = 0; i < m; ++i) {
    const double* arow = ap + static_cast<size_t>(i) * k;
    double* crow = cp + static_cast<size_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      const double* brow = bp + static_cast<size_t>(j) * k;
      double s = 0.0;
      for (int p = 0; p < k; ++p) s += arow[p] * brow[p];
      crow[j] += s;
    }
  }
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_matmul_shapes(a, b, a.dim(1), b.dim(1), "matmul_nt");
  Tensor c({a.dim(0), b.dim(0)});
  matmul_nt_accum(a, b, c);
  return c;
}

Tensor transpose(const Tensor& a) {
  if (a.ndim() != 2) throw std::invalid_argument("transpose: 2-D only");
  Tensor t({a.dim(1), a.dim(0)});
  for (int i = 0; i < a.dim(0); ++i)
    for (int j = 0; j < a.dim(1); ++j) t(j, i) = a(i, j);
  return t;
}

Tensor softmax(const Tensor& x, int axis) {
  if (axis < 0 || axis >= x.ndim())
    throw std::invalid_argument("softmax: axis out of range");
  check_finite(x, "softmax input");
  const auto& shape = x.shape();
  size_t inner = 1, outer = 1;
  for (int i = axis + 1; i < x.ndim(); ++i) inner *= static_cast<size_t>(shape[i]);
  for (int i = 0; i < axis; ++i) outer *= static_cast<size_t>(shape[i]);
  const size_t n = static_cast<size_t>(shape[axis]);

  Tensor y(x.shape());
  const double* xp = x.data();
  double* yp = y.data();
  for (size_t o = 0; o < outer; ++o) {
    for (size_t in = 0; in < inner; ++in) {
      const size_t base = o * n * inner + in;
      double mx = xp[base];
      for (size_t t = 1; t < n; ++t) mx = std::max(mx, xp[base + t * inner]);
      double sum = 0.0;
      for (size_t t = 0; t < n; ++t) {
        double e = std::exp(xp[base + t * inner] - mx);
        yp[base + t * inner] = e;
        sum += e;
      }
      for (size_t t = 0; t < n; ++t) yp[base + t * inner] /= sum;
    }
  }
  return y;
}

double activate(double x, Activation f) {
  switch (f) {
    case Activation::sigmoid:
      return 1.0 / (1.0 + std::exp(-x));
    case Activation::tanh:
      return std::tanh(x);
    case Activation::relu:
      return x > 0.0 ? x : 0.0;
  }
  return 0.0;
}

double activate_grad_from_output(double y, Activation f) {
  switch (f) {
    case Activation::sigmoid:
      return y * (1.0 - y);
    case Activation::tanh:
      return 1.0 - y * y;
    case Activation::relu:
      return y > 0.0 ? 1.0 : 0.0;
  }
  return 0.0;
}

Tensor elementwise(const Tensor& x, Activation f) {
  Tensor y(x.shape());
  const double* xp = x.data();
  double* yp = y.data();
  for (int i = 0; i < x.size(); ++i) yp[i] = activate(xp[i], f);
  return y;
}

Tensor dropout(const Tensor& x, double rate, Rng& rng, bool training,
               Tensor* mask_out) {
  if (rate < 0.0 || rate >= 1.0)
    throw std::invalid_argument("dropout: rate must be in [0, 1)");
  if (!training || rate == 0.0) {
    if (mask_out) *mask_out = Tensor::full(x.shape(), 1.0);
    return x;
  }
  const double scale = 1.0 / (1.0 - rate);
  Tensor y(x.shape());
  Tensor mask(x.shape());
  for (int i = 0; i < x.size(); ++i) {
    const double keep = rng.uniform() >= rate ? scale : 0.0;
    mask(i) = keep;
    y(i) = x(i) * keep;
  }
  if (mask_out) *mask_out = std::move(mask);
  return y;
}

Tensor dropout(const Tensor& x, double rate, Rng& rng, bool training) {
  return dropout(x, rate, rng, training, nullptr);
}

}  // namespace del
