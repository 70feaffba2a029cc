#include "episodica/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <utility>

#include "episodica/error.hpp"

namespace episodica {

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

namespace {

void validate_shape(const Shape& shape) {
  if (shape.size() > Tensor::kMaxRank)
    throw DimensionError("tensor rank " + std::to_string(shape.size()) + " exceeds 4");
  for (auto d : shape)
    if (d == 0) throw DimensionError("tensor shape " + shape_to_string(shape) + " has a zero dimension");
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_to_string(a.shape()) + " vs " +
                         shape_to_string(b.shape()));
}

void require_rank2(const Tensor& a, const char* op) {
  if (a.rank() != 2)
    throw DimensionError(std::string(op) + ": expected a rank-2 tensor, got " + shape_to_string(a.shape()));
}

template <class F>
Tensor map(const Tensor& a, F f) {
  Tensor out(a.shape());
  auto src = a.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = f(src[i]);
  return out;
}

template <class F>
Tensor zip(const Tensor& a, const Tensor& b, const char* op, F f) {
  // a rank-0 operand broadcasts against the other
  if (a.rank() == 0 && b.rank() != 0) return zip(Tensor::full(b.shape(), a.item()), b, op, f);
  if (b.rank() == 0 && a.rank() != 0) return zip(a, Tensor::full(a.shape(), b.item()), op, f);
  require_same_shape(a, b, op);
  Tensor out(a.shape());
  auto x = a.data();
  auto y = b.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < x.size(); ++i) dst[i] = f(x[i], y[i]);
  return out;
}

}  // namespace

Tensor::Tensor() : data_(1, 0.0f) {}

Tensor::Tensor(Shape shape) : shape_(std::move(shape)) {
  validate_shape(shape_);
  data_.assign(shape_numel(shape_), 0.0f);
}

Tensor::Tensor(Shape shape, std::vector<float> data) : shape_(std::move(shape)), data_(std::move(data)) {
  validate_shape(shape_);
  if (data_.size() != shape_numel(shape_))
    throw DimensionError("tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                         shape_to_string(shape_));
}

Tensor Tensor::scalar(float value) { return Tensor({}, {value}); }

Tensor Tensor::full(Shape shape, float value) {
  Tensor t(std::move(shape));
  std::fill(t.data_.begin(), t.data_.end(), value);
  return t;
}

Tensor Tensor::from_rows(const std::vector<std::vector<float>>& rows) {
  if (rows.empty() || rows.front().empty()) throw DimensionError("from_rows: empty input");
  const std::size_t cols = rows.front().size();
  std::vector<float> data;
  data.reserve(rows.size() * cols);
  for (const auto& r : rows) {
    if (r.size() != cols) throw DimensionError("from_rows: ragged rows");
    data.insert(data.end(), r.begin(), r.end());
  }
  return Tensor({rows.size(), cols}, std::move(data));
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= shape_.size())
    throw DimensionError("axis " + std::to_string(axis) + " out of range for " + shape_to_string(shape_));
  return shape_[axis];
}

std::span<const float> Tensor::row(std::size_t r) const {
  const std::size_t width = shape_.size() < 2 ? data_.size() : data_.size() / shape_[0];
  return std::span<const float>(data_).subspan(r * width, width);
}

std::span<float> Tensor::row(std::size_t r) {
  const std::size_t width = shape_.size() < 2 ? data_.size() : data_.size() / shape_[0];
  return std::span<float>(data_).subspan(r * width, width);
}

float Tensor::item() const {
  if (data_.size() != 1)
    throw ContractError("item() on tensor of shape " + shape_to_string(shape_));
  return data_[0];
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_numel(shape) != data_.size())
    throw DimensionError("cannot reshape " + shape_to_string(shape_) + " to " + shape_to_string(shape));
  return Tensor(std::move(shape), data_);
}

bool Tensor::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](float v) { return std::isfinite(v); });
}

namespace kernels {

void gemm(const float* a, const float* b, float* c, std::size_t m, std::size_t k, std::size_t n,
          bool trans_a, bool trans_b, bool accumulate) {
  std::vector<double> acc(n);
  for (std::size_t i = 0; i < m; ++i) {
    float* crow = c + i * n;
    if (trans_b) {
      // rows of B are contiguous: straight dot products
      const float* arow = trans_a ? nullptr : a + i * k;
      for (std::size_t j = 0; j < n; ++j) {
        const float* brow = b + j * k;
        double s = 0.0;
        if (arow) {
          for (std::size_t p = 0; p < k; ++p) s += static_cast<double>(arow[p]) * brow[p];
        } else {
          for (std::size_t p = 0; p < k; ++p) s += static_cast<double>(a[p * m + i]) * brow[p];
        }
        crow[j] = accumulate ? static_cast<float>(crow[j] + s) : static_cast<float>(s);
      }
      continue;
    }
    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::size_t p = 0; p < k; ++p) {
      const double av = trans_a ? a[p * m + i] : a[i * k + p];
      if (av == 0.0) continue;
      const float* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) acc[j] += av * brow[j];
    }
    if (accumulate) {
      for (std::size_t j = 0; j < n; ++j) crow[j] = static_cast<float>(crow[j] + acc[j]);
    } else {
      for (std::size_t j = 0; j < n; ++j) crow[j] = static_cast<float>(acc[j]);
    }
  }
}

}  // namespace kernels

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
    throw DimensionError("matmul: incompatible shapes " + shape_to_string(a.shape()) + " and " +
                         shape_to_string(b.shape()));
  Tensor out({a.dim(0), b.dim(1)});
  kernels::gemm(a.raw(), b.raw(), out.raw(), a.dim(0), a.dim(1), b.dim(1), false, false, false);
  return out;
}

Tensor transpose(const Tensor& a) {
  require_rank2(a, "transpose");
  const std::size_t r = a.dim(0), c = a.dim(1);
  Tensor out({c, r});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out.at(j, i) = a.at(i, j);
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  return zip(a, b, "add", [](float x, float y) { return x + y; });
}
Tensor sub(const Tensor& a, const Tensor& b) {
  return zip(a, b, "sub", [](float x, float y) { return x - y; });
}
Tensor mul(const Tensor& a, const Tensor& b) {
  return zip(a, b, "mul", [](float x, float y) { return x * y; });
}
Tensor scale(const Tensor& a, float factor) {
  return map(a, [factor](float x) { return x * factor; });
}
Tensor add_scalar(const Tensor& a, float value) {
  return map(a, [value](float x) { return x + value; });
}
Tensor relu(const Tensor& a) {
  return map(a, [](float x) { return x > 0.0f ? x : 0.0f; });
}
Tensor exp(const Tensor& a) {
  return map(a, [](float x) { return std::exp(x); });
}

Tensor log(const Tensor& a) {
  for (std::size_t i = 0; i < a.size(); ++i)
    if (!(a[i] > 0.0f))
      throw NumericError("log: non-positive value " + std::to_string(a[i]) + " at flat index " + std::to_string(i));
  return map(a, [](float x) { return std::log(x); });
}

Tensor l2_normalize(const Tensor& a) {
  require_rank2(a, "l2_normalize");
  Tensor out(a.shape());
  for (std::size_t r = 0; r < a.dim(0); ++r) {
    auto src = a.row(r);
    double ss = 0.0;
    for (float v : src) ss += static_cast<double>(v) * v;
    const double norm = std::sqrt(ss);
    if (norm < 1e-12) throw NumericError("l2_normalize: row " + std::to_string(r) + " has near-zero norm");
    auto dst = out.row(r);
    for (std::size_t c = 0; c < src.size(); ++c) dst[c] = static_cast<float>(src[c] / norm);
  }
  return out;
}

Tensor softmax_rows(const Tensor& a) {
  require_rank2(a, "softmax_rows");
  Tensor out(a.shape());
  std::vector<double> e(a.dim(1));
  for (std::size_t r = 0; r < a.dim(0); ++r) {
    auto src = a.row(r);
    const double mx = *std::max_element(src.begin(), src.end());
    double total = 0.0;
    for (std::size_t c = 0; c < src.size(); ++c) total += (e[c] = std::exp(src[c] - mx));
    auto dst = out.row(r);
    for (std::size_t c = 0; c < src.size(); ++c) dst[c] = static_cast<float>(e[c] / total);
  }
  return out;
}

double sum(const Tensor& a) {
  double s = 0.0;
  for (float v : a.data()) s += v;
  return s;
}

Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t end) {
  if (a.rank() < 1 || begin >= end || end > a.dim(0))
    throw DimensionError("slice_rows: range [" + std::to_string(begin) + "," + std::to_string(end) +
                         ") invalid for " + shape_to_string(a.shape()));
  Shape shape = a.shape();
  shape[0] = end - begin;
  const std::size_t width = a.size() / a.dim(0);
  std::vector<float> data(a.raw() + begin * width, a.raw() + end * width);
  return Tensor(std::move(shape), std::move(data));
}

Tensor concat_rows(const Tensor& a, const Tensor& b) {
  if (a.rank() < 1 || a.rank() != b.rank() ||
      !std::equal(a.shape().begin() + 1, a.shape().end(), b.shape().begin() + 1))
    throw DimensionError("concat_rows: incompatible shapes " + shape_to_string(a.shape()) + " and " +
                         shape_to_string(b.shape()));
  Shape shape = a.shape();
  shape[0] += b.dim(0);
  std::vector<float> data(a.data().begin(), a.data().end());
  data.insert(data.end(), b.data().begin(), b.data().end());
  return Tensor(std::move(shape), std::move(data));
}

}  // namespace episodica
