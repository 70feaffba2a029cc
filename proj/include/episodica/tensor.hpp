#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace episodica {

using Shape = std::vector<std::size_t>;

std::string shape_to_string(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

// Dense row-major float32 array of rank 0..4. Every dimension is positive.
class Tensor {
 public:
  static constexpr std::size_t kMaxRank = 4;

  /// Rank-0 zero.
  Tensor();
  /// Zero-filled tensor of the given shape.
  explicit Tensor(Shape shape);
  Tensor(Shape shape, std::vector<float> data);

  static Tensor scalar(float value);
  static Tensor full(Shape shape, float value);
  static Tensor from_rows(const std::vector<std::vector<float>>& rows);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const noexcept { return data_.size(); }

  std::span<const float> data() const noexcept { return data_; }
  std::span<float> data() noexcept { return data_; }
  const float* raw() const noexcept { return data_.data(); }
  float* raw() noexcept { return data_.data(); }

  float operator[](std::size_t i) const { return data_[i]; }
  float& operator[](std::size_t i) { return data_[i]; }

  // rank-2 accessors
  float at(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }
  float& at(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
  std::span<const float> row(std::size_t r) const;
  std::span<float> row(std::size_t r);

  /// Value of a single-element tensor.
  float item() const;
  Tensor reshaped(Shape shape) const;

  bool all_finite() const noexcept;
  friend bool operator==(const Tensor& a, const Tensor& b) = default;

 private:
  Shape shape_;
  std::vector<float> data_;
};

// Eager (non-recording) kernels. All reductions accumulate in double.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, float factor);
Tensor add_scalar(const Tensor& a, float value);
Tensor relu(const Tensor& a);
Tensor exp(const Tensor& a);
/// Throws NumericError on a non-positive entry.
Tensor log(const Tensor& a);
/// Row-wise unit Euclidean norm; throws NumericError if a row norm is below 1e-12.
Tensor l2_normalize(const Tensor& a);
/// Row-wise softmax with max subtraction.
Tensor softmax_rows(const Tensor& a);
double sum(const Tensor& a);
/// Rows [begin, end) of a rank-2 tensor.
Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t end);
/// Stacks rank-2 tensors (or rank-4 batches) along axis 0.
Tensor concat_rows(const Tensor& a, const Tensor& b);

namespace kernels {

// C (m x n) = op(A) * op(B), accumulated in double per output. When
// `accumulate` is set the product is added to C instead of overwriting it.
// A is m x k (or k x m when trans_a); B is k x n (or n x k when trans_b).
void gemm(const float* a, const float* b, float* c, std::size_t m, std::size_t k, std::size_t n,
          bool trans_a, bool trans_b, bool accumulate);

}  // namespace kernels

}  // namespace episodica
