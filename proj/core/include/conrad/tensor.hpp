#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace conrad {

/// Dense float32 array of rank <= 4, row-major, value semantics.
/// The single numeric currency of the library: images are [N,C,H,W],
/// logits and probabilities [N,K], per-sample statistics [N].
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::int64_t> shape, float fill = 0.0f);

  static Tensor zeros(std::vector<std::int64_t> shape) { return Tensor(std::move(shape)); }
  static Tensor full(std::vector<std::int64_t> shape, float value) {
    return Tensor(std::move(shape), value);
  }
  static Tensor from_vector(std::vector<std::int64_t> shape, std::vector<float> values);

  std::int64_t numel() const { return static_cast<std::int64_t>(data_.size()); }
  int rank() const { return static_cast<int>(shape_.size()); }
  std::int64_t size(int dim) const { return shape_.at(static_cast<std::size_t>(dim)); }
  const std::vector<std::int64_t>& shape() const { return shape_; }
  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  bool empty() const { return data_.empty(); }

  float* data() { return data_.data(); }
  const float* data() const { return data_.data(); }
  std::vector<float>& vec() { return data_; }
  const std::vector<float>& vec() const { return data_; }

  float& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
  float operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

  // [N,C,H,W] accessor; valid only for rank-4 tensors.
  float& at4(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) {
    return data_[static_cast<std::size_t>(((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w)];
  }
  float at4(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) const {
    return data_[static_cast<std::size_t>(((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w)];
  }
  // [N,K] accessor; valid only for rank-2 tensors.
  float& at2(std::int64_t n, std::int64_t k) {
    return data_[static_cast<std::size_t>(n * shape_[1] + k)];
  }
  float at2(std::int64_t n, std::int64_t k) const {
    return data_[static_cast<std::size_t>(n * shape_[1] + k)];
  }

  void fill(float value);
  Tensor reshaped(std::vector<std::int64_t> shape) const;

  /// self += alpha * other (shapes must match).
  void add_scaled(const Tensor& other, float alpha);
  void scale(float alpha);
  void clamp(float lo, float hi);

  bool all_finite() const;
  float min() const;
  float max() const;
  double sum() const;  // accumulated in double, deterministic left-to-right

  std::string shape_str() const;

 private:
  std::vector<std::int64_t> shape_;
  std::vector<float> data_;
};

std::int64_t shape_numel(const std::vector<std::int64_t>& shape);

}  // namespace conrad
