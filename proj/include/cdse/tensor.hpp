// Copyright 2026 CDSE Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef CDSE_TENSOR_HPP_
#define CDSE_TENSOR_HPP_

#include <cmath>
#include <initializer_list>
#include <utility>
#include <vector>

#include "cdse/common.hpp"

namespace cdse {

// Dense row-major tensor of float or double. Plain value type; the autodiff
// graph wraps it (see autodiff.hpp).
template <typename T>
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape shape)
      : shape_(std::move(shape)),
        data_(static_cast<size_t>(NumelOf(shape_)), T(0)) {
    CheckShape();
  }

  Tensor(Shape shape, std::vector<T> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    CheckShape();
    CDSE_CHECK(static_cast<int64_t>(data_.size()) == NumelOf(shape_),
               ErrorKind::kDimension, "buffer length ", data_.size(),
               " does not match shape ", ShapeStr(shape_));
  }

  static Tensor Full(Shape shape, T value) {
    Tensor t(std::move(shape));
    for (auto& v : t.data_) v = value;
    return t;
  }

  static Tensor Scalar(T value) { return Full({1}, value); }

  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_[static_cast<size_t>(i)]; }
  int64_t numel() const { return static_cast<int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::vector<T>& vec() { return data_; }
  const std::vector<T>& vec() const { return data_; }

  T& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
  T operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

  // 2-D accessors (rows x cols).
  T& at(int r, int c) { return data_[static_cast<size_t>(r) * dim(1) + c]; }
  T at(int r, int c) const { return data_[static_cast<size_t>(r) * dim(1) + c]; }

  bool SameShape(const Tensor& other) const { return shape_ == other.shape_; }

  void Fill(T value) {
    for (auto& v : data_) v = value;
  }

  template <typename U>
  Tensor<U> Cast() const {
    std::vector<U> out(data_.size());
    for (size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<U>(data_[i]);
    return Tensor<U>(shape_, std::move(out));
  }

  // Finite inputs must yield finite outputs; overflow is an error, not a
  // silently propagating NaN/Inf.
  void CheckFinite(const char* what) const {
    for (const T& v : data_) {
      if (!std::isfinite(static_cast<double>(v))) {
        ThrowF(ErrorKind::kNumeric, "non-finite value produced by ", what);
      }
    }
  }

 private:
  void CheckShape() const {
    for (int d : shape_) {
      CDSE_CHECK(d > 0, ErrorKind::kParameter,
                 "tensor dimensions must be positive, got ", ShapeStr(shape_));
    }
  }

  Shape shape_;
  std::vector<T> data_;
};

}  // namespace cdse

#endif  // CDSE_TENSOR_HPP_
