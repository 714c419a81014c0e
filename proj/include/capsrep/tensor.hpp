#pragma once

#include <cstdint>
#include <initializer_list>
#include <memory>
#include <vector>

#include "capsrep/errors.hpp"

namespace capsrep::nd {

using Shape = std::vector<std::int64_t>;

inline std::int64_t shape_numel(const Shape& s) {
  std::int64_t n = 1;
  for (auto d : s) n *= d;
  return n;
}

// Dense row-major float32 tensor. The storage buffer is shared between
// copies and reshapes; any mutable access clones a shared buffer first, so
// tensors behave as immutable values once handed out.
class Tensor {
 public:
  Tensor() : shape_{0}, buf_(std::make_shared<std::vector<float>>()) {}

  explicit Tensor(Shape shape)
      : shape_(std::move(shape)),
        buf_(std::make_shared<std::vector<float>>()) {
    validate_shape();
    buf_->assign(static_cast<size_t>(shape_numel(shape_)), 0.0f);
  }

  Tensor(Shape shape, std::vector<float> data)
      : shape_(std::move(shape)),
        buf_(std::make_shared<std::vector<float>>(std::move(data))) {
    validate_shape();
    if (shape_numel(shape_) != static_cast<std::int64_t>(buf_->size()))
      throw DimError("tensor: shape " + shape_str(shape_) + " expects " +
                     std::to_string(shape_numel(shape_)) + " values, got " +
                     std::to_string(buf_->size()));
  }

  static Tensor scalar(float v) { return Tensor({1}, {v}); }

  static Tensor full(Shape shape, float v) {
    Tensor t(std::move(shape));
    for (auto& x : *t.buf_) x = v;
    return t;
  }

  const Shape& shape() const { return shape_; }
  size_t ndim() const { return shape_.size(); }
  std::int64_t dim(size_t i) const {
    if (i >= shape_.size())
      throw DimError("tensor.dim: axis " + std::to_string(i) +
                     " out of range for shape " + shape_str(shape_));
    return shape_[i];
  }
  std::int64_t numel() const { return shape_numel(shape_); }

  const float* data() const { return buf_->data(); }
  float* mutable_data() {
    ensure_unique();
    return buf_->data();
  }

  float operator[](std::int64_t i) const {
    return (*buf_)[static_cast<size_t>(i)];
  }

  float at(std::initializer_list<std::int64_t> idx) const {
    return (*buf_)[flat_index(idx)];
  }
  void set(std::initializer_list<std::int64_t> idx, float v) {
    ensure_unique();
    (*buf_)[flat_index(idx)] = v;
  }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  // O(1): shares the buffer under a new shape with the same element count.
  Tensor reshaped(Shape new_shape) const {
    for (auto d : new_shape)
      if (d <= 0)
        throw DimError("tensor.reshape: non-positive dim in " +
                       shape_str(new_shape));
    if (shape_numel(new_shape) != numel())
      throw DimError("tensor.reshape: cannot view " + shape_str(shape_) +
                     " as " + shape_str(new_shape));
    Tensor t;
    t.shape_ = std::move(new_shape);
    t.buf_ = buf_;
    return t;
  }

  std::vector<std::int64_t> strides() const {
    std::vector<std::int64_t> s(shape_.size());
    std::int64_t acc = 1;
    for (size_t i = shape_.size(); i-- > 0;) {
      s[i] = acc;
      acc *= shape_[i];
    }
    return s;
  }

 private:
  void validate_shape() const {
    if (shape_.empty()) throw DimError("tensor: empty shape");
    for (auto d : shape_)
      if (d <= 0)
        throw DimError("tensor: non-positive dim in shape " +
                       shape_str(shape_));
  }

  size_t flat_index(std::initializer_list<std::int64_t> idx) const {
    if (idx.size() != shape_.size())
      throw DimError("tensor.at: got " + std::to_string(idx.size()) +
                     " indices for shape " + shape_str(shape_));
    std::int64_t flat = 0;
    size_t d = 0;
    for (auto i : idx) {
      if (i < 0 || i >= shape_[d])
        throw DimError("tensor.at: index " + std::to_string(i) +
                       " out of range for axis " + std::to_string(d) +
                       " of shape " + shape_str(shape_));
      flat = flat * shape_[d] + i;
      ++d;
    }
    return static_cast<size_t>(flat);
  }

  void ensure_unique() {
    if (buf_.use_count() > 1)
      buf_ = std::make_shared<std::vector<float>>(*buf_);
  }

  Shape shape_;
  std::shared_ptr<std::vector<float>> buf_;
};

}  // namespace capsrep::nd
