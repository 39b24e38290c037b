#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "hdcam/common.hpp"

namespace hdcam {

using Shape = std::vector<int64_t>;

int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// Dense row-major tensor, float32 or float64. Cheap to copy (shared storage);
// the gradient buffer lives beside the data and is lazily allocated when the
// tape first writes to it. Tensors with grad disabled are immutable by
// convention once built and safe to share across threads.
template <typename T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape);                 // zero-filled
  Tensor(Shape shape, std::vector<T> values);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor full(Shape shape, T value);
  static Tensor scalar(T value) { return Tensor({1}, {value}); }
  static Tensor randn(Shape shape, Rng& rng, T stddev = T(1));
  static Tensor uniform(Shape shape, Rng& rng, T lo, T hi);

  bool defined() const { return s_ != nullptr; }
  const Shape& shape() const { return s_->shape; }
  int rank() const { return static_cast<int>(s_->shape.size()); }
  int64_t dim(int i) const;  // negative i counts from the back
  int64_t numel() const { return static_cast<int64_t>(s_->data.size()); }

  T* data() { return s_->data.data(); }
  const T* data() const { return s_->data.data(); }
  const std::vector<T>& values() const { return s_->data; }

  T item() const;  // requires numel()==1

  bool requires_grad() const { return s_ != nullptr && s_->requires_grad; }
  Tensor& set_requires_grad(bool on) {
    s_->requires_grad = on;
    return *this;
  }

  // Gradient accessors. grad() allocates a zero buffer on first use;
  // grad_data() returns nullptr when no gradient has been accumulated yet.
  T* grad();
  const T* grad_data() const {
    return s_->grad.empty() ? nullptr : s_->grad.data();
  }
  void zero_grad();
  double grad_norm() const;

  // Deep copy; does not copy gradient state.
  Tensor clone() const;

  bool same_storage(const Tensor& other) const { return s_ == other.s_; }

 private:
  struct Storage {
    Shape shape;
    std::vector<T> data;
    std::vector<T> grad;
    bool requires_grad = false;
  };
  std::shared_ptr<Storage> s_;
};

// Reverse-mode tape. Ops record a backward rule as they execute; backward()
// seeds d(loss)/d(loss)=1 and replays the rules in exact reverse recording
// order, accumulating gradients additively across fan-out.
template <typename T>
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void record(std::function<void()> backward_rule) {
    ops_.push_back(std::move(backward_rule));
  }
  std::size_t size() const { return ops_.size(); }
  void clear() { ops_.clear(); }

  void backward(Tensor<T>& loss);

  static Tape* active();

 private:
  template <typename U>
  friend class TapeScope;
  std::vector<std::function<void()>> ops_;
};

// Activates a tape for the current thread for the scope's lifetime.
template <typename T>
class TapeScope {
 public:
  explicit TapeScope(Tape<T>& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape<T>* prev_;
};

template <typename T>
bool tape_recording();  // a tape is active on this thread

}  // namespace hdcam
