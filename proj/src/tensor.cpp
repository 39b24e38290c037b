#include "hdcam/tensor.hpp"

#include <cmath>
#include <sstream>

namespace hdcam {

int64_t shape_numel(const Shape& shape) {
  int64_t n = 1;
  for (int64_t d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << "]";
  return os.str();
}

template <typename T>
Tensor<T>::Tensor(Shape shape) : s_(std::make_shared<Storage>()) {
  for (int64_t d : shape)
    if (d < 0) throw ConfigError("negative extent in shape " + shape_str(shape));
  s_->data.assign(static_cast<size_t>(shape_numel(shape)), T(0));
  s_->shape = std::move(shape);
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> values) : s_(std::make_shared<Storage>()) {
  if (shape_numel(shape) != static_cast<int64_t>(values.size()))
    throw ConfigError("shape " + shape_str(shape) + " does not match " +
                      std::to_string(values.size()) + " values");
  s_->shape = std::move(shape);
  s_->data = std::move(values);
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value) {
  Tensor t(std::move(shape));
  for (auto& v : t.s_->data) v = value;
  return t;
}

template <typename T>
Tensor<T> Tensor<T>::randn(Shape shape, Rng& rng, T stddev) {
  Tensor t(std::move(shape));
  for (auto& v : t.s_->data) v = static_cast<T>(rng.normal() * stddev);
  return t;
}

template <typename T>
Tensor<T> Tensor<T>::uniform(Shape shape, Rng& rng, T lo, T hi) {
  Tensor t(std::move(shape));
  for (auto& v : t.s_->data) v = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

template <typename T>
int64_t Tensor<T>::dim(int i) const {
  const int r = rank();
  if (i < 0) i += r;
  if (i < 0 || i >= r)
    throw ConfigError("axis " + std::to_string(i) + " out of range for " +
                      shape_str(shape()));
  return s_->shape[static_cast<size_t>(i)];
}

template <typename T>
T Tensor<T>::item() const {
  if (numel() != 1)
    throw std::invalid_argument("item() requires a scalar tensor, got " +
                                shape_str(shape()));
  return s_->data[0];
}

template <typename T>
T* Tensor<T>::grad() {
  if (s_->grad.empty()) s_->grad.assign(s_->data.size(), T(0));
  return s_->grad.data();
}

template <typename T>
void Tensor<T>::zero_grad() {
  if (!s_->grad.empty()) s_->grad.assign(s_->data.size(), T(0));
}

template <typename T>
double Tensor<T>::grad_norm() const {
  double acc = 0;
  for (T g : s_->grad) acc += static_cast<double>(g) * static_cast<double>(g);
  return std::sqrt(acc);
}

template <typename T>
Tensor<T> Tensor<T>::clone() const {
  Tensor t;
  t.s_ = std::make_shared<Storage>();
  t.s_->shape = s_->shape;
  t.s_->data = s_->data;
  t.s_->requires_grad = s_->requires_grad;
  return t;
}

namespace {
template <typename T>
thread_local Tape<T>* g_active_tape = nullptr;
}

template <typename T>
Tape<T>* Tape<T>::active() {
  return g_active_tape<T>;
}

template <typename T>
void Tape<T>::backward(Tensor<T>& loss) {
  if (!loss.defined() || loss.numel() != 1)
    throw std::invalid_argument("backward() requires a scalar loss tensor");
  if (!loss.requires_grad())
    throw std::invalid_argument("backward() on a tensor with gradients disabled");
  loss.grad()[0] += T(1);
  for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
}

template <typename T>
TapeScope<T>::TapeScope(Tape<T>& tape) : prev_(g_active_tape<T>) {
  g_active_tape<T> = &tape;
}

template <typename T>
TapeScope<T>::~TapeScope() {
  g_active_tape<T> = prev_;
}

template <typename T>
bool tape_recording() {
  return g_active_tape<T> != nullptr;
}

template class Tensor<float>;
template class Tensor<double>;
template class Tape<float>;
template class Tape<double>;
template class TapeScope<float>;
template class TapeScope<double>;
template bool tape_recording<float>();
template bool tape_recording<double>();

}  // namespace hdcam
