#include <cmath>
#include <cstring>

#include "hdcam/kernels.hpp"

// Reference kernels. Plain loops, no tricks: these define the semantics the
// SIMD variants are tested against.

namespace hdcam::kernels {
namespace {

template <typename T>
void s_add(const T* a, const T* b, T* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

template <typename T>
void s_mul(const T* a, const T* b, T* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

template <typename T>
void s_scale(const T* a, T c, T* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * c;
}

template <typename T>
void s_axpy(T alpha, const T* x, T* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

template <typename T>
void s_vmac(const T* a, const T* b, T* acc, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) acc[i] += a[i] * b[i];
}

template <typename T>
T s_dot(const T* a, const T* b, std::size_t n) {
  T acc = 0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

template <typename T>
T s_sum(const T* a, std::size_t n) {
  T acc = 0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i];
  return acc;
}

template <typename T>
void s_gemm_nn(const T* A, const T* B, T* C, std::size_t m, std::size_t k,
               std::size_t n, bool accumulate) {
  if (!accumulate) std::memset(C, 0, m * n * sizeof(T));
  for (std::size_t i = 0; i < m; ++i) {
    T* crow = C + i * n;
    for (std::size_t kk = 0; kk < k; ++kk) {
      const T a = A[i * k + kk];
      const T* brow = B + kk * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += a * brow[j];
    }
  }
}

template <typename T>
void s_gemm_nt(const T* A, const T* B, T* C, std::size_t m, std::size_t k,
               std::size_t n, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    const T* arow = A + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const T v = s_dot(arow, B + j * k, k);
      C[i * n + j] = accumulate ? C[i * n + j] + v : v;
    }
  }
}

template <typename T>
void s_gemm_tn(const T* A, const T* B, T* C, std::size_t m, std::size_t k,
               std::size_t n, bool accumulate) {
  if (!accumulate) std::memset(C, 0, m * n * sizeof(T));
  for (std::size_t kk = 0; kk < k; ++kk) {
    const T* arow = A + kk * m;
    const T* brow = B + kk * n;
    for (std::size_t i = 0; i < m; ++i) {
      const T a = arow[i];
      T* crow = C + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += a * brow[j];
    }
  }
}

template <typename T>
void s_adam_update(T* param, const T* grad, T* m, T* v, std::size_t n, T lr,
                   T beta1, T beta2, T eps, T bc1, T bc2) {
  for (std::size_t i = 0; i < n; ++i) {
    const T g = grad[i];
    m[i] = beta1 * m[i] + (1 - beta1) * g;
    v[i] = beta2 * v[i] + (1 - beta2) * g * g;
    const T mhat = m[i] / bc1;
    const T vhat = v[i] / bc2;
    param[i] -= lr * mhat / (std::sqrt(vhat) + eps);
  }
}

template <typename T>
Table<T> make_scalar_table() {
  Table<T> t;
  t.add = &s_add<T>;
  t.mul = &s_mul<T>;
  t.scale = &s_scale<T>;
  t.axpy = &s_axpy<T>;
  t.vmac = &s_vmac<T>;
  t.dot = &s_dot<T>;
  t.sum = &s_sum<T>;
  t.gemm_nn = &s_gemm_nn<T>;
  t.gemm_nt = &s_gemm_nt<T>;
  t.gemm_tn = &s_gemm_tn<T>;
  t.adam_update = &s_adam_update<T>;
  return t;
}

}  // namespace

namespace detail {

const Table<float>& scalar_table_f32() {
  static const Table<float> t = make_scalar_table<float>();
  return t;
}

const Table<double>& scalar_table_f64() {
  static const Table<double> t = make_scalar_table<double>();
  return t;
}

}  // namespace detail
}  // namespace hdcam::kernels
