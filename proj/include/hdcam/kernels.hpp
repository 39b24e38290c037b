#pragma once

#include <cstddef>

// Dense inner-loop kernels behind the tensor ops. Every entry point has a
// scalar reference implementation and (on x86-64 with AVX2+FMA) a vectorized
// variant; the backend is chosen once at startup from cpuid, overridable via
// HDCAM_SIMD={auto,scalar,avx2} or set_backend(). Scalar and SIMD variants are
// equivalence-tested against each other; results may differ by normal
// floating-point reassociation, never structurally.
//
// GEMM conventions (row-major, contiguous):
//   gemm_nn: C[m,n] (+)= A[m,k] * B[k,n]
//   gemm_nt: C[m,n] (+)= A[m,k] * B[n,k]^T
//   gemm_tn: C[m,n] (+)= A[k,m]^T * B[k,n]
// `accumulate` selects += vs overwrite.

namespace hdcam::kernels {

enum class Backend { scalar = 0, avx2 = 1 };

const char* backend_name(Backend b);
bool backend_supported(Backend b);
Backend active_backend();
void set_backend(Backend b);  // throws ConfigError if unsupported on this CPU

template <typename T>
struct Table {
  void (*add)(const T* a, const T* b, T* out, std::size_t n);
  void (*mul)(const T* a, const T* b, T* out, std::size_t n);
  void (*scale)(const T* a, T c, T* out, std::size_t n);
  void (*axpy)(T alpha, const T* x, T* y, std::size_t n);       // y += alpha*x
  void (*vmac)(const T* a, const T* b, T* acc, std::size_t n);  // acc += a.*b
  T (*dot)(const T* a, const T* b, std::size_t n);
  T (*sum)(const T* a, std::size_t n);
  void (*gemm_nn)(const T* A, const T* B, T* C, std::size_t m, std::size_t k,
                  std::size_t n, bool accumulate);
  void (*gemm_nt)(const T* A, const T* B, T* C, std::size_t m, std::size_t k,
                  std::size_t n, bool accumulate);
  void (*gemm_tn)(const T* A, const T* B, T* C, std::size_t m, std::size_t k,
                  std::size_t n, bool accumulate);
  // Fused Adam update, bias-corrected: bc1 = 1-beta1^t, bc2 = 1-beta2^t.
  void (*adam_update)(T* param, const T* grad, T* m, T* v, std::size_t n, T lr,
                      T beta1, T beta2, T eps, T bc1, T bc2);
};

template <typename T>
const Table<T>& table();

namespace detail {
const Table<float>& scalar_table_f32();
const Table<double>& scalar_table_f64();
#if defined(__x86_64__) || defined(_M_X64)
const Table<float>& avx2_table_f32();
const Table<double>& avx2_table_f64();
#endif
}  // namespace detail

// Convenience wrappers through the active backend.
template <typename T>
inline void add(const T* a, const T* b, T* out, std::size_t n) {
  table<T>().add(a, b, out, n);
}
template <typename T>
inline void mul(const T* a, const T* b, T* out, std::size_t n) {
  table<T>().mul(a, b, out, n);
}
template <typename T>
inline void scale(const T* a, T c, T* out, std::size_t n) {
  table<T>().scale(a, c, out, n);
}
template <typename T>
inline void axpy(T alpha, const T* x, T* y, std::size_t n) {
  table<T>().axpy(alpha, x, y, n);
}
template <typename T>
inline void vmac(const T* a, const T* b, T* acc, std::size_t n) {
  table<T>().vmac(a, b, acc, n);
}
template <typename T>
inline T dot(const T* a, const T* b, std::size_t n) {
  return table<T>().dot(a, b, n);
}
template <typename T>
inline T sum(const T* a, std::size_t n) {
  return table<T>().sum(a, n);
}
template <typename T>
inline void gemm_nn(const T* A, const T* B, T* C, std::size_t m, std::size_t k,
                    std::size_t n, bool accumulate = false) {
  table<T>().gemm_nn(A, B, C, m, k, n, accumulate);
}
template <typename T>
inline void gemm_nt(const T* A, const T* B, T* C, std::size_t m, std::size_t k,
                    std::size_t n, bool accumulate = false) {
  table<T>().gemm_nt(A, B, C, m, k, n, accumulate);
}
template <typename T>
inline void gemm_tn(const T* A, const T* B, T* C, std::size_t m, std::size_t k,
                    std::size_t n, bool accumulate = false) {
  table<T>().gemm_tn(A, B, C, m, k, n, accumulate);
}
template <typename T>
inline void adam_update(T* param, const T* grad, T* m, T* v, std::size_t n,
                        T lr, T beta1, T beta2, T eps, T bc1, T bc2) {
  table<T>().adam_update(param, grad, m, v, n, lr, beta1, beta2, eps, bc1, bc2);
}

}  // namespace hdcam::kernels
