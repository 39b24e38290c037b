#include "hdcam/kernels.hpp"

#if defined(__x86_64__) || defined(_M_X64)

#include <immintrin.h>

#include <cmath>
#include <cstring>

// AVX2+FMA variants. Compiled with per-function target attributes so the
// translation unit builds for generic x86-64 and the code paths are only
// entered after the cpuid check in kernels.cpp.

#define HDCAM_AVX2 __attribute__((target("avx2,fma")))

namespace hdcam::kernels {
namespace {

HDCAM_AVX2 inline float hsum256(__m256 v) {
  __m128 lo = _mm256_castps256_ps128(v);
  __m128 hi = _mm256_extractf128_ps(v, 1);
  lo = _mm_add_ps(lo, hi);
  __m128 shuf = _mm_movehdup_ps(lo);
  __m128 sums = _mm_add_ps(lo, shuf);
  return _mm_cvtss_f32(_mm_add_ss(sums, _mm_movehl_ps(shuf, sums)));
}

HDCAM_AVX2 inline double hsum256d(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(lo, _mm_unpackhi_pd(lo, lo)));
}

// ---- float32 ----

HDCAM_AVX2 void a_add_f32(const float* a, const float* b, float* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(out + i, _mm256_add_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
  for (; i < n; ++i) out[i] = a[i] + b[i];
}

HDCAM_AVX2 void a_mul_f32(const float* a, const float* b, float* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(out + i, _mm256_mul_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
  for (; i < n; ++i) out[i] = a[i] * b[i];
}

HDCAM_AVX2 void a_scale_f32(const float* a, float c, float* out, std::size_t n) {
  const __m256 vc = _mm256_set1_ps(c);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(out + i, _mm256_mul_ps(_mm256_loadu_ps(a + i), vc));
  for (; i < n; ++i) out[i] = a[i] * c;
}

HDCAM_AVX2 void a_axpy_f32(float alpha, const float* x, float* y, std::size_t n) {
  const __m256 va = _mm256_set1_ps(alpha);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(y + i, _mm256_fmadd_ps(va, _mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i)));
  for (; i < n; ++i) y[i] += alpha * x[i];
}

HDCAM_AVX2 void a_vmac_f32(const float* a, const float* b, float* acc, std::size_t n) {
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(acc + i, _mm256_fmadd_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i),
                                              _mm256_loadu_ps(acc + i)));
  for (; i < n; ++i) acc[i] += a[i] * b[i];
}

HDCAM_AVX2 float a_dot_f32(const float* a, const float* b, std::size_t n) {
  __m256 acc0 = _mm256_setzero_ps();
  __m256 acc1 = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 16 <= n; i += 16) {
    acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i), acc0);
    acc1 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i + 8), _mm256_loadu_ps(b + i + 8), acc1);
  }
  for (; i + 8 <= n; i += 8)
    acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i), acc0);
  float res = hsum256(_mm256_add_ps(acc0, acc1));
  for (; i < n; ++i) res += a[i] * b[i];
  return res;
}

HDCAM_AVX2 float a_sum_f32(const float* a, std::size_t n) {
  __m256 acc = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) acc = _mm256_add_ps(acc, _mm256_loadu_ps(a + i));
  float res = hsum256(acc);
  for (; i < n; ++i) res += a[i];
  return res;
}

HDCAM_AVX2 void a_gemm_nn_f32(const float* A, const float* B, float* C, std::size_t m,
                              std::size_t k, std::size_t n, bool accumulate) {
  if (!accumulate) std::memset(C, 0, m * n * sizeof(float));
  for (std::size_t i = 0; i < m; ++i) {
    float* crow = C + i * n;
    std::size_t kk = 0;
    // Two rows of B per pass to cut load traffic on crow.
    for (; kk + 2 <= k; kk += 2) {
      const __m256 a0 = _mm256_set1_ps(A[i * k + kk]);
      const __m256 a1 = _mm256_set1_ps(A[i * k + kk + 1]);
      const float* b0 = B + kk * n;
      const float* b1 = B + (kk + 1) * n;
      std::size_t j = 0;
      for (; j + 8 <= n; j += 8) {
        __m256 c = _mm256_loadu_ps(crow + j);
        c = _mm256_fmadd_ps(a0, _mm256_loadu_ps(b0 + j), c);
        c = _mm256_fmadd_ps(a1, _mm256_loadu_ps(b1 + j), c);
        _mm256_storeu_ps(crow + j, c);
      }
      for (; j < n; ++j) crow[j] += A[i * k + kk] * b0[j] + A[i * k + kk + 1] * b1[j];
    }
    for (; kk < k; ++kk) {
      const float a = A[i * k + kk];
      const float* brow = B + kk * n;
      a_axpy_f32(a, brow, crow, n);
    }
  }
}

HDCAM_AVX2 void a_gemm_nt_f32(const float* A, const float* B, float* C, std::size_t m,
                              std::size_t k, std::size_t n, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    const float* arow = A + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const float v = a_dot_f32(arow, B + j * k, k);
      C[i * n + j] = accumulate ? C[i * n + j] + v : v;
    }
  }
}

HDCAM_AVX2 void a_gemm_tn_f32(const float* A, const float* B, float* C, std::size_t m,
                              std::size_t k, std::size_t n, bool accumulate) {
  if (!accumulate) std::memset(C, 0, m * n * sizeof(float));
  for (std::size_t kk = 0; kk < k; ++kk) {
    const float* arow = A + kk * m;
    const float* brow = B + kk * n;
    for (std::size_t i = 0; i < m; ++i) a_axpy_f32(arow[i], brow, C + i * n, n);
  }
}

HDCAM_AVX2 void a_adam_f32(float* p, const float* g, float* m, float* v, std::size_t n,
                           float lr, float b1, float b2, float eps, float bc1, float bc2) {
  const __m256 vb1 = _mm256_set1_ps(b1);
  const __m256 vb2 = _mm256_set1_ps(b2);
  const __m256 v1mb1 = _mm256_set1_ps(1.0f - b1);
  const __m256 v1mb2 = _mm256_set1_ps(1.0f - b2);
  const __m256 vlr = _mm256_set1_ps(lr);
  const __m256 veps = _mm256_set1_ps(eps);
  const __m256 vibc1 = _mm256_set1_ps(1.0f / bc1);
  const __m256 vibc2 = _mm256_set1_ps(1.0f / bc2);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 vg = _mm256_loadu_ps(g + i);
    __m256 vm = _mm256_fmadd_ps(vb1, _mm256_loadu_ps(m + i), _mm256_mul_ps(v1mb1, vg));
    __m256 vv = _mm256_fmadd_ps(vb2, _mm256_loadu_ps(v + i),
                                _mm256_mul_ps(v1mb2, _mm256_mul_ps(vg, vg)));
    _mm256_storeu_ps(m + i, vm);
    _mm256_storeu_ps(v + i, vv);
    const __m256 mhat = _mm256_mul_ps(vm, vibc1);
    const __m256 vhat = _mm256_mul_ps(vv, vibc2);
    const __m256 denom = _mm256_add_ps(_mm256_sqrt_ps(vhat), veps);
    const __m256 upd = _mm256_div_ps(_mm256_mul_ps(vlr, mhat), denom);
    _mm256_storeu_ps(p + i, _mm256_sub_ps(_mm256_loadu_ps(p + i), upd));
  }
  for (; i < n; ++i) {
    const float gg = g[i];
    m[i] = b1 * m[i] + (1 - b1) * gg;
    v[i] = b2 * v[i] + (1 - b2) * gg * gg;
    p[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps);
  }
}

// ---- float64 ----

HDCAM_AVX2 void a_add_f64(const double* a, const double* b, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(out + i, _mm256_add_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  for (; i < n; ++i) out[i] = a[i] + b[i];
}

HDCAM_AVX2 void a_mul_f64(const double* a, const double* b, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  for (; i < n; ++i) out[i] = a[i] * b[i];
}

HDCAM_AVX2 void a_scale_f64(const double* a, double c, double* out, std::size_t n) {
  const __m256d vc = _mm256_set1_pd(c);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_loadu_pd(a + i), vc));
  for (; i < n; ++i) out[i] = a[i] * c;
}

HDCAM_AVX2 void a_axpy_f64(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  for (; i < n; ++i) y[i] += alpha * x[i];
}

HDCAM_AVX2 void a_vmac_f64(const double* a, const double* b, double* acc, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(acc + i, _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i),
                                              _mm256_loadu_pd(acc + i)));
  for (; i < n; ++i) acc[i] += a[i] * b[i];
}

HDCAM_AVX2 double a_dot_f64(const double* a, const double* b, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    acc = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc);
  double res = hsum256d(acc);
  for (; i < n; ++i) res += a[i] * b[i];
  return res;
}

HDCAM_AVX2 double a_sum_f64(const double* a, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) acc = _mm256_add_pd(acc, _mm256_loadu_pd(a + i));
  double res = hsum256d(acc);
  for (; i < n; ++i) res += a[i];
  return res;
}

HDCAM_AVX2 void a_gemm_nn_f64(const double* A, const double* B, double* C, std::size_t m,
                              std::size_t k, std::size_t n, bool accumulate) {
  if (!accumulate) std::memset(C, 0, m * n * sizeof(double));
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = C + i * n;
    for (std::size_t kk = 0; kk < k; ++kk)
      a_axpy_f64(A[i * k + kk], B + kk * n, crow, n);
  }
}

HDCAM_AVX2 void a_gemm_nt_f64(const double* A, const double* B, double* C, std::size_t m,
                              std::size_t k, std::size_t n, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = A + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const double v = a_dot_f64(arow, B + j * k, k);
      C[i * n + j] = accumulate ? C[i * n + j] + v : v;
    }
  }
}

HDCAM_AVX2 void a_gemm_tn_f64(const double* A, const double* B, double* C, std::size_t m,
                              std::size_t k, std::size_t n, bool accumulate) {
  if (!accumulate) std::memset(C, 0, m * n * sizeof(double));
  for (std::size_t kk = 0; kk < k; ++kk) {
    const double* arow = A + kk * m;
    const double* brow = B + kk * n;
    for (std::size_t i = 0; i < m; ++i) a_axpy_f64(arow[i], brow, C + i * n, n);
  }
}

HDCAM_AVX2 void a_adam_f64(double* p, const double* g, double* m, double* v, std::size_t n,
                           double lr, double b1, double b2, double eps, double bc1,
                           double bc2) {
  std::size_t i = 0;
  const __m256d vb1 = _mm256_set1_pd(b1);
  const __m256d vb2 = _mm256_set1_pd(b2);
  const __m256d v1mb1 = _mm256_set1_pd(1.0 - b1);
  const __m256d v1mb2 = _mm256_set1_pd(1.0 - b2);
  const __m256d vlr = _mm256_set1_pd(lr);
  const __m256d veps = _mm256_set1_pd(eps);
  const __m256d vibc1 = _mm256_set1_pd(1.0 / bc1);
  const __m256d vibc2 = _mm256_set1_pd(1.0 / bc2);
  for (; i + 4 <= n; i += 4) {
    const __m256d vg = _mm256_loadu_pd(g + i);
    __m256d vm = _mm256_fmadd_pd(vb1, _mm256_loadu_pd(m + i), _mm256_mul_pd(v1mb1, vg));
    __m256d vv = _mm256_fmadd_pd(vb2, _mm256_loadu_pd(v + i),
                                 _mm256_mul_pd(v1mb2, _mm256_mul_pd(vg, vg)));
    _mm256_storeu_pd(m + i, vm);
    _mm256_storeu_pd(v + i, vv);
    const __m256d mhat = _mm256_mul_pd(vm, vibc1);
    const __m256d vhat = _mm256_mul_pd(vv, vibc2);
    const __m256d denom = _mm256_add_pd(_mm256_sqrt_pd(vhat), veps);
    const __m256d upd = _mm256_div_pd(_mm256_mul_pd(vlr, mhat), denom);
    _mm256_storeu_pd(p + i, _mm256_sub_pd(_mm256_loadu_pd(p + i), upd));
  }
  for (; i < n; ++i) {
    const double gg = g[i];
    m[i] = b1 * m[i] + (1 - b1) * gg;
    v[i] = b2 * v[i] + (1 - b2) * gg * gg;
    p[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps);
  }
}

}  // namespace

namespace detail {

const Table<float>& avx2_table_f32() {
  static const Table<float> t = [] {
    Table<float> x;
    x.add = &a_add_f32;
    x.mul = &a_mul_f32;
    x.scale = &a_scale_f32;
    x.axpy = &a_axpy_f32;
    x.vmac = &a_vmac_f32;
    x.dot = &a_dot_f32;
    x.sum = &a_sum_f32;
    x.gemm_nn = &a_gemm_nn_f32;
    x.gemm_nt = &a_gemm_nt_f32;
    x.gemm_tn = &a_gemm_tn_f32;
    x.adam_update = &a_adam_f32;
    return x;
  }();
  return t;
}

const Table<double>& avx2_table_f64() {
  static const Table<double> t = [] {
    Table<double> x;
    x.add = &a_add_f64;
    x.mul = &a_mul_f64;
    x.scale = &a_scale_f64;
    x.axpy = &a_axpy_f64;
    x.vmac = &a_vmac_f64;
    x.dot = &a_dot_f64;
    x.sum = &a_sum_f64;
    x.gemm_nn = &a_gemm_nn_f64;
    x.gemm_nt = &a_gemm_nt_f64;
    x.gemm_tn = &a_gemm_tn_f64;
    x.adam_update = &a_adam_f64;
    return x;
  }();
  return t;
}

}  // namespace detail
}  // namespace hdcam::kernels

#endif  // x86-64
