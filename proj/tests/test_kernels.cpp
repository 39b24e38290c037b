#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <vector>

#include "hdcam/common.hpp"
#include "hdcam/kernels.hpp"

using namespace hdcam;
namespace kn = hdcam::kernels;

namespace {

struct BackendGuard {
  kn::Backend saved;
  BackendGuard() : saved(kn::active_backend()) {}
  ~BackendGuard() { kn::set_backend(saved); }
};

template <typename T>
std::vector<T> random_vec(Rng& rng, size_t n, double scale = 1.0) {
  std::vector<T> v(n);
  for (auto& x : v) x = static_cast<T>(rng.normal() * scale);
  return v;
}

// Reference GEMMs as plain triple loops, accumulating in double.
template <typename T>
std::vector<double> ref_gemm_nn(const std::vector<T>& a, const std::vector<T>& b, size_t m,
                                size_t k, size_t n) {
  std::vector<double> c(m * n, 0.0);
  for (size_t i = 0; i < m; ++i)
    for (size_t j = 0; j < n; ++j)
      for (size_t kk = 0; kk < k; ++kk)
        c[i * n + j] += static_cast<double>(a[i * k + kk]) * static_cast<double>(b[kk * n + j]);
  return c;
}

}  // namespace

TEST_CASE("gemm variants match the triple-loop oracle on both backends") {
  BackendGuard guard;
  Rng rng(42);
  for (kn::Backend backend : {kn::Backend::scalar, kn::Backend::avx2}) {
    if (!kn::backend_supported(backend)) continue;
    kn::set_backend(backend);
    for (auto [m, k, n] : std::vector<std::array<size_t, 3>>{
             {1, 1, 1}, {3, 4, 2}, {7, 13, 9}, {16, 32, 24}, {33, 17, 61}}) {
      auto a = random_vec<double>(rng, m * k);
      auto b = random_vec<double>(rng, k * n);
      const auto want = ref_gemm_nn(a, b, m, k, n);

      std::vector<double> c(m * n, 7.0);
      kn::gemm_nn(a.data(), b.data(), c.data(), m, k, n, false);
      for (size_t i = 0; i < c.size(); ++i) CHECK(c[i] == doctest::Approx(want[i]).epsilon(1e-12));

      // nt: B stored transposed [n,k]
      std::vector<double> bt(n * k);
      for (size_t kk = 0; kk < k; ++kk)
        for (size_t j = 0; j < n; ++j) bt[j * k + kk] = b[kk * n + j];
      std::vector<double> cnt(m * n, 0.0);
      kn::gemm_nt(a.data(), bt.data(), cnt.data(), m, k, n, false);
      for (size_t i = 0; i < c.size(); ++i)
        CHECK(cnt[i] == doctest::Approx(want[i]).epsilon(1e-12));

      // tn: A stored transposed [k,m]
      std::vector<double> at(k * m);
      for (size_t i = 0; i < m; ++i)
        for (size_t kk = 0; kk < k; ++kk) at[kk * m + i] = a[i * k + kk];
      std::vector<double> ctn(m * n, 0.0);
      kn::gemm_tn(at.data(), b.data(), ctn.data(), m, k, n, false);
      for (size_t i = 0; i < c.size(); ++i)
        CHECK(ctn[i] == doctest::Approx(want[i]).epsilon(1e-12));

      // accumulate adds on top
      kn::gemm_nn(a.data(), b.data(), c.data(), m, k, n, true);
      for (size_t i = 0; i < c.size(); ++i)
        CHECK(c[i] == doctest::Approx(2 * want[i]).epsilon(1e-12));
    }
  }
}

TEST_CASE("elementwise kernels match plain loops on both backends") {
  BackendGuard guard;
  Rng rng(7);
  for (kn::Backend backend : {kn::Backend::scalar, kn::Backend::avx2}) {
    if (!kn::backend_supported(backend)) continue;
    kn::set_backend(backend);
    for (size_t n : {1u, 7u, 8u, 9u, 64u, 257u}) {
      auto a = random_vec<float>(rng, n);
      auto b = random_vec<float>(rng, n);
      std::vector<float> out(n);
      kn::add(a.data(), b.data(), out.data(), n);
      for (size_t i = 0; i < n; ++i) CHECK(out[i] == a[i] + b[i]);
      kn::mul(a.data(), b.data(), out.data(), n);
      for (size_t i = 0; i < n; ++i) CHECK(out[i] == a[i] * b[i]);
      kn::scale(a.data(), 2.5f, out.data(), n);
      for (size_t i = 0; i < n; ++i) CHECK(out[i] == 2.5f * a[i]);

      auto y = b;
      kn::axpy(1.5f, a.data(), y.data(), n);
      for (size_t i = 0; i < n; ++i)
        CHECK(y[i] == doctest::Approx(b[i] + 1.5f * a[i]).epsilon(1e-6));

      auto acc = b;
      kn::vmac(a.data(), b.data(), acc.data(), n);
      for (size_t i = 0; i < n; ++i)
        CHECK(acc[i] == doctest::Approx(b[i] + a[i] * b[i]).epsilon(1e-6));

      double want_dot = 0, want_sum = 0;
      for (size_t i = 0; i < n; ++i) {
        want_dot += static_cast<double>(a[i]) * b[i];
        want_sum += a[i];
      }
      CHECK(kn::dot(a.data(), b.data(), n) == doctest::Approx(want_dot).epsilon(1e-4));
      CHECK(kn::sum(a.data(), n) == doctest::Approx(want_sum).epsilon(1e-4));
    }
  }
}

TEST_CASE("adam kernel matches a scripted reference") {
  BackendGuard guard;
  Rng rng(3);
  for (kn::Backend backend : {kn::Backend::scalar, kn::Backend::avx2}) {
    if (!kn::backend_supported(backend)) continue;
    kn::set_backend(backend);
    const size_t n = 37;
    auto p = random_vec<double>(rng, n);
    auto g = random_vec<double>(rng, n);
    std::vector<double> m(n, 0), v(n, 0);
    auto pr = p;
    std::vector<double> mr(n, 0), vr(n, 0);

    const double lr = 0.01, b1 = 0.9, b2 = 0.999, eps = 1e-8;
    for (int t = 1; t <= 3; ++t) {
      const double bc1 = 1 - std::pow(b1, t), bc2 = 1 - std::pow(b2, t);
      kn::adam_update(p.data(), g.data(), m.data(), v.data(), n, lr, b1, b2, eps, bc1, bc2);
      for (size_t i = 0; i < n; ++i) {
        mr[i] = b1 * mr[i] + (1 - b1) * g[i];
        vr[i] = b2 * vr[i] + (1 - b2) * g[i] * g[i];
        pr[i] -= lr * (mr[i] / bc1) / (std::sqrt(vr[i] / bc2) + eps);
      }
    }
    for (size_t i = 0; i < n; ++i) CHECK(p[i] == doctest::Approx(pr[i]).epsilon(1e-12));
  }
}

TEST_CASE("scalar and SIMD backends agree within rounding") {
  if (!kn::backend_supported(kn::Backend::avx2)) return;
  BackendGuard guard;
  Rng rng(11);
  for (size_t n : {5u, 64u, 129u, 1000u}) {
    auto af = random_vec<float>(rng, n);
    auto bf = random_vec<float>(rng, n);
    kn::set_backend(kn::Backend::scalar);
    const float dot_s = kn::dot(af.data(), bf.data(), n);
    const float sum_s = kn::sum(af.data(), n);
    kn::set_backend(kn::Backend::avx2);
    const float dot_a = kn::dot(af.data(), bf.data(), n);
    const float sum_a = kn::sum(af.data(), n);
    CHECK(std::abs(dot_s - dot_a) <= 1e-4 * (1.0 + std::abs(dot_s)));
    CHECK(std::abs(sum_s - sum_a) <= 1e-4 * (1.0 + std::abs(sum_s)));
  }
  // gemm across backends, f32 and f64
  const size_t m = 9, k = 31, n2 = 17;
  auto a = random_vec<double>(rng, m * k);
  auto b = random_vec<double>(rng, k * n2);
  std::vector<double> cs(m * n2), ca(m * n2);
  kn::set_backend(kn::Backend::scalar);
  kn::gemm_nn(a.data(), b.data(), cs.data(), m, k, n2, false);
  kn::set_backend(kn::Backend::avx2);
  kn::gemm_nn(a.data(), b.data(), ca.data(), m, k, n2, false);
  for (size_t i = 0; i < cs.size(); ++i)
    CHECK(std::abs(cs[i] - ca[i]) <= 1e-12 * (1.0 + std::abs(cs[i])));
}

TEST_CASE("backend selection is sticky and validated") {
  BackendGuard guard;
  kn::set_backend(kn::Backend::scalar);
  CHECK(kn::active_backend() == kn::Backend::scalar);
  CHECK(kn::backend_name(kn::Backend::scalar) == std::string("scalar"));
  CHECK(kn::backend_supported(kn::Backend::scalar));
}
