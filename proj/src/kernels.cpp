#include "hdcam/kernels.hpp"

#include <atomic>
#include <cstdlib>
#include <cstring>
#include <string>

#include "hdcam/common.hpp"

namespace hdcam::kernels {

namespace {

bool cpu_has_avx2_fma() {
#if defined(__x86_64__) || defined(_M_X64)
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Backend detect_backend() {
  const char* env = std::getenv("HDCAM_SIMD");
  if (env != nullptr && std::strcmp(env, "auto") != 0) {
    if (std::strcmp(env, "scalar") == 0) return Backend::scalar;
    if (std::strcmp(env, "avx2") == 0) {
      if (!cpu_has_avx2_fma())
        throw ConfigError("HDCAM_SIMD=avx2 requested but CPU lacks AVX2+FMA");
      return Backend::avx2;
    }
    log::warn(std::string("unknown HDCAM_SIMD value '") + env + "', using auto");
  }
  return cpu_has_avx2_fma() ? Backend::avx2 : Backend::scalar;
}

std::atomic<int> g_backend{-1};

int backend_int() {
  int b = g_backend.load(std::memory_order_acquire);
  if (b < 0) {
    b = static_cast<int>(detect_backend());
    g_backend.store(b, std::memory_order_release);
    log::debug(std::string("kernel backend: ") + backend_name(static_cast<Backend>(b)));
  }
  return b;
}

}  // namespace

const char* backend_name(Backend b) {
  switch (b) {
    case Backend::scalar: return "scalar";
    case Backend::avx2: return "avx2";
  }
  return "?";
}

bool backend_supported(Backend b) {
  return b == Backend::scalar || (b == Backend::avx2 && cpu_has_avx2_fma());
}

Backend active_backend() { return static_cast<Backend>(backend_int()); }

void set_backend(Backend b) {
  if (!backend_supported(b))
    throw ConfigError(std::string("kernel backend '") + backend_name(b) +
                      "' not supported on this CPU");
  g_backend.store(static_cast<int>(b), std::memory_order_release);
}

template <>
const Table<float>& table<float>() {
#if defined(__x86_64__) || defined(_M_X64)
  if (active_backend() == Backend::avx2) return detail::avx2_table_f32();
#endif
  return detail::scalar_table_f32();
}

template <>
const Table<double>& table<double>() {
#if defined(__x86_64__) || defined(_M_X64)
  if (active_backend() == Backend::avx2) return detail::avx2_table_f64();
#endif
  return detail::scalar_table_f64();
}

}  // namespace hdcam::kernels
