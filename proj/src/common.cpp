#include "hdcam/common.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <mutex>

namespace hdcam {

namespace log {

namespace {

Level parse_env_level() {
  const char* env = std::getenv("HDCAM_LOG");
  if (env == nullptr) return Level::info;
  if (std::strcmp(env, "error") == 0) return Level::error;
  if (std::strcmp(env, "info") == 0) return Level::info;
  if (std::strcmp(env, "debug") == 0) return Level::debug;
  std::fprintf(stderr, "[hdcam] unknown HDCAM_LOG value '%s', using 'info'\n", env);
  return Level::info;
}

std::atomic<int> g_level{-1};
std::mutex g_mutex;

int level_int() {
  int lvl = g_level.load(std::memory_order_relaxed);
  if (lvl < 0) {
    lvl = static_cast<int>(parse_env_level());
    g_level.store(lvl, std::memory_order_relaxed);
  }
  return lvl;
}

void emit(const char* tag, const std::string& msg) {
  std::lock_guard<std::mutex> lock(g_mutex);
  std::fprintf(stderr, "[hdcam %s] %s\n", tag, msg.c_str());
}

}  // namespace

Level level() { return static_cast<Level>(level_int()); }
void set_level(Level lvl) { g_level.store(static_cast<int>(lvl)); }

void error(const std::string& msg) { emit("error", msg); }
void warn(const std::string& msg) {
  if (level_int() >= 1) emit("warn", msg);
}
void info(const std::string& msg) {
  if (level_int() >= 1) emit("info", msg);
}
void debug(const std::string& msg) {
  if (level_int() >= 2) emit("debug", msg);
}

}  // namespace log

namespace {

uint64_t splitmix64(uint64_t& x) {
  x += 0x9e3779b97f4a7c15ULL;
  uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

}  // namespace

Rng::Rng(uint64_t seed) {
  uint64_t x = seed;
  for (auto& s : s_) s = splitmix64(x);
}

uint64_t Rng::next_u64() {
  const uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
  const uint64_t t = s_[1] << 17;
  s_[2] ^= s_[0];
  s_[3] ^= s_[1];
  s_[1] ^= s_[2];
  s_[0] ^= s_[3];
  s_[2] ^= t;
  s_[3] = rotl(s_[3], 45);
  return result;
}

double Rng::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * 3.14159265358979323846 * u2;
  spare_ = r * std::sin(theta);
  has_spare_ = true;
  return r * std::cos(theta);
}

double Rng::truncated_normal(double stddev, double clip_sigmas) {
  double z = normal();
  while (std::abs(z) > clip_sigmas) z = normal();
  return z * stddev;
}

int64_t Rng::uniform_int(int64_t lo, int64_t hi) {
  const uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
  // Rejection sampling to avoid modulo bias.
  const uint64_t limit = UINT64_MAX - UINT64_MAX % span;
  uint64_t v = next_u64();
  while (v >= limit) v = next_u64();
  return lo + static_cast<int64_t>(v % span);
}

uint64_t mix_seed(uint64_t base, uint64_t stream) {
  uint64_t x = base ^ (0x9e3779b97f4a7c15ULL * (stream + 1));
  splitmix64(x);
  return splitmix64(x);
}

uint64_t fnv1a64(const std::string& s) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return std::string(buf);
}

namespace {
std::atomic<int> g_check_finite{-1};
}

bool check_finite_enabled() {
  int v = g_check_finite.load(std::memory_order_relaxed);
  if (v < 0) {
    const char* env = std::getenv("HDCAM_CHECK_FINITE");
    v = (env != nullptr && std::strcmp(env, "0") != 0) ? 1 : 0;
    g_check_finite.store(v);
  }
  return v != 0;
}

void set_check_finite(bool on) { g_check_finite.store(on ? 1 : 0); }

}  // namespace hdcam
