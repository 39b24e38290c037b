#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace hdcam {

// Error taxonomy. The CLI maps these onto exit codes:
// IoError=1, ConfigError=2, DataError/ProtocolError=3, CheckpointError=4.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ProtocolError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct CheckpointError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
// Non-finite values detected where finiteness is an invariant.
struct NumericsError : DataError {
  using DataError::DataError;
};

namespace log {

enum class Level { error = 0, info = 1, debug = 2 };

Level level();                 // resolved once from HDCAM_LOG
void set_level(Level lvl);     // programmatic override (tests)
void error(const std::string& msg);
void warn(const std::string& msg);   // shown at info and above
void info(const std::string& msg);
void debug(const std::string& msg);

}  // namespace log

// Deterministic RNG. xoshiro256++ seeded via splitmix64, with hand-rolled
// distributions so streams are identical across standard libraries.
class Rng {
 public:
  explicit Rng(uint64_t seed);

  uint64_t next_u64();
  double uniform();                         // [0, 1)
  double uniform(double lo, double hi);
  double normal();                          // standard normal (Box-Muller)
  double truncated_normal(double stddev, double clip_sigmas = 2.0);
  int64_t uniform_int(int64_t lo, int64_t hi);  // inclusive bounds

  template <typename Vec>
  void shuffle(Vec& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(uniform_int(0, static_cast<int64_t>(i) - 1));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  uint64_t s_[4];
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Derives an independent seed for a substream (per subject, per epoch, ...).
uint64_t mix_seed(uint64_t base, uint64_t stream);

// FNV-1a over a string; used for config provenance hashes.
uint64_t fnv1a64(const std::string& s);
std::string hex64(uint64_t v);

// When enabled (HDCAM_CHECK_FINITE=1 or set programmatically), every tensor op
// verifies its output is finite and throws NumericsError naming the op.
bool check_finite_enabled();
void set_check_finite(bool on);

}  // namespace hdcam
