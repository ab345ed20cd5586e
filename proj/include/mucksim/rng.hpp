#pragma once

#include <cstdint>
#include <cstring>
#include <random>
#include <sstream>
#include <string>

namespace mucksim {

// Deterministic random stream. All distributions are implemented on top of
// the raw mt19937_64 output so that sequences are identical across platforms
// and standard library versions.
class Rng {
 public:
  explicit Rng(uint64_t seed) : eng_(seed) {}

  uint64_t next_u64() { return eng_(); }

  // Uniform in [lo, hi).
  double uniform(double lo = 0.0, double hi = 1.0) {
    const double u = static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    return lo + u * (hi - lo);
  }

  // Inclusive integer range via rejection-free modulo of a wide draw.
  int uniform_int(int lo, int hi) {
    const uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
    return lo + static_cast<int>(next_u64() % span);
  }

  // Standard normal, Box-Muller with cached spare.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double th = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(th);
    has_spare_ = true;
    return r * std::cos(th);
  }

  // Derive an independent stream; splitmix64 on (seed, stream id).
  static uint64_t mix(uint64_t a, uint64_t b) {
    uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // State capture for training resume; bit-exact round trip (the cached
  // spare travels as its bit pattern).
  std::string state() const {
    uint64_t bits = 0;
    std::memcpy(&bits, &spare_, sizeof(bits));
    std::ostringstream os;
    os << eng_ << " " << (has_spare_ ? 1 : 0) << " " << bits;
    return os.str();
  }
  void set_state(const std::string& s) {
    std::istringstream is(s);
    int flag = 0;
    uint64_t bits = 0;
    is >> eng_ >> flag >> bits;
    std::memcpy(&spare_, &bits, sizeof(bits));
    has_spare_ = flag != 0;
  }

 private:
  std::mt19937_64 eng_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace mucksim
