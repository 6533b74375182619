#pragma once

#include <cstdint>
#include <cmath>
#include <complex>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace cbdlab {

inline constexpr const char* kLibraryVersion = "0.1.0";

// Identifier of the smooth radial cutoff family used by the kernel
// decomposition. Reports embed it so that numbers from different cutoff
// choices are never compared silently.
inline constexpr const char* kCutoffId = "expstep-r1";

using cplx = std::complex<double>;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

// Geometry constants of the stopping-time machinery. Code never spells the
// raw numbers; changing one here changes it everywhere coherently.
inline constexpr int kScaleSeparation = 8;   // |s_L - s_L'| >= this forces 7L cap 7L' empty
inline constexpr int kLocalDilate = 3;       // localization window 3Q
inline constexpr int kSeparationDilate = 7;  // separation window 7L
inline constexpr int kNestingDilate = 9;     // nesting window 9L
inline constexpr int kNormDilate = 32;       // norm window L-hat = 2^5 L

class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Deterministic RNG. mt19937_64 has a pinned algorithm; doubles are derived
// by hand because std::uniform_real_distribution is implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    // splitmix64: tiny, reproducible, good enough for test-instance generation.
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // uniform in [0,1)
  double next_double() { return double(next_u64() >> 11) * 0x1.0p-53; }

  // uniform in [lo,hi)
  double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  // integer in [0,n)
  std::uint64_t next_below(std::uint64_t n) {
    // modulo bias is irrelevant at test-instance scales (n << 2^64)
    return next_u64() % n;
  }

  // standard normal, Box-Muller; cached second value for determinism
  double next_gaussian() {
    if (have_cached_) {
      have_cached_ = false;
      return cached_;
    }
    double u1 = next_double(), u2 = next_double();
    while (u1 <= 0.0) u1 = next_double();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * 3.14159265358979323846 * u2;
    cached_ = r * std::sin(a);
    have_cached_ = true;
    return r * std::cos(a);
  }

  cplx next_cgaussian() { return cplx(next_gaussian(), next_gaussian()); }

 private:
  std::uint64_t state_;
  bool have_cached_ = false;
  double cached_ = 0.0;
};

// FNV-1a over bytes; used to fingerprint canonicalized configs in reports.
inline std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

// Kahan-compensated accumulator for long kernel sums.
class Kahan {
 public:
  void add(double x) {
    double y = x - c_;
    double t = s_ + y;
    c_ = (t - s_) - y;
    s_ = t;
  }
  double sum() const { return s_; }

 private:
  double s_ = 0.0;
  double c_ = 0.0;
};

class KahanC {
 public:
  void add(cplx z) {
    re_.add(z.real());
    im_.add(z.imag());
  }
  cplx sum() const { return cplx(re_.sum(), im_.sum()); }

 private:
  Kahan re_, im_;
};

inline std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  std::int64_t q = a / b, r = a % b;
  return (r != 0 && ((r < 0) != (b < 0))) ? q - 1 : q;
}

inline std::int64_t ceil_div(std::int64_t a, std::int64_t b) {
  return -floor_div(-a, b);
}

}  // namespace cbdlab
