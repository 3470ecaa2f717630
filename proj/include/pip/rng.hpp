#pragma once

#include <cmath>
#include <cstdint>
#include <istream>
#include <limits>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <string_view>

namespace pip {

// Splits one master seed into independent named streams. splitmix64 is used
// as the mixing function so nearby seeds do not produce correlated streams.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

inline std::uint64_t fnv1a64(std::string_view text, std::uint64_t h = 1469598103934665603ull) {
  for (char c : text) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ull;
  }
  return h;
}

inline std::uint64_t derive_seed(std::uint64_t master, std::string_view stream_name) {
  std::uint64_t s = fnv1a64(stream_name) ^ master;
  return splitmix64(s);
}

inline std::uint64_t derive_seed(std::uint64_t master, std::string_view stream_name,
                                 std::uint64_t index) {
  std::uint64_t s = fnv1a64(stream_name) ^ master ^ (0x632be59bd9b4e019ull * (index + 1));
  return splitmix64(s);
}

// Deterministic random stream on top of mt19937_64. Uniform and Gaussian
// draws are produced with explicit arithmetic (not std::*_distribution) so a
// given seed yields the same sequence on every standard library.
class RandomStream {
 public:
  RandomStream() : engine_(0) {}
  explicit RandomStream(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // uniform in [0, 1)
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // unbiased integer in [0, n)
  std::uint64_t uniform_index(std::uint64_t n) {
    const std::uint64_t max = std::numeric_limits<std::uint64_t>::max();
    const std::uint64_t limit = max - max % n;
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return x % n;
  }

  bool bernoulli(double p) { return uniform() < p; }

  // standard normal via Box-Muller
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  // Exact state round-trip, including the cached Box-Muller spare.
  std::string serialize() const {
    std::ostringstream os;
    os << (have_spare_ ? 1 : 0) << ' ';
    os << std::hexfloat << spare_ << std::defaultfloat << ' ';
    os << engine_;
    return os.str();
  }

  void deserialize(const std::string& text) {
    std::istringstream is(text);
    int spare_flag = 0;
    is >> spare_flag;
    std::string spare_hex;
    is >> spare_hex;
    spare_ = std::strtod(spare_hex.c_str(), nullptr);
    is >> engine_;
    if (!is) throw std::runtime_error("RandomStream: malformed serialized state");
    have_spare_ = spare_flag != 0;
  }

 private:
  std::mt19937_64 engine_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace pip
