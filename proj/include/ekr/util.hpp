#ifndef EKR_UTIL_HPP
#define EKR_UTIL_HPP

#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace ekr {

// Seeded random source with explicit distributions. std::mt19937_64 is fully
// specified by the standard; the normal draw is Box-Muller on top of it so a
// seed pins the byte stream of everything derived from it.
class Rng {
public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  double normal();

  // Uniform index in [0, n).
  std::size_t index(std::size_t n);

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = index(i);
      std::swap(v[i - 1], v[j]);
    }
  }

private:
  std::mt19937_64 gen_;
  bool has_spare_{false};
  double spare_{0.0};
};

// Shortest round-trip decimal form of a double (std::to_chars). Reparsing the
// result recovers the exact bit pattern.
std::string format_double(double v);

double parse_double(std::string_view text, const std::string& context);
long long parse_int(std::string_view text, const std::string& context);

std::vector<std::string> split(std::string_view text, char sep);
std::string trim(std::string_view text);
std::string join(const std::vector<std::string>& parts, const std::string& sep);

std::uint64_t fnv1a64(std::string_view text);
std::string to_hex(std::uint64_t v);

} // namespace ekr

#endif
