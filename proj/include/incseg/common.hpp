#pragma once

#include <array>
#include <bit>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace incseg {

// Label values. 0 is the background class; 255 is the unlabeled sentinel and
// is never part of a model's output space.
using ClassId = std::uint16_t;
inline constexpr ClassId kBackground = 0;
inline constexpr ClassId kUnlabeled = 255;
inline constexpr ClassId kMaxClassId = 254;

// Errors map onto the CLI exit codes below.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitNumeric = 4;

// Minimal row-major matrix of doubles.
struct Mat {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> a;

  Mat() = default;
  Mat(std::size_t r, std::size_t c) : rows(r), cols(c), a(r * c, 0.0) {}

  double* row(std::size_t i) { return a.data() + i * cols; }
  const double* row(std::size_t i) const { return a.data() + i * cols; }
  double& at(std::size_t i, std::size_t j) { return a[i * cols + j]; }
  double at(std::size_t i, std::size_t j) const { return a[i * cols + j]; }
  double* data() { return a.data(); }
  const double* data() const { return a.data(); }
  std::size_t size() const { return a.size(); }
};

// SplitMix64; used to derive independent seeds for sub-streams so that any
// part of a run can be regenerated without replaying the whole stream.
std::uint64_t splitmix64(std::uint64_t& state);
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t tag,
                          std::uint64_t a = 0, std::uint64_t b = 0);

// Deterministic RNG with explicitly coded transforms. The standard library's
// distribution objects are implementation defined, so uniform/normal/shuffle
// are spelled out here and produce the same values on every conforming
// platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();
  // Uniform in [0, 1), 53-bit resolution.
  double uniform();
  double uniform(double lo, double hi);
  // One standard normal draw via Box-Muller.
  double normal();
  double normal(double mean, double stdev);
  // Unbiased integer in [0, n) by rejection.
  std::uint64_t below(std::uint64_t n);

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::uint64_t s_[4];
};

// Binary file helpers. All on-disk numeric formats are little-endian; the
// readers below convert explicitly so they stay correct on any host.
std::vector<std::byte> read_file_bytes(const std::filesystem::path& p);
void write_file_bytes(const std::filesystem::path& p,
                      std::span<const std::byte> bytes);

inline std::uint32_t load_le_u32(const std::byte* p) {
  return static_cast<std::uint32_t>(std::to_integer<std::uint32_t>(p[0]) |
                                    (std::to_integer<std::uint32_t>(p[1]) << 8) |
                                    (std::to_integer<std::uint32_t>(p[2]) << 16) |
                                    (std::to_integer<std::uint32_t>(p[3]) << 24));
}
inline void store_le_u32(std::byte* p, std::uint32_t v) {
  p[0] = static_cast<std::byte>(v & 0xff);
  p[1] = static_cast<std::byte>((v >> 8) & 0xff);
  p[2] = static_cast<std::byte>((v >> 16) & 0xff);
  p[3] = static_cast<std::byte>((v >> 24) & 0xff);
}
inline float load_le_f32(const std::byte* p) {
  return std::bit_cast<float>(load_le_u32(p));
}
inline void store_le_f32(std::byte* p, float v) {
  store_le_u32(p, std::bit_cast<std::uint32_t>(v));
}
inline std::uint64_t load_le_u64(const std::byte* p) {
  return static_cast<std::uint64_t>(load_le_u32(p)) |
         (static_cast<std::uint64_t>(load_le_u32(p + 4)) << 32);
}
inline void store_le_u64(std::byte* p, std::uint64_t v) {
  store_le_u32(p, static_cast<std::uint32_t>(v & 0xffffffffu));
  store_le_u32(p + 4, static_cast<std::uint32_t>(v >> 32));
}
inline double load_le_f64(const std::byte* p) {
  return std::bit_cast<double>(load_le_u64(p));
}
inline void store_le_f64(std::byte* p, double v) {
  store_le_u64(p, std::bit_cast<std::uint64_t>(v));
}

std::string read_text_file(const std::filesystem::path& p);
void write_text_file(const std::filesystem::path& p, const std::string& text);

// Lowercase and fold '_' to '-'; class names are matched through this.
std::string normalize_name(std::string_view name);

}  // namespace incseg
