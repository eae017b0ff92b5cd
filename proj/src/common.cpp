#include "incseg/common.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <numbers>

namespace incseg {

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t tag,
                          std::uint64_t a, std::uint64_t b) {
  std::uint64_t s = base;
  splitmix64(s);
  s ^= 0x6a09e667f3bcc909ull + tag;
  splitmix64(s);
  s ^= 0xbb67ae8584caa73bull + a;
  splitmix64(s);
  s ^= 0x3c6ef372fe94f82bull + b;
  return splitmix64(s);
}

Rng::Rng(std::uint64_t seed) {
  // xoshiro256++ seeded through SplitMix64, per the reference construction.
  std::uint64_t sm = seed;
  for (auto& s : s_) s = splitmix64(sm);
}

static inline std::uint64_t rotl64(std::uint64_t x, int k) {
  return (x << k) | (x >> (64 - k));
}

std::uint64_t Rng::next_u64() {
  const std::uint64_t result = rotl64(s_[0] + s_[3], 23) + s_[0];
  const std::uint64_t t = s_[1] << 17;
  s_[2] ^= s_[0];
  s_[3] ^= s_[1];
  s_[1] ^= s_[2];
  s_[0] ^= s_[3];
  s_[2] ^= t;
  s_[3] = rotl64(s_[3], 45);
  return result;
}

double Rng::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double Rng::normal() {
  // Box-Muller, cosine branch only. u1 is kept away from 0.
  double u1 = uniform();
  if (u1 < 0x1.0p-53) u1 = 0x1.0p-53;
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) *
         std::cos(2.0 * std::numbers::pi * u2);
}

double Rng::normal(double mean, double stdev) {
  return mean + stdev * normal();
}

std::uint64_t Rng::below(std::uint64_t n) {
  if (n == 0) throw std::invalid_argument("Rng::below(0)");
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
  std::uint64_t x;
  do {
    x = next_u64();
  } while (x >= limit);
  return x % n;
}

std::vector<std::byte> read_file_bytes(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f) throw DataError("cannot open file: " + p.string());
  f.seekg(0, std::ios::end);
  const auto size = static_cast<std::size_t>(f.tellg());
  f.seekg(0, std::ios::beg);
  std::vector<std::byte> bytes(size);
  if (size > 0 && !f.read(reinterpret_cast<char*>(bytes.data()),
                          static_cast<std::streamsize>(size))) {
    throw DataError("short read: " + p.string());
  }
  return bytes;
}

void write_file_bytes(const std::filesystem::path& p,
                      std::span<const std::byte> bytes) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream f(p, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("cannot write file: " + p.string());
  f.write(reinterpret_cast<const char*>(bytes.data()),
          static_cast<std::streamsize>(bytes.size()));
  if (!f) throw DataError("short write: " + p.string());
}

std::string read_text_file(const std::filesystem::path& p) {
  auto bytes = read_file_bytes(p);
  return std::string(reinterpret_cast<const char*>(bytes.data()), bytes.size());
}

void write_text_file(const std::filesystem::path& p, const std::string& text) {
  write_file_bytes(p, std::as_bytes(std::span(text.data(), text.size())));
}

std::string normalize_name(std::string_view name) {
  std::string out;
  out.reserve(name.size());
  for (char c : name) {
    if (c == '_') c = '-';
    out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  return out;
}

}  // namespace incseg
