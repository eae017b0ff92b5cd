#include <cstdlib>
#include <string>

#include "incseg/kernels.hpp"

namespace incseg::kernels {

bool avx2_available() {
#if defined(__x86_64__) || defined(__i386__)
  return __builtin_cpu_supports("avx2") != 0;
#else
  return false;
#endif
}

std::vector<const Backend*> supported_backends() {
  std::vector<const Backend*> v{&scalar_backend()};
  if (avx2_available()) v.push_back(&avx2_backend());
  return v;
}

static const Backend& select() {
  if (const char* env = std::getenv("INCSEG_KERNELS")) {
    const std::string want(env);
    if (want == "scalar") return scalar_backend();
    if (want == "avx2" && avx2_available()) return avx2_backend();
  }
  return avx2_available() ? avx2_backend() : scalar_backend();
}

const Backend& active() {
  static const Backend& chosen = select();
  return chosen;
}

std::string describe_active() {
  return std::string("kernels=") + active().name;
}

}  // namespace incseg::kernels
