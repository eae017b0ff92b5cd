#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace incseg::kernels {

// Data-parallel inner loops used by the segmenter and the losses. Each kernel
// exists as a scalar reference implementation and an AVX2 variant; the active
// backend is chosen once at runtime.
//
// The two paths are bit-identical by construction, not merely close:
//   - every contracted sum is accumulated in four interleaved partial sums
//     (index mod 4) and combined as (s0+s2)+(s1+s3), which is exactly the
//     lane layout of a 4-wide double vector;
//   - no fused multiply-add is used on either path (the AVX2 functions are
//     compiled with target("avx2") only, so the compiler cannot emit FMA);
//   - the remaining elementwise operations are IEEE correctly rounded
//     (+,-,*,/,sqrt) and round identically on both paths.
// The equivalence tests assert exact equality on random inputs.
struct Backend {
  const char* name;

  // y[i,:] = w · x[i,:] + b   (w is out_dim x in_dim, row-major)
  void (*affine_forward)(std::size_t n, std::size_t in_dim, std::size_t out_dim,
                         const double* x, const double* w, const double* b,
                         double* y);

  // dx[i,:] = w^T · dy[i,:]
  void (*affine_backward_input)(std::size_t n, std::size_t in_dim,
                                std::size_t out_dim, const double* dy,
                                const double* w, double* dx);

  // dw[r,:] += sum_i dy[i,r] * x[i,:];  db[r] += sum_i dy[i,r]
  // Accumulation over i is sequential (fixed order) on both paths.
  void (*affine_backward_params)(std::size_t n, std::size_t in_dim,
                                 std::size_t out_dim, const double* x,
                                 const double* dy, double* dw, double* db);

  // y = x / sqrt(1 + x^2), elementwise.
  void (*act_forward)(std::size_t n, const double* x, double* y);

  // dx = dy / ((1 + x^2) * sqrt(1 + x^2)), elementwise.
  void (*act_backward)(std::size_t n, const double* x, const double* dy,
                       double* dx);

  // Adam step, elementwise; c1 = 1/(1-beta1^t), c2 = 1/(1-beta2^t).
  void (*adam_update)(std::size_t n, double* p, const double* g, double* m,
                      double* v, double lr, double beta1, double beta2,
                      double eps, double c1, double c2);

  // sum over rows of ||a[i,:] - b[i,:]||_p for p in {1,2}.
  double (*lp_distance_sum)(std::size_t n, std::size_t dim, const double* a,
                            const double* b, int p);
};

const Backend& scalar_backend();
bool avx2_available();
const Backend& avx2_backend();  // only valid when avx2_available()

// Backends usable on this machine (scalar always, AVX2 when supported).
std::vector<const Backend*> supported_backends();

// Selected once per process: AVX2 when supported, unless the INCSEG_KERNELS
// environment variable ("scalar" or "avx2") says otherwise.
const Backend& active();
std::string describe_active();

}  // namespace incseg::kernels
