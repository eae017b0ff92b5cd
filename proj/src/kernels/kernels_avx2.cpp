#include <cstddef>

#include "incseg/kernels.hpp"

#if defined(__x86_64__) || defined(__i386__)
#define INCSEG_HAVE_AVX2_BUILD 1
#include <immintrin.h>
#endif

// AVX2 variants of the reference kernels. Compiled with target("avx2") only
// (no "fma"), so every multiply and add rounds separately, exactly like the
// scalar path. Lane l of a 4-wide accumulator holds the partial sum of
// indices j with j % 4 == l; the horizontal combine is (s0+s2)+(s1+s3),
// matching the scalar reference.

namespace incseg::kernels {

#ifdef INCSEG_HAVE_AVX2_BUILD
namespace {

#define INCSEG_AVX2 __attribute__((target("avx2")))

INCSEG_AVX2 inline double combine_lanes(__m256d acc, const double* a,
                                        const double* b, std::size_t from,
                                        std::size_t to, bool squared) {
  alignas(32) double s[4];
  _mm256_store_pd(s, acc);
  for (std::size_t j = from; j < to; ++j) {
    const double d = squared ? (a[j] - b[j]) * (a[j] - b[j]) : a[j] * b[j];
    s[j & 3] += d;
  }
  return (s[0] + s[2]) + (s[1] + s[3]);
}

INCSEG_AVX2 inline double dot4(const double* a, const double* b,
                               std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t j = 0;
  for (; j + 4 <= n; j += 4) {
    const __m256d va = _mm256_loadu_pd(a + j);
    const __m256d vb = _mm256_loadu_pd(b + j);
    acc = _mm256_add_pd(acc, _mm256_mul_pd(va, vb));
  }
  return combine_lanes(acc, a, b, j, n, /*squared=*/false);
}

INCSEG_AVX2 void affine_forward(std::size_t n, std::size_t in_dim,
                                std::size_t out_dim, const double* x,
                                const double* w, const double* b, double* y) {
  for (std::size_t i = 0; i < n; ++i) {
    const double* xi = x + i * in_dim;
    double* yi = y + i * out_dim;
    for (std::size_t r = 0; r < out_dim; ++r) {
      yi[r] = b[r] + dot4(w + r * in_dim, xi, in_dim);
    }
  }
}

INCSEG_AVX2 void affine_backward_input(std::size_t n, std::size_t in_dim,
                                       std::size_t out_dim, const double* dy,
                                       const double* w, double* dx) {
  for (std::size_t i = 0; i < n; ++i) {
    const double* dyi = dy + i * out_dim;
    double* dxi = dx + i * in_dim;
    for (std::size_t j = 0; j < in_dim; ++j) dxi[j] = 0.0;
    for (std::size_t r = 0; r < out_dim; ++r) {
      const double g = dyi[r];
      const double* wr = w + r * in_dim;
      const __m256d vg = _mm256_set1_pd(g);
      std::size_t j = 0;
      for (; j + 4 <= in_dim; j += 4) {
        const __m256d vw = _mm256_loadu_pd(wr + j);
        const __m256d vd = _mm256_loadu_pd(dxi + j);
        _mm256_storeu_pd(dxi + j, _mm256_add_pd(vd, _mm256_mul_pd(vg, vw)));
      }
      for (; j < in_dim; ++j) dxi[j] += g * wr[j];
    }
  }
}

INCSEG_AVX2 void affine_backward_params(std::size_t n, std::size_t in_dim,
                                        std::size_t out_dim, const double* x,
                                        const double* dy, double* dw,
                                        double* db) {
  for (std::size_t i = 0; i < n; ++i) {
    const double* xi = x + i * in_dim;
    const double* dyi = dy + i * out_dim;
    for (std::size_t r = 0; r < out_dim; ++r) {
      const double g = dyi[r];
      double* dwr = dw + r * in_dim;
      const __m256d vg = _mm256_set1_pd(g);
      std::size_t j = 0;
      for (; j + 4 <= in_dim; j += 4) {
        const __m256d vx = _mm256_loadu_pd(xi + j);
        const __m256d vd = _mm256_loadu_pd(dwr + j);
        _mm256_storeu_pd(dwr + j, _mm256_add_pd(vd, _mm256_mul_pd(vg, vx)));
      }
      for (; j < in_dim; ++j) dwr[j] += g * xi[j];
      db[r] += g;
    }
  }
}

INCSEG_AVX2 void act_forward(std::size_t n, const double* x, double* y) {
  const __m256d one = _mm256_set1_pd(1.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d vx = _mm256_loadu_pd(x + i);
    const __m256d u = _mm256_add_pd(one, _mm256_mul_pd(vx, vx));
    _mm256_storeu_pd(y + i, _mm256_div_pd(vx, _mm256_sqrt_pd(u)));
  }
  for (; i < n; ++i) {
    const double t = x[i] * x[i];
    const double u = 1.0 + t;
    y[i] = x[i] / __builtin_sqrt(u);
  }
}

INCSEG_AVX2 void act_backward(std::size_t n, const double* x, const double* dy,
                              double* dx) {
  const __m256d one = _mm256_set1_pd(1.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d vx = _mm256_loadu_pd(x + i);
    const __m256d u = _mm256_add_pd(one, _mm256_mul_pd(vx, vx));
    const __m256d s = _mm256_sqrt_pd(u);
    const __m256d vdy = _mm256_loadu_pd(dy + i);
    _mm256_storeu_pd(dx + i, _mm256_div_pd(vdy, _mm256_mul_pd(u, s)));
  }
  for (; i < n; ++i) {
    const double t = x[i] * x[i];
    const double u = 1.0 + t;
    const double s = __builtin_sqrt(u);
    dx[i] = dy[i] / (u * s);
  }
}

INCSEG_AVX2 void adam_update(std::size_t n, double* p, const double* g,
                             double* m, double* v, double lr, double beta1,
                             double beta2, double eps, double c1, double c2) {
  const __m256d vb1 = _mm256_set1_pd(beta1);
  const __m256d vb2 = _mm256_set1_pd(beta2);
  const __m256d vo1 = _mm256_set1_pd(1.0 - beta1);
  const __m256d vo2 = _mm256_set1_pd(1.0 - beta2);
  const __m256d vlr = _mm256_set1_pd(lr);
  const __m256d veps = _mm256_set1_pd(eps);
  const __m256d vc1 = _mm256_set1_pd(c1);
  const __m256d vc2 = _mm256_set1_pd(c2);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d vg = _mm256_loadu_pd(g + i);
    const __m256d mi = _mm256_add_pd(_mm256_mul_pd(vb1, _mm256_loadu_pd(m + i)),
                                     _mm256_mul_pd(vo1, vg));
    const __m256d vi =
        _mm256_add_pd(_mm256_mul_pd(vb2, _mm256_loadu_pd(v + i)),
                      _mm256_mul_pd(vo2, _mm256_mul_pd(vg, vg)));
    _mm256_storeu_pd(m + i, mi);
    _mm256_storeu_pd(v + i, vi);
    const __m256d mhat = _mm256_mul_pd(mi, vc1);
    const __m256d vhat = _mm256_mul_pd(vi, vc2);
    const __m256d den = _mm256_add_pd(_mm256_sqrt_pd(vhat), veps);
    const __m256d upd = _mm256_mul_pd(vlr, _mm256_div_pd(mhat, den));
    _mm256_storeu_pd(p + i, _mm256_sub_pd(_mm256_loadu_pd(p + i), upd));
  }
  const double om1 = 1.0 - beta1;
  const double om2 = 1.0 - beta2;
  for (; i < n; ++i) {
    const double gi = g[i];
    const double mi = (beta1 * m[i]) + (om1 * gi);
    const double vi = (beta2 * v[i]) + (om2 * (gi * gi));
    m[i] = mi;
    v[i] = vi;
    const double mhat = mi * c1;
    const double vhat = vi * c2;
    p[i] = p[i] - lr * (mhat / (__builtin_sqrt(vhat) + eps));
  }
}

INCSEG_AVX2 double lp_distance_sum(std::size_t n, std::size_t dim,
                                   const double* a, const double* b, int p) {
  const __m256d sign_mask = _mm256_set1_pd(-0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double* ai = a + i * dim;
    const double* bi = b + i * dim;
    __m256d acc = _mm256_setzero_pd();
    std::size_t j = 0;
    if (p == 2) {
      for (; j + 4 <= dim; j += 4) {
        const __m256d d =
            _mm256_sub_pd(_mm256_loadu_pd(ai + j), _mm256_loadu_pd(bi + j));
        acc = _mm256_add_pd(acc, _mm256_mul_pd(d, d));
      }
      total += __builtin_sqrt(combine_lanes(acc, ai, bi, j, dim, true));
    } else {
      for (; j + 4 <= dim; j += 4) {
        const __m256d d =
            _mm256_sub_pd(_mm256_loadu_pd(ai + j), _mm256_loadu_pd(bi + j));
        acc = _mm256_add_pd(acc, _mm256_andnot_pd(sign_mask, d));
      }
      alignas(32) double s[4];
      _mm256_store_pd(s, acc);
      for (; j < dim; ++j) {
        s[j & 3] += __builtin_fabs(ai[j] - bi[j]);
      }
      total += (s[0] + s[2]) + (s[1] + s[3]);
    }
  }
  return total;
}

#undef INCSEG_AVX2

}  // namespace

const Backend& avx2_backend() {
  static const Backend backend{
      "avx2",            affine_forward, affine_backward_input,
      affine_backward_params, act_forward, act_backward,
      adam_update,       lp_distance_sum,
  };
  return backend;
}

#else  // !INCSEG_HAVE_AVX2_BUILD

const Backend& avx2_backend() { return scalar_backend(); }

#endif

}  // namespace incseg::kernels
