#include <cmath>
#include <cstddef>

#include "incseg/kernels.hpp"

// Reference kernels. These define the numeric semantics: four interleaved
// partial sums for every contraction, sequential accumulation over the batch
// dimension. The AVX2 variants reproduce the same rounding sequence.

namespace incseg::kernels {
namespace {

inline double dot4(const double* a, const double* b, std::size_t n) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  std::size_t j = 0;
  for (; j + 4 <= n; j += 4) {
    s0 += a[j] * b[j];
    s1 += a[j + 1] * b[j + 1];
    s2 += a[j + 2] * b[j + 2];
    s3 += a[j + 3] * b[j + 3];
  }
  switch (n - j) {
    case 3:
      s2 += a[j + 2] * b[j + 2];
      [[fallthrough]];
    case 2:
      s1 += a[j + 1] * b[j + 1];
      [[fallthrough]];
    case 1:
      s0 += a[j] * b[j];
      break;
    default:
      break;
  }
  return (s0 + s2) + (s1 + s3);
}

void affine_forward(std::size_t n, std::size_t in_dim, std::size_t out_dim,
                    const double* x, const double* w, const double* b,
                    double* y) {
  for (std::size_t i = 0; i < n; ++i) {
    const double* xi = x + i * in_dim;
    double* yi = y + i * out_dim;
    for (std::size_t r = 0; r < out_dim; ++r) {
      yi[r] = b[r] + dot4(w + r * in_dim, xi, in_dim);
    }
  }
}

void affine_backward_input(std::size_t n, std::size_t in_dim,
                           std::size_t out_dim, const double* dy,
                           const double* w, double* dx) {
  for (std::size_t i = 0; i < n; ++i) {
    const double* dyi = dy + i * out_dim;
    double* dxi = dx + i * in_dim;
    for (std::size_t j = 0; j < in_dim; ++j) dxi[j] = 0.0;
    for (std::size_t r = 0; r < out_dim; ++r) {
      const double g = dyi[r];
      const double* wr = w + r * in_dim;
      for (std::size_t j = 0; j < in_dim; ++j) dxi[j] += g * wr[j];
    }
  }
}

void affine_backward_params(std::size_t n, std::size_t in_dim,
                            std::size_t out_dim, const double* x,
                            const double* dy, double* dw, double* db) {
  for (std::size_t i = 0; i < n; ++i) {
    const double* xi = x + i * in_dim;
    const double* dyi = dy + i * out_dim;
    for (std::size_t r = 0; r < out_dim; ++r) {
      const double g = dyi[r];
      double* dwr = dw + r * in_dim;
      for (std::size_t j = 0; j < in_dim; ++j) dwr[j] += g * xi[j];
      db[r] += g;
    }
  }
}

void act_forward(std::size_t n, const double* x, double* y) {
  for (std::size_t i = 0; i < n; ++i) {
    const double t = x[i] * x[i];
    const double u = 1.0 + t;
    y[i] = x[i] / std::sqrt(u);
  }
}

void act_backward(std::size_t n, const double* x, const double* dy,
                  double* dx) {
  for (std::size_t i = 0; i < n; ++i) {
    const double t = x[i] * x[i];
    const double u = 1.0 + t;
    const double s = std::sqrt(u);
    dx[i] = dy[i] / (u * s);
  }
}

void adam_update(std::size_t n, double* p, const double* g, double* m,
                 double* v, double lr, double beta1, double beta2, double eps,
                 double c1, double c2) {
  const double om1 = 1.0 - beta1;
  const double om2 = 1.0 - beta2;
  for (std::size_t i = 0; i < n; ++i) {
    const double gi = g[i];
    const double mi = (beta1 * m[i]) + (om1 * gi);
    const double vi = (beta2 * v[i]) + (om2 * (gi * gi));
    m[i] = mi;
    v[i] = vi;
    const double mhat = mi * c1;
    const double vhat = vi * c2;
    p[i] = p[i] - lr * (mhat / (std::sqrt(vhat) + eps));
  }
}

double lp_distance_sum(std::size_t n, std::size_t dim, const double* a,
                       const double* b, int p) {
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double* ai = a + i * dim;
    const double* bi = b + i * dim;
    double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
    std::size_t j = 0;
    if (p == 2) {
      for (; j + 4 <= dim; j += 4) {
        const double d0 = ai[j] - bi[j];
        const double d1 = ai[j + 1] - bi[j + 1];
        const double d2 = ai[j + 2] - bi[j + 2];
        const double d3 = ai[j + 3] - bi[j + 3];
        s0 += d0 * d0;
        s1 += d1 * d1;
        s2 += d2 * d2;
        s3 += d3 * d3;
      }
      for (; j < dim; ++j) {
        const double d = ai[j] - bi[j];
        switch (j & 3) {
          case 0: s0 += d * d; break;
          case 1: s1 += d * d; break;
          case 2: s2 += d * d; break;
          default: s3 += d * d; break;
        }
      }
      total += std::sqrt((s0 + s2) + (s1 + s3));
    } else {
      for (; j + 4 <= dim; j += 4) {
        s0 += std::fabs(ai[j] - bi[j]);
        s1 += std::fabs(ai[j + 1] - bi[j + 1]);
        s2 += std::fabs(ai[j + 2] - bi[j + 2]);
        s3 += std::fabs(ai[j + 3] - bi[j + 3]);
      }
      for (; j < dim; ++j) {
        const double d = std::fabs(ai[j] - bi[j]);
        switch (j & 3) {
          case 0: s0 += d; break;
          case 1: s1 += d; break;
          case 2: s2 += d; break;
          default: s3 += d; break;
        }
      }
      total += (s0 + s2) + (s1 + s3);
    }
  }
  return total;
}

}  // namespace

const Backend& scalar_backend() {
  static const Backend backend{
      "scalar",          affine_forward, affine_backward_input,
      affine_backward_params, act_forward, act_backward,
      adam_update,       lp_distance_sum,
  };
  return backend;
}

}  // namespace incseg::kernels
