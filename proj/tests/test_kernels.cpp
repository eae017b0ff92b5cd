#include <doctest.h>

#include <cmath>
#include <cstring>
#include <vector>

#include "incseg/common.hpp"
#include "incseg/kernels.hpp"

using namespace incseg;
namespace k = incseg::kernels;

namespace {

std::vector<double> random_vec(Rng& rng, std::size_t n, double lo = -2.0,
                               double hi = 2.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(lo, hi);
  return v;
}

}  // namespace

TEST_CASE("scalar and simd backends agree bitwise") {
  const auto backends = k::supported_backends();
  REQUIRE(!backends.empty());
  const auto& ref = k::scalar_backend();

  Rng rng(42);
  // Odd sizes exercise the vector tails.
  for (const std::size_t in_dim : {1u, 3u, 6u, 7u, 32u, 64u}) {
    for (const std::size_t out_dim : {1u, 5u, 32u}) {
      const std::size_t n = 17;
      const auto x = random_vec(rng, n * in_dim);
      const auto w = random_vec(rng, out_dim * in_dim);
      const auto b = random_vec(rng, out_dim);
      const auto dy = random_vec(rng, n * out_dim);

      std::vector<double> y_ref(n * out_dim), y_alt(n * out_dim);
      std::vector<double> dx_ref(n * in_dim), dx_alt(n * in_dim);
      std::vector<double> dw_ref(out_dim * in_dim, 0.5),
          dw_alt(out_dim * in_dim, 0.5);
      std::vector<double> db_ref(out_dim, -0.25), db_alt(out_dim, -0.25);

      ref.affine_forward(n, in_dim, out_dim, x.data(), w.data(), b.data(),
                         y_ref.data());
      ref.affine_backward_input(n, in_dim, out_dim, dy.data(), w.data(),
                                dx_ref.data());
      ref.affine_backward_params(n, in_dim, out_dim, x.data(), dy.data(),
                                 dw_ref.data(), db_ref.data());
      for (const auto* backend : backends) {
        backend->affine_forward(n, in_dim, out_dim, x.data(), w.data(),
                                b.data(), y_alt.data());
        backend->affine_backward_input(n, in_dim, out_dim, dy.data(), w.data(),
                                       dx_alt.data());
        std::vector<double> dw(out_dim * in_dim, 0.5), db(out_dim, -0.25);
        backend->affine_backward_params(n, in_dim, out_dim, x.data(),
                                        dy.data(), dw.data(), db.data());
        CHECK(std::memcmp(y_ref.data(), y_alt.data(), y_ref.size() * 8) == 0);
        CHECK(std::memcmp(dx_ref.data(), dx_alt.data(), dx_ref.size() * 8) == 0);
        CHECK(std::memcmp(dw_ref.data(), dw.data(), dw.size() * 8) == 0);
        CHECK(std::memcmp(db_ref.data(), db.data(), db.size() * 8) == 0);
      }
    }
  }

  // Elementwise kernels, including non-multiple-of-4 lengths.
  for (const std::size_t n : {1u, 4u, 5u, 127u, 1024u}) {
    const auto x = random_vec(rng, n, -4.0, 4.0);
    const auto dy = random_vec(rng, n);
    std::vector<double> a_ref(n), a_alt(n), d_ref(n), d_alt(n);
    ref.act_forward(n, x.data(), a_ref.data());
    ref.act_backward(n, x.data(), dy.data(), d_ref.data());
    for (const auto* backend : backends) {
      backend->act_forward(n, x.data(), a_alt.data());
      backend->act_backward(n, x.data(), dy.data(), d_alt.data());
      CHECK(std::memcmp(a_ref.data(), a_alt.data(), n * 8) == 0);
      CHECK(std::memcmp(d_ref.data(), d_alt.data(), n * 8) == 0);
    }

    const auto g = random_vec(rng, n);
    std::vector<double> p0 = random_vec(rng, n);
    std::vector<double> m0 = random_vec(rng, n, 0.0, 0.1);
    std::vector<double> v0 = random_vec(rng, n, 0.0, 0.1);
    auto p_ref = p0, m_ref = m0, v_ref = v0;
    ref.adam_update(n, p_ref.data(), g.data(), m_ref.data(), v_ref.data(),
                    1e-3, 0.9, 0.999, 1e-8, 1.0 / (1 - 0.9), 1.0 / (1 - 0.999));
    for (const auto* backend : backends) {
      auto p = p0, m = m0, v = v0;
      backend->adam_update(n, p.data(), g.data(), m.data(), v.data(), 1e-3,
                           0.9, 0.999, 1e-8, 1.0 / (1 - 0.9),
                           1.0 / (1 - 0.999));
      CHECK(std::memcmp(p_ref.data(), p.data(), n * 8) == 0);
      CHECK(std::memcmp(m_ref.data(), m.data(), n * 8) == 0);
      CHECK(std::memcmp(v_ref.data(), v.data(), n * 8) == 0);
    }
  }

  for (const std::size_t dim : {2u, 3u, 32u, 33u}) {
    const std::size_t n = 19;
    const auto a = random_vec(rng, n * dim);
    const auto b = random_vec(rng, n * dim);
    for (const int p : {1, 2}) {
      const double ref_sum = ref.lp_distance_sum(n, dim, a.data(), b.data(), p);
      for (const auto* backend : backends) {
        const double alt = backend->lp_distance_sum(n, dim, a.data(), b.data(), p);
        CHECK(ref_sum == alt);
      }
    }
  }
}

TEST_CASE("affine_forward matches a naive matrix product") {
  Rng rng(7);
  const std::size_t n = 5, in_dim = 6, out_dim = 4;
  const auto x = random_vec(rng, n * in_dim);
  const auto w = random_vec(rng, out_dim * in_dim);
  const auto b = random_vec(rng, out_dim);
  std::vector<double> y(n * out_dim);
  k::active().affine_forward(n, in_dim, out_dim, x.data(), w.data(), b.data(),
                             y.data());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t r = 0; r < out_dim; ++r) {
      double expect = b[r];
      for (std::size_t j = 0; j < in_dim; ++j)
        expect += w[r * in_dim + j] * x[i * in_dim + j];
      CHECK(y[i * out_dim + r] == doctest::Approx(expect).epsilon(1e-12));
    }
  }
}

TEST_CASE("activation shape and adam hand values") {
  const double xs[] = {0.0, 1.0, -1.0, 10.0};
  double ys[4];
  k::active().act_forward(4, xs, ys);
  CHECK(ys[0] == 0.0);
  CHECK(ys[1] == doctest::Approx(1.0 / std::sqrt(2.0)));
  CHECK(ys[2] == doctest::Approx(-1.0 / std::sqrt(2.0)));
  CHECK(ys[3] > 0.99);
  CHECK(ys[3] < 1.0);

  // First Adam step with g=1 moves the parameter by ~lr.
  double p = 1.0, g = 1.0, m = 0.0, v = 0.0;
  k::active().adam_update(1, &p, &g, &m, &v, 0.01, 0.9, 0.999, 1e-8,
                          1.0 / (1 - 0.9), 1.0 / (1 - 0.999));
  CHECK(p == doctest::Approx(1.0 - 0.01).epsilon(1e-7));
  CHECK(m == doctest::Approx(0.1));
  CHECK(v == doctest::Approx(0.001));
}

TEST_CASE("lp distance hand values") {
  const double a[] = {3.0, 4.0};
  const double z[] = {0.0, 0.0};
  CHECK(k::active().lp_distance_sum(1, 2, a, z, 2) == doctest::Approx(5.0));
  const double d1[] = {1.0, -1.0};
  CHECK(k::active().lp_distance_sum(1, 2, d1, z, 1) == doctest::Approx(2.0));
}

TEST_CASE("runtime dispatch is available and consistent") {
  const auto& backend = k::active();
  CHECK((std::string(backend.name) == "scalar" ||
         std::string(backend.name) == "avx2"));
  if (k::avx2_available()) {
    CHECK(std::string(k::avx2_backend().name) == "avx2");
  }
}
