#include <doctest.h>

#include <array>
#include <cmath>
#include <vector>

#include "cpmf/kernels.hpp"
#include "cpmf/rng.hpp"

using namespace cpmf;
namespace k = cpmf::kernels;

namespace {

std::vector<double> random_vec(Rng& rng, std::size_t n, double scale = 1.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.next_normal() * scale;
  return v;
}

// Straight triple loop, no kernels, used as the matmul reference.
std::vector<double> naive_matmul(const std::vector<double>& a,
                                 const std::vector<double>& b, std::size_t m,
                                 std::size_t kk, std::size_t n) {
  std::vector<double> c(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t p = 0; p < kk; ++p)
        c[i * n + j] += a[i * kk + p] * b[p * n + j];
  return c;
}

bool close(double a, double b, double tol = 1e-12) {
  return std::abs(a - b) <= tol * std::max({1.0, std::abs(a), std::abs(b)});
}

template <typename F>
void with_backend(k::Backend b, F&& f) {
  const k::Backend saved = k::active_backend();
  k::set_backend(b);
  f();
  k::set_backend(saved);
}

}  // namespace

TEST_CASE("matmul matches a naive triple loop") {
  Rng rng(11);
  const std::vector<std::array<std::size_t, 3>> shapes = {
      {3, 5, 7}, {1, 1, 1}, {8, 16, 4}, {5, 13, 9}};
  for (const auto& [m, kk, n] : shapes) {
    const auto a = random_vec(rng, m * kk);
    const auto b = random_vec(rng, kk * n);
    const auto expect = naive_matmul(a, b, m, kk, n);
    std::vector<double> c(m * n);
    k::matmul(a.data(), b.data(), c.data(), m, kk, n);
    for (std::size_t i = 0; i < c.size(); ++i) CHECK(close(c[i], expect[i]));
  }
}

TEST_CASE("matmul_nt equals matmul against the transpose") {
  Rng rng(12);
  const std::size_t m = 4, kk = 6, n = 5;
  const auto a = random_vec(rng, m * kk);
  const auto b = random_vec(rng, n * kk);  // n rows of length kk
  std::vector<double> bt(kk * n);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < kk; ++c) bt[c * n + r] = b[r * kk + c];
  const auto expect = naive_matmul(a, bt, m, kk, n);
  std::vector<double> c(m * n);
  k::matmul_nt(a.data(), b.data(), c.data(), m, kk, n);
  for (std::size_t i = 0; i < c.size(); ++i) CHECK(close(c[i], expect[i]));
}

TEST_CASE("matmul_tn_acc accumulates A^T B") {
  Rng rng(13);
  const std::size_t m = 6, kk = 4, n = 3;
  const auto a = random_vec(rng, m * kk);
  const auto b = random_vec(rng, m * n);
  std::vector<double> at(kk * m);
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t c = 0; c < kk; ++c) at[c * m + r] = a[r * kk + c];
  auto expect = naive_matmul(at, b, kk, m, n);
  std::vector<double> c(kk * n, 0.5);
  for (auto& x : expect) x += 0.5;
  k::matmul_tn_acc(a.data(), b.data(), c.data(), m, kk, n);
  for (std::size_t i = 0; i < c.size(); ++i) CHECK(close(c[i], expect[i]));
}

TEST_CASE("adam_update reproduces the scalar recurrence") {
  const double lr = 0.1, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  std::vector<double> theta{1.0, -2.0, 0.5};
  std::vector<double> m(3, 0.0), v(3, 0.0);
  const std::vector<double> g{0.3, -0.1, 0.0};
  k::adam_update(theta.data(), m.data(), v.data(), g.data(), 3, lr, b1, b2,
                 eps, 1.0 - b1, 1.0 - b2);
  for (std::size_t i = 0; i < 3; ++i) {
    const double mh = g[i];  // bias correction cancels at t=1
    const double vh = g[i] * g[i];
    const double expect = (i == 2 ? theta[i] : 0.0);
    if (g[i] != 0.0) {
      CHECK(close(theta[i],
                  (i == 0 ? 1.0 : -2.0) - lr * mh / (std::sqrt(vh) + eps),
                  1e-9));
    } else {
      CHECK(theta[2] == expect);
    }
  }
}

TEST_CASE("scalar and avx2 backends agree") {
  if (!k::backend_supported(k::Backend::avx2)) {
    MESSAGE("avx2 not available; skipping equivalence check");
    return;
  }
  Rng rng(99);
  const std::size_t n = 1037;  // odd length exercises the tail loops
  const auto x = random_vec(rng, n, 3.0);
  const auto y = random_vec(rng, n, 2.0);

  double dot_s = 0.0, dot_v = 0.0, sum_s = 0.0, sum_v = 0.0;
  double max_s = 0.0, max_v = 0.0;
  with_backend(k::Backend::scalar, [&] {
    dot_s = k::dot(x.data(), y.data(), n);
    sum_s = k::sum(x.data(), n);
    max_s = k::max(x.data(), n);
  });
  with_backend(k::Backend::avx2, [&] {
    dot_v = k::dot(x.data(), y.data(), n);
    sum_v = k::sum(x.data(), n);
    max_v = k::max(x.data(), n);
  });
  CHECK(close(dot_s, dot_v, 1e-12));
  CHECK(close(sum_s, sum_v, 1e-12));
  CHECK(max_s == max_v);

  std::vector<double> ys = y, yv = y;
  with_backend(k::Backend::scalar,
               [&] { k::axpy(0.37, x.data(), ys.data(), n); });
  with_backend(k::Backend::avx2,
               [&] { k::axpy(0.37, x.data(), yv.data(), n); });
  for (std::size_t i = 0; i < n; ++i) CHECK(close(ys[i], yv[i], 1e-14));

  const std::size_t m = 17, kk = 29, nn = 23;
  const auto a = random_vec(rng, m * kk);
  const auto b = random_vec(rng, kk * nn);
  const auto bt = random_vec(rng, nn * kk);
  std::vector<double> cs(m * nn), cv(m * nn);
  with_backend(k::Backend::scalar,
               [&] { k::matmul(a.data(), b.data(), cs.data(), m, kk, nn); });
  with_backend(k::Backend::avx2,
               [&] { k::matmul(a.data(), b.data(), cv.data(), m, kk, nn); });
  for (std::size_t i = 0; i < cs.size(); ++i) CHECK(close(cs[i], cv[i], 1e-12));

  with_backend(k::Backend::scalar,
               [&] { k::matmul_nt(a.data(), bt.data(), cs.data(), m, kk, nn); });
  with_backend(k::Backend::avx2,
               [&] { k::matmul_nt(a.data(), bt.data(), cv.data(), m, kk, nn); });
  for (std::size_t i = 0; i < cs.size(); ++i) CHECK(close(cs[i], cv[i], 1e-12));

  std::vector<double> ms(3 * n, 0.1), vs(3 * n, 0.2), ts(3 * n, 1.0);
  std::vector<double> mv = ms, vv = vs, tv = ts;
  const auto grad = random_vec(rng, 3 * n);
  with_backend(k::Backend::scalar, [&] {
    k::adam_update(ts.data(), ms.data(), vs.data(), grad.data(), 3 * n, 1e-3,
                   0.9, 0.999, 1e-8, 0.19, 0.002);
  });
  with_backend(k::Backend::avx2, [&] {
    k::adam_update(tv.data(), mv.data(), vv.data(), grad.data(), 3 * n, 1e-3,
                   0.9, 0.999, 1e-8, 0.19, 0.002);
  });
  for (std::size_t i = 0; i < ts.size(); ++i) {
    CHECK(close(ts[i], tv[i], 1e-12));
    CHECK(close(ms[i], mv[i], 1e-12));
    CHECK(close(vs[i], vv[i], 1e-12));
  }
}
