#include "cpmf/kernels.hpp"

#include <cmath>
#include <cstdlib>
#include <cstring>
#include <stdexcept>

namespace cpmf::kernels {

namespace scalar {

double dot(const double* x, const double* y, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i] * y[i];
  return acc;
}

void axpy(double a, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

void add(const double* x, const double* y, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i] + y[i];
}

void scale(double a, double* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) x[i] *= a;
}

double sum(const double* x, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i];
  return acc;
}

double max(const double* x, std::size_t n) {
  double m = x[0];
  for (std::size_t i = 1; i < n; ++i) m = x[i] > m ? x[i] : m;
  return m;
}

void matmul(const double* a, const double* b, double* c, std::size_t m,
            std::size_t k, std::size_t n) {
  std::memset(c, 0, m * n * sizeof(double));
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    const double* arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      axpy(arow[p], b + p * n, crow, n);
    }
  }
}

void matmul_nt(const double* a, const double* b, double* c, std::size_t m,
               std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    double* crow = c + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      crow[j] = dot(arow, b + j * k, k);
    }
  }
}

void matmul_tn_acc(const double* a, const double* b, double* c, std::size_t m,
                   std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    const double* brow = b + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      axpy(arow[p], brow, c + p * n, n);
    }
  }
}

void adam_update(double* theta, double* m, double* v, const double* g,
                 std::size_t n, double lr, double beta1, double beta2,
                 double eps, double bc1, double bc2) {
  for (std::size_t i = 0; i < n; ++i) {
    m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
    v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
    const double mhat = m[i] / bc1;
    const double vhat = v[i] / bc2;
    theta[i] -= lr * mhat / (std::sqrt(vhat) + eps);
  }
}

}  // namespace scalar

#if defined(__x86_64__)
namespace avx2 {
double dot(const double* x, const double* y, std::size_t n);
void axpy(double a, const double* x, double* y, std::size_t n);
void add(const double* x, const double* y, double* out, std::size_t n);
void scale(double a, double* x, std::size_t n);
double sum(const double* x, std::size_t n);
double max(const double* x, std::size_t n);
void matmul(const double* a, const double* b, double* c, std::size_t m,
            std::size_t k, std::size_t n);
void matmul_nt(const double* a, const double* b, double* c, std::size_t m,
               std::size_t k, std::size_t n);
void matmul_tn_acc(const double* a, const double* b, double* c, std::size_t m,
                   std::size_t k, std::size_t n);
void adam_update(double* theta, double* m, double* v, const double* g,
                 std::size_t n, double lr, double beta1, double beta2,
                 double eps, double bc1, double bc2);
}  // namespace avx2
#endif

namespace {

bool avx2_available() {
#if defined(__x86_64__)
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Backend initial_backend() {
  if (const char* env = std::getenv("CPM_FORGE_KERNELS")) {
    if (std::string_view(env) == "scalar") return Backend::scalar;
    if (std::string_view(env) == "avx2" && avx2_available())
      return Backend::avx2;
  }
  return avx2_available() ? Backend::avx2 : Backend::scalar;
}

Backend g_backend = initial_backend();

}  // namespace

Backend active_backend() { return g_backend; }

bool backend_supported(Backend b) {
  return b == Backend::scalar || avx2_available();
}

void set_backend(Backend b) {
  if (!backend_supported(b)) {
    throw std::runtime_error("kernel backend not supported on this host");
  }
  g_backend = b;
}

std::string_view backend_name(Backend b) {
  return b == Backend::scalar ? "scalar" : "avx2";
}

#if defined(__x86_64__)
#define CPMF_DISPATCH(fn, ...)                     \
  do {                                             \
    if (g_backend == Backend::avx2)                \
      return avx2::fn(__VA_ARGS__);                \
    return scalar::fn(__VA_ARGS__);                \
  } while (0)
#else
#define CPMF_DISPATCH(fn, ...) return scalar::fn(__VA_ARGS__)
#endif

double dot(const double* x, const double* y, std::size_t n) {
  CPMF_DISPATCH(dot, x, y, n);
}

void axpy(double a, const double* x, double* y, std::size_t n) {
  CPMF_DISPATCH(axpy, a, x, y, n);
}

void add(const double* x, const double* y, double* out, std::size_t n) {
  CPMF_DISPATCH(add, x, y, out, n);
}

void scale(double a, double* x, std::size_t n) {
  CPMF_DISPATCH(scale, a, x, n);
}

double sum(const double* x, std::size_t n) { CPMF_DISPATCH(sum, x, n); }

double max(const double* x, std::size_t n) { CPMF_DISPATCH(max, x, n); }

void matmul(const double* a, const double* b, double* c, std::size_t m,
            std::size_t k, std::size_t n) {
  CPMF_DISPATCH(matmul, a, b, c, m, k, n);
}

void matmul_nt(const double* a, const double* b, double* c, std::size_t m,
               std::size_t k, std::size_t n) {
  CPMF_DISPATCH(matmul_nt, a, b, c, m, k, n);
}

void matmul_tn_acc(const double* a, const double* b, double* c, std::size_t m,
                   std::size_t k, std::size_t n) {
  CPMF_DISPATCH(matmul_tn_acc, a, b, c, m, k, n);
}

void adam_update(double* theta, double* m, double* v, const double* g,
                 std::size_t n, double lr, double beta1, double beta2,
                 double eps, double bc1, double bc2) {
  CPMF_DISPATCH(adam_update, theta, m, v, g, n, lr, beta1, beta2, eps, bc1,
                bc2);
}

#undef CPMF_DISPATCH

}  // namespace cpmf::kernels
