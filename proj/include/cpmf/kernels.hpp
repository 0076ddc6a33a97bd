#pragma once

#include <cstddef>
#include <string_view>

// Double-precision inner loops shared by the model, training, and parallel
// code. Every op has a scalar reference implementation and (on x86-64 with
// AVX2+FMA) a vector variant; the active backend is chosen once at startup
// and can be overridden with set_backend() or the CPM_FORGE_KERNELS
// environment variable ("scalar" or "avx2"). Scalar and AVX2 variants are
// equivalence-tested against each other; they may differ by reassociation
// and FMA rounding, never in accumulation semantics.
namespace cpmf::kernels {

enum class Backend { scalar, avx2 };

Backend active_backend();
void set_backend(Backend b);
bool backend_supported(Backend b);
std::string_view backend_name(Backend b);

double dot(const double* x, const double* y, std::size_t n);

// y += a * x
void axpy(double a, const double* x, double* y, std::size_t n);

// out = x + y (out may alias x or y)
void add(const double* x, const double* y, double* out, std::size_t n);

// x *= a
void scale(double a, double* x, std::size_t n);

double sum(const double* x, std::size_t n);
double max(const double* x, std::size_t n);

// C[M x N] = A[M x K] * B[K x N], row-major. Accumulates over k in index
// order for every output element regardless of backend.
void matmul(const double* a, const double* b, double* c, std::size_t m,
            std::size_t k, std::size_t n);

// C[M x N] = A[M x K] * B[N x K]^T (B stored row-major as N rows of K).
void matmul_nt(const double* a, const double* b, double* c, std::size_t m,
               std::size_t k, std::size_t n);

// C[K x N] += A[M x K]^T * B[M x N]. Used for weight gradients.
void matmul_tn_acc(const double* a, const double* b, double* c, std::size_t m,
                   std::size_t k, std::size_t n);

// Fused Adam coordinate update over n elements. bc1/bc2 are the bias
// corrections 1 - beta^t already evaluated by the caller.
void adam_update(double* theta, double* m, double* v, const double* g,
                 std::size_t n, double lr, double beta1, double beta2,
                 double eps, double bc1, double bc2);

}  // namespace cpmf::kernels
