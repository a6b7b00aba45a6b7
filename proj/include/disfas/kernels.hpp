#pragma once

#include <cstdint>
#include <string>

// Data-parallel inner loops of the training stack. Every kernel exists as a
// portable scalar reference and, on x86-64, an AVX2/FMA variant; the public
// entry points dispatch once per process based on CPUID. The two variants are
// equivalence-tested against each other (see tests/test_kernels.cpp).
//
// DISFAS_KERNELS=scalar|avx2 in the environment overrides the choice
// (requesting avx2 on a CPU without it falls back to scalar).

namespace disfas::kernels {

enum class Backend { scalar, avx2 };

Backend active_backend();
const char* backend_name(Backend b);

// C = alpha * op(A) * op(B) + beta * C, row-major with leading dimensions.
// beta == 0 assigns (C may be uninitialized).
void gemm(bool trans_a, bool trans_b, int m, int n, int k, float alpha,
          const float* a, int lda, const float* b, int ldb, float beta, float* c, int ldc);
void gemm(bool trans_a, bool trans_b, int m, int n, int k, double alpha,
          const double* a, int lda, const double* b, int ldb, double beta, double* c, int ldc);

// y += alpha * x
void axpy(int64_t n, float alpha, const float* x, float* y);
void axpy(int64_t n, double alpha, const double* x, double* y);

void scale(int64_t n, float alpha, float* x);
void scale(int64_t n, double alpha, double* x);

double dot(int64_t n, const float* x, const float* y);
double dot(int64_t n, const double* x, const double* y);

double sum(int64_t n, const float* x);
double sum(int64_t n, const double* x);

double sumsq(int64_t n, const float* x);
double sumsq(int64_t n, const double* x);

// sum_i (x[i] - y[i])^2
double sumsqdiff(int64_t n, const float* x, const float* y);
double sumsqdiff(int64_t n, const double* x, const double* y);

void relu(int64_t n, const float* x, float* y);
void relu(int64_t n, const double* x, double* y);

// gx = gy where x > 0, else 0
void relu_backward(int64_t n, const float* x, const float* gy, float* gx);
void relu_backward(int64_t n, const double* x, const double* gy, double* gx);

// y = x > 0 ? x : slope * x
void leaky_relu(int64_t n, const float* x, float* y, float slope);
void leaky_relu(int64_t n, const double* x, double* y, double slope);
void leaky_relu_backward(int64_t n, const float* x, const float* gy, float* gx, float slope);
void leaky_relu_backward(int64_t n, const double* x, const double* gy, double* gx, double slope);

// Decoupled-weight-decay adaptive-moment update for one parameter tensor.
// bc1/bc2 are the precomputed bias corrections 1/(1-beta1^t), 1/(1-beta2^t).
void adamw_update(int64_t n, float* p, const float* g, float* m, float* v, float lr,
                  float beta1, float beta2, float eps, float wd, float bc1, float bc2);
void adamw_update(int64_t n, double* p, const double* g, double* m, double* v, double lr,
                  double beta1, double beta2, double eps, double wd, double bc1, double bc2);

// Reference kernels, always available. The dispatching entry points above fall
// back to these; tests call them directly.
namespace scalar {
void gemm(bool trans_a, bool trans_b, int m, int n, int k, float alpha,
          const float* a, int lda, const float* b, int ldb, float beta, float* c, int ldc);
void gemm(bool trans_a, bool trans_b, int m, int n, int k, double alpha,
          const double* a, int lda, const double* b, int ldb, double beta, double* c, int ldc);
void axpy(int64_t n, float alpha, const float* x, float* y);
void axpy(int64_t n, double alpha, const double* x, double* y);
void scale(int64_t n, float alpha, float* x);
void scale(int64_t n, double alpha, double* x);
double dot(int64_t n, const float* x, const float* y);
double dot(int64_t n, const double* x, const double* y);
double sum(int64_t n, const float* x);
double sum(int64_t n, const double* x);
double sumsq(int64_t n, const float* x);
double sumsq(int64_t n, const double* x);
double sumsqdiff(int64_t n, const float* x, const float* y);
double sumsqdiff(int64_t n, const double* x, const double* y);
void relu(int64_t n, const float* x, float* y);
void relu(int64_t n, const double* x, double* y);
void relu_backward(int64_t n, const float* x, const float* gy, float* gx);
void relu_backward(int64_t n, const double* x, const double* gy, double* gx);

// y = x > 0 ? x : slope * x
void leaky_relu(int64_t n, const float* x, float* y, float slope);
void leaky_relu(int64_t n, const double* x, double* y, double slope);
void leaky_relu_backward(int64_t n, const float* x, const float* gy, float* gx, float slope);
void leaky_relu_backward(int64_t n, const double* x, const double* gy, double* gx, double slope);
void adamw_update(int64_t n, float* p, const float* g, float* m, float* v, float lr,
                  float beta1, float beta2, float eps, float wd, float bc1, float bc2);
void adamw_update(int64_t n, double* p, const double* g, double* m, double* v, double lr,
                  double beta1, double beta2, double eps, double wd, double bc1, double bc2);
}  // namespace scalar

#if defined(__x86_64__) || defined(__i386__)
#define DISFAS_HAVE_AVX2_KERNELS 1
namespace avx2 {
void gemm(bool trans_a, bool trans_b, int m, int n, int k, float alpha,
          const float* a, int lda, const float* b, int ldb, float beta, float* c, int ldc);
void gemm(bool trans_a, bool trans_b, int m, int n, int k, double alpha,
          const double* a, int lda, const double* b, int ldb, double beta, double* c, int ldc);
void axpy(int64_t n, float alpha, const float* x, float* y);
void axpy(int64_t n, double alpha, const double* x, double* y);
void scale(int64_t n, float alpha, float* x);
void scale(int64_t n, double alpha, double* x);
double dot(int64_t n, const float* x, const float* y);
double dot(int64_t n, const double* x, const double* y);
double sum(int64_t n, const float* x);
double sum(int64_t n, const double* x);
double sumsq(int64_t n, const float* x);
double sumsq(int64_t n, const double* x);
double sumsqdiff(int64_t n, const float* x, const float* y);
double sumsqdiff(int64_t n, const double* x, const double* y);
void relu(int64_t n, const float* x, float* y);
void relu(int64_t n, const double* x, double* y);
void relu_backward(int64_t n, const float* x, const float* gy, float* gx);
void relu_backward(int64_t n, const double* x, const double* gy, double* gx);

// y = x > 0 ? x : slope * x
void leaky_relu(int64_t n, const float* x, float* y, float slope);
void leaky_relu(int64_t n, const double* x, double* y, double slope);
void leaky_relu_backward(int64_t n, const float* x, const float* gy, float* gx, float slope);
void leaky_relu_backward(int64_t n, const double* x, const double* gy, double* gx, double slope);
void adamw_update(int64_t n, float* p, const float* g, float* m, float* v, float lr,
                  float beta1, float beta2, float eps, float wd, float bc1, float bc2);
void adamw_update(int64_t n, double* p, const double* g, double* m, double* v, double lr,
                  double beta1, double beta2, double eps, double wd, double bc1, double bc2);
}  // namespace avx2
#endif

}  // namespace disfas::kernels
