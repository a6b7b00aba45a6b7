#include "disfas/kernels.hpp"

#include <cmath>

// Reference kernels. Plain loops, double accumulators for reductions; these
// define the semantics the AVX2 variants are tested against.

namespace disfas::kernels::scalar {

namespace {

template <typename T>
void gemm_impl(bool trans_a, bool trans_b, int m, int n, int k, T alpha, const T* a, int lda,
               const T* b, int ldb, T beta, T* c, int ldc) {
    auto a_at = [&](int i, int p) { return trans_a ? a[p * lda + i] : a[i * lda + p]; };
    auto b_at = [&](int p, int j) { return trans_b ? b[j * ldb + p] : b[p * ldb + j]; };
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) {
            T acc = T(0);
            for (int p = 0; p < k; ++p) acc += a_at(i, p) * b_at(p, j);
            T& out = c[i * ldc + j];
            out = (beta == T(0)) ? alpha * acc : alpha * acc + beta * out;
        }
    }
}

template <typename T>
void adamw_impl(int64_t n, T* p, const T* g, T* m, T* v, T lr, T beta1, T beta2, T eps, T wd,
                T bc1, T bc2) {
    for (int64_t i = 0; i < n; ++i) {
        m[i] = beta1 * m[i] + (T(1) - beta1) * g[i];
        v[i] = beta2 * v[i] + (T(1) - beta2) * g[i] * g[i];
        const T mhat = m[i] * bc1;
        const T vhat = v[i] * bc2;
        p[i] -= lr * (mhat / (std::sqrt(vhat) + eps) + wd * p[i]);
    }
}

}  // namespace

void gemm(bool ta, bool tb, int m, int n, int k, float alpha, const float* a, int lda,
          const float* b, int ldb, float beta, float* c, int ldc) {
    gemm_impl(ta, tb, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}
void gemm(bool ta, bool tb, int m, int n, int k, double alpha, const double* a, int lda,
          const double* b, int ldb, double beta, double* c, int ldc) {
    gemm_impl(ta, tb, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}

void axpy(int64_t n, float alpha, const float* x, float* y) {
    for (int64_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}
void axpy(int64_t n, double alpha, const double* x, double* y) {
    for (int64_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void scale(int64_t n, float alpha, float* x) {
    for (int64_t i = 0; i < n; ++i) x[i] *= alpha;
}
void scale(int64_t n, double alpha, double* x) {
    for (int64_t i = 0; i < n; ++i) x[i] *= alpha;
}

double dot(int64_t n, const float* x, const float* y) {
    double acc = 0.0;
    for (int64_t i = 0; i < n; ++i) acc += static_cast<double>(x[i]) * y[i];
    return acc;
}
double dot(int64_t n, const double* x, const double* y) {
    double acc = 0.0;
    for (int64_t i = 0; i < n; ++i) acc += x[i] * y[i];
    return acc;
}

double sum(int64_t n, const float* x) {
    double acc = 0.0;
    for (int64_t i = 0; i < n; ++i) acc += x[i];
    return acc;
}
double sum(int64_t n, const double* x) {
    double acc = 0.0;
    for (int64_t i = 0; i < n; ++i) acc += x[i];
    return acc;
}

double sumsq(int64_t n, const float* x) {
    double acc = 0.0;
    for (int64_t i = 0; i < n; ++i) acc += static_cast<double>(x[i]) * x[i];
    return acc;
}
double sumsq(int64_t n, const double* x) {
    double acc = 0.0;
    for (int64_t i = 0; i < n; ++i) acc += x[i] * x[i];
    return acc;
}

double sumsqdiff(int64_t n, const float* x, const float* y) {
    double acc = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        const double d = static_cast<double>(x[i]) - y[i];
        acc += d * d;
    }
    return acc;
}
double sumsqdiff(int64_t n, const double* x, const double* y) {
    double acc = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        const double d = x[i] - y[i];
        acc += d * d;
    }
    return acc;
}

void relu(int64_t n, const float* x, float* y) {
    for (int64_t i = 0; i < n; ++i) y[i] = x[i] > 0.0f ? x[i] : 0.0f;
}
void relu(int64_t n, const double* x, double* y) {
    for (int64_t i = 0; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_backward(int64_t n, const float* x, const float* gy, float* gx) {
    for (int64_t i = 0; i < n; ++i) gx[i] = x[i] > 0.0f ? gy[i] : 0.0f;
}
void relu_backward(int64_t n, const double* x, const double* gy, double* gx) {
    for (int64_t i = 0; i < n; ++i) gx[i] = x[i] > 0.0 ? gy[i] : 0.0;
}

void leaky_relu(int64_t n, const float* x, float* y, float slope) {
    for (int64_t i = 0; i < n; ++i) y[i] = x[i] > 0.0f ? x[i] : slope * x[i];
}
void leaky_relu(int64_t n, const double* x, double* y, double slope) {
    for (int64_t i = 0; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : slope * x[i];
}

void leaky_relu_backward(int64_t n, const float* x, const float* gy, float* gx, float slope) {
    for (int64_t i = 0; i < n; ++i) gx[i] = x[i] > 0.0f ? gy[i] : slope * gy[i];
}
void leaky_relu_backward(int64_t n, const double* x, const double* gy, double* gx, double slope) {
    for (int64_t i = 0; i < n; ++i) gx[i] = x[i] > 0.0 ? gy[i] : slope * gy[i];
}

void adamw_update(int64_t n, float* p, const float* g, float* m, float* v, float lr, float beta1,
                  float beta2, float eps, float wd, float bc1, float bc2) {
    adamw_impl(n, p, g, m, v, lr, beta1, beta2, eps, wd, bc1, bc2);
}
void adamw_update(int64_t n, double* p, const double* g, double* m, double* v, double lr,
                  double beta1, double beta2, double eps, double wd, double bc1, double bc2) {
    adamw_impl(n, p, g, m, v, lr, beta1, beta2, eps, wd, bc1, bc2);
}

}  // namespace disfas::kernels::scalar
