#include "disfas/kernels.hpp"

#include <cstdlib>
#include <cstring>

namespace disfas::kernels {

namespace {

Backend resolve_backend() {
    Backend chosen = Backend::scalar;
#if defined(DISFAS_HAVE_AVX2_KERNELS)
    if (__builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma")) {
        chosen = Backend::avx2;
    }
#endif
    if (const char* env = std::getenv("DISFAS_KERNELS")) {
        if (std::strcmp(env, "scalar") == 0) chosen = Backend::scalar;
        // "avx2" keeps the CPUID-gated choice; it cannot force an
        // unsupported path.
    }
    return chosen;
}

}  // namespace

Backend active_backend() {
    static const Backend b = resolve_backend();
    return b;
}

const char* backend_name(Backend b) {
    return b == Backend::avx2 ? "avx2" : "scalar";
}

#if defined(DISFAS_HAVE_AVX2_KERNELS)
#define DISFAS_DISPATCH(call) \
    if (active_backend() == Backend::avx2) return avx2::call; \
    return scalar::call
#else
#define DISFAS_DISPATCH(call) return scalar::call
#endif

void gemm(bool ta, bool tb, int m, int n, int k, float alpha, const float* a, int lda,
          const float* b, int ldb, float beta, float* c, int ldc) {
    DISFAS_DISPATCH(gemm(ta, tb, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc));
}
void gemm(bool ta, bool tb, int m, int n, int k, double alpha, const double* a, int lda,
          const double* b, int ldb, double beta, double* c, int ldc) {
    DISFAS_DISPATCH(gemm(ta, tb, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc));
}
void axpy(int64_t n, float alpha, const float* x, float* y) { DISFAS_DISPATCH(axpy(n, alpha, x, y)); }
void axpy(int64_t n, double alpha, const double* x, double* y) { DISFAS_DISPATCH(axpy(n, alpha, x, y)); }
void scale(int64_t n, float alpha, float* x) { DISFAS_DISPATCH(scale(n, alpha, x)); }
void scale(int64_t n, double alpha, double* x) { DISFAS_DISPATCH(scale(n, alpha, x)); }
double dot(int64_t n, const float* x, const float* y) { DISFAS_DISPATCH(dot(n, x, y)); }
double dot(int64_t n, const double* x, const double* y) { DISFAS_DISPATCH(dot(n, x, y)); }
double sum(int64_t n, const float* x) { DISFAS_DISPATCH(sum(n, x)); }
double sum(int64_t n, const double* x) { DISFAS_DISPATCH(sum(n, x)); }
double sumsq(int64_t n, const float* x) { DISFAS_DISPATCH(sumsq(n, x)); }
double sumsq(int64_t n, const double* x) { DISFAS_DISPATCH(sumsq(n, x)); }
double sumsqdiff(int64_t n, const float* x, const float* y) { DISFAS_DISPATCH(sumsqdiff(n, x, y)); }
double sumsqdiff(int64_t n, const double* x, const double* y) { DISFAS_DISPATCH(sumsqdiff(n, x, y)); }
void relu(int64_t n, const float* x, float* y) { DISFAS_DISPATCH(relu(n, x, y)); }
void relu(int64_t n, const double* x, double* y) { DISFAS_DISPATCH(relu(n, x, y)); }
void relu_backward(int64_t n, const float* x, const float* gy, float* gx) {
    DISFAS_DISPATCH(relu_backward(n, x, gy, gx));
}
void relu_backward(int64_t n, const double* x, const double* gy, double* gx) {
    DISFAS_DISPATCH(relu_backward(n, x, gy, gx));
}
void leaky_relu(int64_t n, const float* x, float* y, float slope) {
    DISFAS_DISPATCH(leaky_relu(n, x, y, slope));
}
void leaky_relu(int64_t n, const double* x, double* y, double slope) {
    DISFAS_DISPATCH(leaky_relu(n, x, y, slope));
}
void leaky_relu_backward(int64_t n, const float* x, const float* gy, float* gx, float slope) {
    DISFAS_DISPATCH(leaky_relu_backward(n, x, gy, gx, slope));
}
void leaky_relu_backward(int64_t n, const double* x, const double* gy, double* gx, double slope) {
    DISFAS_DISPATCH(leaky_relu_backward(n, x, gy, gx, slope));
}
void adamw_update(int64_t n, float* p, const float* g, float* m, float* v, float lr, float beta1,
                  float beta2, float eps, float wd, float bc1, float bc2) {
    DISFAS_DISPATCH(adamw_update(n, p, g, m, v, lr, beta1, beta2, eps, wd, bc1, bc2));
}
void adamw_update(int64_t n, double* p, const double* g, double* m, double* v, double lr,
                  double beta1, double beta2, double eps, double wd, double bc1, double bc2) {
    DISFAS_DISPATCH(adamw_update(n, p, g, m, v, lr, beta1, beta2, eps, wd, bc1, bc2));
}

#undef DISFAS_DISPATCH

}  // namespace disfas::kernels
