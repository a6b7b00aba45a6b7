#include "disfas/kernels.hpp"

#if defined(DISFAS_HAVE_AVX2_KERNELS)

#include <immintrin.h>

#include <cmath>

// AVX2/FMA variants. Compiled with per-function target attributes so the TU
// builds without global -mavx2 and the binary stays runnable on older CPUs
// (dispatch in kernels.cpp never routes here without CPUID support).

#define DISFAS_AVX2 __attribute__((target("avx2,fma")))

namespace disfas::kernels::avx2 {

namespace {

DISFAS_AVX2 inline double hsum(__m256d v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    __m128d shuf = _mm_unpackhi_pd(lo, lo);
    return _mm_cvtsd_f64(_mm_add_sd(lo, shuf));
}

DISFAS_AVX2 inline float hsum(__m256 v) {
    __m128 lo = _mm256_castps256_ps128(v);
    __m128 hi = _mm256_extractf128_ps(v, 1);
    lo = _mm_add_ps(lo, hi);
    lo = _mm_add_ps(lo, _mm_movehl_ps(lo, lo));
    lo = _mm_add_ss(lo, _mm_shuffle_ps(lo, lo, 0x55));
    return _mm_cvtss_f32(lo);
}

// Float microkernel: 4 rows of A against a 16-wide panel of B columns.
// a_stride_row/a_stride_k encode the NN (a[i*lda+p]) vs TN (a[p*lda+i]) views.
DISFAS_AVX2 void f32_panel(int m, int n, int k, float alpha, const float* a, int64_t a_row,
                           int64_t a_col, const float* b, int ldb, float beta, float* c, int ldc) {
    int i0 = 0;
    for (; i0 + 4 <= m; i0 += 4) {
        const float* a0 = a + i0 * a_row;
        int j0 = 0;
        for (; j0 + 16 <= n; j0 += 16) {
            __m256 acc00 = _mm256_setzero_ps(), acc01 = _mm256_setzero_ps();
            __m256 acc10 = _mm256_setzero_ps(), acc11 = _mm256_setzero_ps();
            __m256 acc20 = _mm256_setzero_ps(), acc21 = _mm256_setzero_ps();
            __m256 acc30 = _mm256_setzero_ps(), acc31 = _mm256_setzero_ps();
            const float* bp = b + j0;
            for (int p = 0; p < k; ++p, bp += ldb) {
                const __m256 b0 = _mm256_loadu_ps(bp);
                const __m256 b1 = _mm256_loadu_ps(bp + 8);
                const float* ap = a0 + p * a_col;
                __m256 av;
                av = _mm256_set1_ps(ap[0 * a_row]);
                acc00 = _mm256_fmadd_ps(av, b0, acc00);
                acc01 = _mm256_fmadd_ps(av, b1, acc01);
                av = _mm256_set1_ps(ap[1 * a_row]);
                acc10 = _mm256_fmadd_ps(av, b0, acc10);
                acc11 = _mm256_fmadd_ps(av, b1, acc11);
                av = _mm256_set1_ps(ap[2 * a_row]);
                acc20 = _mm256_fmadd_ps(av, b0, acc20);
                acc21 = _mm256_fmadd_ps(av, b1, acc21);
                av = _mm256_set1_ps(ap[3 * a_row]);
                acc30 = _mm256_fmadd_ps(av, b0, acc30);
                acc31 = _mm256_fmadd_ps(av, b1, acc31);
            }
            const __m256 va = _mm256_set1_ps(alpha);
            __m256 accs[4][2] = {{acc00, acc01}, {acc10, acc11}, {acc20, acc21}, {acc30, acc31}};
            for (int i = 0; i < 4; ++i) {
                float* cp = c + (i0 + i) * ldc + j0;
                for (int h = 0; h < 2; ++h) {
                    __m256 out = _mm256_mul_ps(va, accs[i][h]);
                    if (beta != 0.0f) {
                        out = _mm256_fmadd_ps(_mm256_set1_ps(beta), _mm256_loadu_ps(cp + 8 * h), out);
                    }
                    _mm256_storeu_ps(cp + 8 * h, out);
                }
            }
        }
        for (; j0 < n; ++j0) {
            for (int i = 0; i < 4; ++i) {
                float acc = 0.0f;
                const float* ap = a0 + i * a_row;
                for (int p = 0; p < k; ++p) acc += ap[p * a_col] * b[p * ldb + j0];
                float& out = c[(i0 + i) * ldc + j0];
                out = (beta == 0.0f) ? alpha * acc : alpha * acc + beta * out;
            }
        }
    }
    for (; i0 < m; ++i0) {
        const float* a0 = a + i0 * a_row;
        int j0 = 0;
        for (; j0 + 8 <= n; j0 += 8) {
            __m256 acc = _mm256_setzero_ps();
            const float* bp = b + j0;
            for (int p = 0; p < k; ++p, bp += ldb) {
                acc = _mm256_fmadd_ps(_mm256_set1_ps(a0[p * a_col]), _mm256_loadu_ps(bp), acc);
            }
            __m256 out = _mm256_mul_ps(_mm256_set1_ps(alpha), acc);
            float* cp = c + i0 * ldc + j0;
            if (beta != 0.0f) out = _mm256_fmadd_ps(_mm256_set1_ps(beta), _mm256_loadu_ps(cp), out);
            _mm256_storeu_ps(cp, out);
        }
        for (; j0 < n; ++j0) {
            float acc = 0.0f;
            for (int p = 0; p < k; ++p) acc += a0[p * a_col] * b[p * ldb + j0];
            float& out = c[i0 * ldc + j0];
            out = (beta == 0.0f) ? alpha * acc : alpha * acc + beta * out;
        }
    }
}

DISFAS_AVX2 void f64_panel(int m, int n, int k, double alpha, const double* a, int64_t a_row,
                           int64_t a_col, const double* b, int ldb, double beta, double* c,
                           int ldc) {
    int i0 = 0;
    for (; i0 + 4 <= m; i0 += 4) {
        const double* a0 = a + i0 * a_row;
        int j0 = 0;
        for (; j0 + 8 <= n; j0 += 8) {
            __m256d acc00 = _mm256_setzero_pd(), acc01 = _mm256_setzero_pd();
            __m256d acc10 = _mm256_setzero_pd(), acc11 = _mm256_setzero_pd();
            __m256d acc20 = _mm256_setzero_pd(), acc21 = _mm256_setzero_pd();
            __m256d acc30 = _mm256_setzero_pd(), acc31 = _mm256_setzero_pd();
            const double* bp = b + j0;
            for (int p = 0; p < k; ++p, bp += ldb) {
                const __m256d b0 = _mm256_loadu_pd(bp);
                const __m256d b1 = _mm256_loadu_pd(bp + 4);
                const double* ap = a0 + p * a_col;
                __m256d av;
                av = _mm256_set1_pd(ap[0 * a_row]);
                acc00 = _mm256_fmadd_pd(av, b0, acc00);
                acc01 = _mm256_fmadd_pd(av, b1, acc01);
                av = _mm256_set1_pd(ap[1 * a_row]);
                acc10 = _mm256_fmadd_pd(av, b0, acc10);
                acc11 = _mm256_fmadd_pd(av, b1, acc11);
                av = _mm256_set1_pd(ap[2 * a_row]);
                acc20 = _mm256_fmadd_pd(av, b0, acc20);
                acc21 = _mm256_fmadd_pd(av, b1, acc21);
                av = _mm256_set1_pd(ap[3 * a_row]);
                acc30 = _mm256_fmadd_pd(av, b0, acc30);
                acc31 = _mm256_fmadd_pd(av, b1, acc31);
            }
            const __m256d va = _mm256_set1_pd(alpha);
            __m256d accs[4][2] = {{acc00, acc01}, {acc10, acc11}, {acc20, acc21}, {acc30, acc31}};
            for (int i = 0; i < 4; ++i) {
                double* cp = c + (i0 + i) * ldc + j0;
                for (int h = 0; h < 2; ++h) {
                    __m256d out = _mm256_mul_pd(va, accs[i][h]);
                    if (beta != 0.0) {
                        out = _mm256_fmadd_pd(_mm256_set1_pd(beta), _mm256_loadu_pd(cp + 4 * h), out);
                    }
                    _mm256_storeu_pd(cp + 4 * h, out);
                }
            }
        }
        for (; j0 < n; ++j0) {
            for (int i = 0; i < 4; ++i) {
                double acc = 0.0;
                const double* ap = a0 + i * a_row;
                for (int p = 0; p < k; ++p) acc += ap[p * a_col] * b[p * ldb + j0];
                double& out = c[(i0 + i) * ldc + j0];
                out = (beta == 0.0) ? alpha * acc : alpha * acc + beta * out;
            }
        }
    }
    for (; i0 < m; ++i0) {
        const double* a0 = a + i0 * a_row;
        int j0 = 0;
        for (; j0 + 4 <= n; j0 += 4) {
            __m256d acc = _mm256_setzero_pd();
            const double* bp = b + j0;
            for (int p = 0; p < k; ++p, bp += ldb) {
                acc = _mm256_fmadd_pd(_mm256_set1_pd(a0[p * a_col]), _mm256_loadu_pd(bp), acc);
            }
            __m256d out = _mm256_mul_pd(_mm256_set1_pd(alpha), acc);
            double* cp = c + i0 * ldc + j0;
            if (beta != 0.0) out = _mm256_fmadd_pd(_mm256_set1_pd(beta), _mm256_loadu_pd(cp), out);
            _mm256_storeu_pd(cp, out);
        }
        for (; j0 < n; ++j0) {
            double acc = 0.0;
            for (int p = 0; p < k; ++p) acc += a0[p * a_col] * b[p * ldb + j0];
            double& out = c[i0 * ldc + j0];
            out = (beta == 0.0) ? alpha * acc : alpha * acc + beta * out;
        }
    }
}

// NT form: rows of A against rows of B, both contiguous along k.
DISFAS_AVX2 void f32_nt(int m, int n, int k, float alpha, const float* a, int lda, const float* b,
                        int ldb, float beta, float* c, int ldc) {
    for (int i = 0; i < m; ++i) {
        const float* ar = a + i * lda;
        for (int j = 0; j < n; ++j) {
            const float* br = b + j * ldb;
            __m256 acc = _mm256_setzero_ps();
            int p = 0;
            for (; p + 8 <= k; p += 8) {
                acc = _mm256_fmadd_ps(_mm256_loadu_ps(ar + p), _mm256_loadu_ps(br + p), acc);
            }
            float s = hsum(acc);
            for (; p < k; ++p) s += ar[p] * br[p];
            float& out = c[i * ldc + j];
            out = (beta == 0.0f) ? alpha * s : alpha * s + beta * out;
        }
    }
}

DISFAS_AVX2 void f64_nt(int m, int n, int k, double alpha, const double* a, int lda,
                        const double* b, int ldb, double beta, double* c, int ldc) {
    for (int i = 0; i < m; ++i) {
        const double* ar = a + i * lda;
        for (int j = 0; j < n; ++j) {
            const double* br = b + j * ldb;
            __m256d acc = _mm256_setzero_pd();
            int p = 0;
            for (; p + 4 <= k; p += 4) {
                acc = _mm256_fmadd_pd(_mm256_loadu_pd(ar + p), _mm256_loadu_pd(br + p), acc);
            }
            double s = hsum(acc);
            for (; p < k; ++p) s += ar[p] * br[p];
            double& out = c[i * ldc + j];
            out = (beta == 0.0) ? alpha * s : alpha * s + beta * out;
        }
    }
}

}  // namespace

void gemm(bool ta, bool tb, int m, int n, int k, float alpha, const float* a, int lda,
          const float* b, int ldb, float beta, float* c, int ldc) {
    if (!ta && !tb) {
        f32_panel(m, n, k, alpha, a, lda, 1, b, ldb, beta, c, ldc);
    } else if (ta && !tb) {
        f32_panel(m, n, k, alpha, a, 1, lda, b, ldb, beta, c, ldc);
    } else if (!ta && tb) {
        f32_nt(m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
    } else {
        scalar::gemm(ta, tb, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
    }
}

void gemm(bool ta, bool tb, int m, int n, int k, double alpha, const double* a, int lda,
          const double* b, int ldb, double beta, double* c, int ldc) {
    if (!ta && !tb) {
        f64_panel(m, n, k, alpha, a, lda, 1, b, ldb, beta, c, ldc);
    } else if (ta && !tb) {
        f64_panel(m, n, k, alpha, a, 1, lda, b, ldb, beta, c, ldc);
    } else if (!ta && tb) {
        f64_nt(m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
    } else {
        scalar::gemm(ta, tb, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
    }
}

DISFAS_AVX2 void axpy(int64_t n, float alpha, const float* x, float* y) {
    const __m256 va = _mm256_set1_ps(alpha);
    int64_t i = 0;
    for (; i + 8 <= n; i += 8) {
        _mm256_storeu_ps(y + i, _mm256_fmadd_ps(va, _mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i)));
    }
    for (; i < n; ++i) y[i] += alpha * x[i];
}

DISFAS_AVX2 void axpy(int64_t n, double alpha, const double* x, double* y) {
    const __m256d va = _mm256_set1_pd(alpha);
    int64_t i = 0;
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
    }
    for (; i < n; ++i) y[i] += alpha * x[i];
}

DISFAS_AVX2 void scale(int64_t n, float alpha, float* x) {
    const __m256 va = _mm256_set1_ps(alpha);
    int64_t i = 0;
    for (; i + 8 <= n; i += 8) _mm256_storeu_ps(x + i, _mm256_mul_ps(va, _mm256_loadu_ps(x + i)));
    for (; i < n; ++i) x[i] *= alpha;
}

DISFAS_AVX2 void scale(int64_t n, double alpha, double* x) {
    const __m256d va = _mm256_set1_pd(alpha);
    int64_t i = 0;
    for (; i + 4 <= n; i += 4) _mm256_storeu_pd(x + i, _mm256_mul_pd(va, _mm256_loadu_pd(x + i)));
    for (; i < n; ++i) x[i] *= alpha;
}

// Float reductions convert lanes to double before accumulating so the result
// tracks the reference semantics closely.
DISFAS_AVX2 double dot(int64_t n, const float* x, const float* y) {
    __m256d acc = _mm256_setzero_pd();
    int64_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d xv = _mm256_cvtps_pd(_mm_loadu_ps(x + i));
        const __m256d yv = _mm256_cvtps_pd(_mm_loadu_ps(y + i));
        acc = _mm256_fmadd_pd(xv, yv, acc);
    }
    double s = hsum(acc);
    for (; i < n; ++i) s += static_cast<double>(x[i]) * y[i];
    return s;
}

DISFAS_AVX2 double dot(int64_t n, const double* x, const double* y) {
    __m256d acc = _mm256_setzero_pd();
    int64_t i = 0;
    for (; i + 4 <= n; i += 4) {
        acc = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc);
    }
    double s = hsum(acc);
    for (; i < n; ++i) s += x[i] * y[i];
    return s;
}

DISFAS_AVX2 double sum(int64_t n, const float* x) {
    __m256d acc = _mm256_setzero_pd();
    int64_t i = 0;
    for (; i + 4 <= n; i += 4) acc = _mm256_add_pd(acc, _mm256_cvtps_pd(_mm_loadu_ps(x + i)));
    double s = hsum(acc);
    for (; i < n; ++i) s += x[i];
    return s;
}

DISFAS_AVX2 double sum(int64_t n, const double* x) {
    __m256d acc = _mm256_setzero_pd();
    int64_t i = 0;
    for (; i + 4 <= n; i += 4) acc = _mm256_add_pd(acc, _mm256_loadu_pd(x + i));
    double s = hsum(acc);
    for (; i < n; ++i) s += x[i];
    return s;
}

DISFAS_AVX2 double sumsq(int64_t n, const float* x) {
    __m256d acc = _mm256_setzero_pd();
    int64_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d xv = _mm256_cvtps_pd(_mm_loadu_ps(x + i));
        acc = _mm256_fmadd_pd(xv, xv, acc);
    }
    double s = hsum(acc);
    for (; i < n; ++i) s += static_cast<double>(x[i]) * x[i];
    return s;
}

DISFAS_AVX2 double sumsq(int64_t n, const double* x) {
    __m256d acc = _mm256_setzero_pd();
    int64_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d xv = _mm256_loadu_pd(x + i);
        acc = _mm256_fmadd_pd(xv, xv, acc);
    }
    double s = hsum(acc);
    for (; i < n; ++i) s += x[i] * x[i];
    return s;
}

DISFAS_AVX2 double sumsqdiff(int64_t n, const float* x, const float* y) {
    __m256d acc = _mm256_setzero_pd();
    int64_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d d = _mm256_sub_pd(_mm256_cvtps_pd(_mm_loadu_ps(x + i)),
                                        _mm256_cvtps_pd(_mm_loadu_ps(y + i)));
        acc = _mm256_fmadd_pd(d, d, acc);
    }
    double s = hsum(acc);
    for (; i < n; ++i) {
        const double d = static_cast<double>(x[i]) - y[i];
        s += d * d;
    }
    return s;
}

DISFAS_AVX2 double sumsqdiff(int64_t n, const double* x, const double* y) {
    __m256d acc = _mm256_setzero_pd();
    int64_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d d = _mm256_sub_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i));
        acc = _mm256_fmadd_pd(d, d, acc);
    }
    double s = hsum(acc);
    for (; i < n; ++i) {
        const double d = x[i] - y[i];
        s += d * d;
    }
    return s;
}

DISFAS_AVX2 void relu(int64_t n, const float* x, float* y) {
    const __m256 zero = _mm256_setzero_ps();
    int64_t i = 0;
    for (; i + 8 <= n; i += 8) _mm256_storeu_ps(y + i, _mm256_max_ps(zero, _mm256_loadu_ps(x + i)));
    for (; i < n; ++i) y[i] = x[i] > 0.0f ? x[i] : 0.0f;
}

DISFAS_AVX2 void relu(int64_t n, const double* x, double* y) {
    const __m256d zero = _mm256_setzero_pd();
    int64_t i = 0;
    for (; i + 4 <= n; i += 4) _mm256_storeu_pd(y + i, _mm256_max_pd(zero, _mm256_loadu_pd(x + i)));
    for (; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
}

DISFAS_AVX2 void relu_backward(int64_t n, const float* x, const float* gy, float* gx) {
    const __m256 zero = _mm256_setzero_ps();
    int64_t i = 0;
    for (; i + 8 <= n; i += 8) {
        const __m256 mask = _mm256_cmp_ps(_mm256_loadu_ps(x + i), zero, _CMP_GT_OQ);
        _mm256_storeu_ps(gx + i, _mm256_and_ps(mask, _mm256_loadu_ps(gy + i)));
    }
    for (; i < n; ++i) gx[i] = x[i] > 0.0f ? gy[i] : 0.0f;
}

DISFAS_AVX2 void relu_backward(int64_t n, const double* x, const double* gy, double* gx) {
    const __m256d zero = _mm256_setzero_pd();
    int64_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d mask = _mm256_cmp_pd(_mm256_loadu_pd(x + i), zero, _CMP_GT_OQ);
        _mm256_storeu_pd(gx + i, _mm256_and_pd(mask, _mm256_loadu_pd(gy + i)));
    }
    for (; i < n; ++i) gx[i] = x[i] > 0.0 ? gy[i] : 0.0;
}

DISFAS_AVX2 void leaky_relu(int64_t n, const float* x, float* y, float slope) {
    const __m256 zero = _mm256_setzero_ps();
    const __m256 vs = _mm256_set1_ps(slope);
    int64_t i = 0;
    for (; i + 8 <= n; i += 8) {
        const __m256 xv = _mm256_loadu_ps(x + i);
        const __m256 mask = _mm256_cmp_ps(xv, zero, _CMP_GT_OQ);
        _mm256_storeu_ps(y + i, _mm256_blendv_ps(_mm256_mul_ps(vs, xv), xv, mask));
    }
    for (; i < n; ++i) y[i] = x[i] > 0.0f ? x[i] : slope * x[i];
}

DISFAS_AVX2 void leaky_relu(int64_t n, const double* x, double* y, double slope) {
    const __m256d zero = _mm256_setzero_pd();
    const __m256d vs = _mm256_set1_pd(slope);
    int64_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d xv = _mm256_loadu_pd(x + i);
        const __m256d mask = _mm256_cmp_pd(xv, zero, _CMP_GT_OQ);
        _mm256_storeu_pd(y + i, _mm256_blendv_pd(_mm256_mul_pd(vs, xv), xv, mask));
    }
    for (; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : slope * x[i];
}

DISFAS_AVX2 void leaky_relu_backward(int64_t n, const float* x, const float* gy, float* gx,
                                     float slope) {
    const __m256 zero = _mm256_setzero_ps();
    const __m256 vs = _mm256_set1_ps(slope);
    int64_t i = 0;
    for (; i + 8 <= n; i += 8) {
        const __m256 mask = _mm256_cmp_ps(_mm256_loadu_ps(x + i), zero, _CMP_GT_OQ);
        const __m256 gv = _mm256_loadu_ps(gy + i);
        _mm256_storeu_ps(gx + i, _mm256_blendv_ps(_mm256_mul_ps(vs, gv), gv, mask));
    }
    for (; i < n; ++i) gx[i] = x[i] > 0.0f ? gy[i] : slope * gy[i];
}

DISFAS_AVX2 void leaky_relu_backward(int64_t n, const double* x, const double* gy, double* gx,
                                     double slope) {
    const __m256d zero = _mm256_setzero_pd();
    const __m256d vs = _mm256_set1_pd(slope);
    int64_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d mask = _mm256_cmp_pd(_mm256_loadu_pd(x + i), zero, _CMP_GT_OQ);
        const __m256d gv = _mm256_loadu_pd(gy + i);
        _mm256_storeu_pd(gx + i, _mm256_blendv_pd(_mm256_mul_pd(vs, gv), gv, mask));
    }
    for (; i < n; ++i) gx[i] = x[i] > 0.0 ? gy[i] : slope * gy[i];
}

DISFAS_AVX2 void adamw_update(int64_t n, float* p, const float* g, float* m, float* v, float lr,
                              float beta1, float beta2, float eps, float wd, float bc1,
                              float bc2) {
    const __m256 vb1 = _mm256_set1_ps(beta1), v1b1 = _mm256_set1_ps(1.0f - beta1);
    const __m256 vb2 = _mm256_set1_ps(beta2), v1b2 = _mm256_set1_ps(1.0f - beta2);
    const __m256 vlr = _mm256_set1_ps(lr), veps = _mm256_set1_ps(eps);
    const __m256 vwd = _mm256_set1_ps(wd), vbc1 = _mm256_set1_ps(bc1), vbc2 = _mm256_set1_ps(bc2);
    int64_t i = 0;
    for (; i + 8 <= n; i += 8) {
        const __m256 gv = _mm256_loadu_ps(g + i);
        __m256 mv = _mm256_fmadd_ps(vb1, _mm256_loadu_ps(m + i), _mm256_mul_ps(v1b1, gv));
        __m256 vv = _mm256_fmadd_ps(vb2, _mm256_loadu_ps(v + i),
                                    _mm256_mul_ps(v1b2, _mm256_mul_ps(gv, gv)));
        _mm256_storeu_ps(m + i, mv);
        _mm256_storeu_ps(v + i, vv);
        const __m256 mhat = _mm256_mul_ps(mv, vbc1);
        const __m256 denom = _mm256_add_ps(_mm256_sqrt_ps(_mm256_mul_ps(vv, vbc2)), veps);
        const __m256 pv = _mm256_loadu_ps(p + i);
        const __m256 step = _mm256_fmadd_ps(vwd, pv, _mm256_div_ps(mhat, denom));
        _mm256_storeu_ps(p + i, _mm256_fnmadd_ps(vlr, step, pv));
    }
    for (; i < n; ++i) {
        m[i] = beta1 * m[i] + (1.0f - beta1) * g[i];
        v[i] = beta2 * v[i] + (1.0f - beta2) * g[i] * g[i];
        p[i] -= lr * (m[i] * bc1 / (std::sqrt(v[i] * bc2) + eps) + wd * p[i]);
    }
}

DISFAS_AVX2 void adamw_update(int64_t n, double* p, const double* g, double* m, double* v,
                              double lr, double beta1, double beta2, double eps, double wd,
                              double bc1, double bc2) {
    const __m256d vb1 = _mm256_set1_pd(beta1), v1b1 = _mm256_set1_pd(1.0 - beta1);
    const __m256d vb2 = _mm256_set1_pd(beta2), v1b2 = _mm256_set1_pd(1.0 - beta2);
    const __m256d vlr = _mm256_set1_pd(lr), veps = _mm256_set1_pd(eps);
    const __m256d vwd = _mm256_set1_pd(wd), vbc1 = _mm256_set1_pd(bc1), vbc2 = _mm256_set1_pd(bc2);
    int64_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d gv = _mm256_loadu_pd(g + i);
        __m256d mv = _mm256_fmadd_pd(vb1, _mm256_loadu_pd(m + i), _mm256_mul_pd(v1b1, gv));
        __m256d vv = _mm256_fmadd_pd(vb2, _mm256_loadu_pd(v + i),
                                     _mm256_mul_pd(v1b2, _mm256_mul_pd(gv, gv)));
        _mm256_storeu_pd(m + i, mv);
        _mm256_storeu_pd(v + i, vv);
        const __m256d mhat = _mm256_mul_pd(mv, vbc1);
        const __m256d denom = _mm256_add_pd(_mm256_sqrt_pd(_mm256_mul_pd(vv, vbc2)), veps);
        const __m256d pv = _mm256_loadu_pd(p + i);
        const __m256d step = _mm256_fmadd_pd(vwd, pv, _mm256_div_pd(mhat, denom));
        _mm256_storeu_pd(p + i, _mm256_fnmadd_pd(vlr, step, pv));
    }
    for (; i < n; ++i) {
        m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
        v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
        p[i] -= lr * (m[i] * bc1 / (std::sqrt(v[i] * bc2) + eps) + wd * p[i]);
    }
}

}  // namespace disfas::kernels::avx2

#endif  // DISFAS_HAVE_AVX2_KERNELS
