#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "disfas/kernels.hpp"
#include "disfas/rng.hpp"

using namespace disfas;

namespace {

template <typename T>
std::vector<T> random_vec(Rng& rng, size_t n, double lo = -1.0, double hi = 1.0) {
    std::vector<T> v(n);
    for (auto& x : v) x = static_cast<T>(rng.uniform(lo, hi));
    return v;
}

// Matrix element through the optional transpose.
template <typename T>
T mat_at(const std::vector<T>& m, bool trans, int rows_logical, int i, int p, int ld) {
    (void)rows_logical;
    return trans ? m[static_cast<size_t>(p * ld + i)] : m[static_cast<size_t>(i * ld + p)];
}

// Textbook triple loop, independent of the production kernels.
template <typename T>
void gemm_oracle(bool ta, bool tb, int m, int n, int k, T alpha, const std::vector<T>& a, int lda,
                 const std::vector<T>& b, int ldb, T beta, std::vector<T>& c, int ldc) {
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) {
            double acc = 0.0;
            for (int p = 0; p < k; ++p) {
                const double av = ta ? a[static_cast<size_t>(p * lda + i)] : a[static_cast<size_t>(i * lda + p)];
                const double bv = tb ? b[static_cast<size_t>(j * ldb + p)] : b[static_cast<size_t>(p * ldb + j)];
                acc += av * bv;
            }
            T& out = c[static_cast<size_t>(i * ldc + j)];
            out = (beta == T(0)) ? static_cast<T>(alpha * acc)
                                 : static_cast<T>(alpha * acc + beta * out);
        }
    }
}

}  // namespace

TEST_CASE("gemm matches a naive oracle across shapes and transposes") {
    Rng rng(42);
    for (int trial = 0; trial < 60; ++trial) {
        const int m = 1 + static_cast<int>(rng.uniform_int(40));
        const int n = 1 + static_cast<int>(rng.uniform_int(70));
        const int k = 1 + static_cast<int>(rng.uniform_int(50));
        const bool ta = rng.uniform() < 0.5;
        const bool tb = rng.uniform() < 0.5;
        const float alpha = static_cast<float>(rng.uniform(-2.0, 2.0));
        const float beta = (trial % 3 == 0) ? 0.0f : static_cast<float>(rng.uniform(-1.0, 1.0));
        const int lda = ta ? m : k, a_rows = ta ? k : m;
        const int ldb = tb ? k : n, b_rows = tb ? n : k;

        auto a = random_vec<float>(rng, static_cast<size_t>(a_rows) * lda);
        auto b = random_vec<float>(rng, static_cast<size_t>(b_rows) * ldb);
        auto c0 = random_vec<float>(rng, static_cast<size_t>(m) * n);
        auto c1 = c0;
        auto c2 = c0;

        gemm_oracle(ta, tb, m, n, k, alpha, a, lda, b, ldb, beta, c0, n);
        kernels::scalar::gemm(ta, tb, m, n, k, alpha, a.data(), lda, b.data(), ldb, beta, c1.data(), n);
        kernels::gemm(ta, tb, m, n, k, alpha, a.data(), lda, b.data(), ldb, beta, c2.data(), n);

        for (size_t i = 0; i < c0.size(); ++i) {
            CHECK(c1[i] == doctest::Approx(c0[i]).epsilon(1e-4));
            CHECK(c2[i] == doctest::Approx(c0[i]).epsilon(1e-4));
        }
    }
}

#if defined(DISFAS_HAVE_AVX2_KERNELS)
TEST_CASE("avx2 kernels agree with the scalar references") {
    if (kernels::active_backend() != kernels::Backend::avx2) {
        MESSAGE("avx2 unavailable on this CPU; dispatch equivalence not exercised");
        return;
    }
    Rng rng(7);

    SUBCASE("gemm float and double") {
        for (int trial = 0; trial < 40; ++trial) {
            const int m = 1 + static_cast<int>(rng.uniform_int(33));
            const int n = 1 + static_cast<int>(rng.uniform_int(65));
            const int k = 1 + static_cast<int>(rng.uniform_int(64));
            const bool ta = rng.uniform() < 0.5;
            const bool tb = rng.uniform() < 0.5;
            const int lda = ta ? m : k, a_rows = ta ? k : m;
            const int ldb = tb ? k : n, b_rows = tb ? n : k;
            {
                auto a = random_vec<float>(rng, static_cast<size_t>(a_rows) * lda);
                auto b = random_vec<float>(rng, static_cast<size_t>(b_rows) * ldb);
                std::vector<float> cs(static_cast<size_t>(m) * n), cv = cs;
                kernels::scalar::gemm(ta, tb, m, n, k, 1.5f, a.data(), lda, b.data(), ldb, 0.0f,
                                      cs.data(), n);
                kernels::avx2::gemm(ta, tb, m, n, k, 1.5f, a.data(), lda, b.data(), ldb, 0.0f,
                                    cv.data(), n);
                for (size_t i = 0; i < cs.size(); ++i) {
                    CHECK(cv[i] == doctest::Approx(cs[i]).epsilon(2e-5));
                }
            }
            {
                auto a = random_vec<double>(rng, static_cast<size_t>(a_rows) * lda);
                auto b = random_vec<double>(rng, static_cast<size_t>(b_rows) * ldb);
                std::vector<double> cs(static_cast<size_t>(m) * n), cv = cs;
                kernels::scalar::gemm(ta, tb, m, n, k, 1.0, a.data(), lda, b.data(), ldb, 0.0,
                                      cs.data(), n);
                kernels::avx2::gemm(ta, tb, m, n, k, 1.0, a.data(), lda, b.data(), ldb, 0.0,
                                    cv.data(), n);
                for (size_t i = 0; i < cs.size(); ++i) {
                    CHECK(cv[i] == doctest::Approx(cs[i]).epsilon(1e-12));
                }
            }
        }
    }

    SUBCASE("elementwise and reductions") {
        for (int trial = 0; trial < 30; ++trial) {
            const size_t n = 1 + rng.uniform_int(300);
            auto x = random_vec<float>(rng, n);
            auto y = random_vec<float>(rng, n);

            CHECK(kernels::avx2::dot(n, x.data(), y.data()) ==
                  doctest::Approx(kernels::scalar::dot(n, x.data(), y.data())).epsilon(1e-10));
            CHECK(kernels::avx2::sum(n, x.data()) ==
                  doctest::Approx(kernels::scalar::sum(n, x.data())).epsilon(1e-10));
            CHECK(kernels::avx2::sumsq(n, x.data()) ==
                  doctest::Approx(kernels::scalar::sumsq(n, x.data())).epsilon(1e-10));
            CHECK(kernels::avx2::sumsqdiff(n, x.data(), y.data()) ==
                  doctest::Approx(kernels::scalar::sumsqdiff(n, x.data(), y.data())).epsilon(1e-10));

            auto ys = y, yv = y;
            kernels::scalar::axpy(n, 0.37f, x.data(), ys.data());
            kernels::avx2::axpy(n, 0.37f, x.data(), yv.data());
            for (size_t i = 0; i < n; ++i) CHECK(yv[i] == doctest::Approx(ys[i]).epsilon(1e-6));

            std::vector<float> rs(n), rv(n);
            kernels::scalar::relu(n, x.data(), rs.data());
            kernels::avx2::relu(n, x.data(), rv.data());
            for (size_t i = 0; i < n; ++i) CHECK(rv[i] == rs[i]);

            kernels::scalar::relu_backward(n, x.data(), y.data(), rs.data());
            kernels::avx2::relu_backward(n, x.data(), y.data(), rv.data());
            for (size_t i = 0; i < n; ++i) CHECK(rv[i] == rs[i]);
        }
    }

    SUBCASE("adamw update") {
        for (int trial = 0; trial < 10; ++trial) {
            const size_t n = 1 + rng.uniform_int(200);
            auto p = random_vec<float>(rng, n);
            auto g = random_vec<float>(rng, n);
            auto m = random_vec<float>(rng, n, 0.0, 0.1);
            auto v = random_vec<float>(rng, n, 0.0, 0.1);
            auto ps = p, ms = m, vs = v;
            auto pv = p, mv = m, vv = v;
            kernels::scalar::adamw_update(n, ps.data(), g.data(), ms.data(), vs.data(), 1e-3f, 0.9f,
                                          0.999f, 1e-8f, 1e-2f, 1.1f, 1.05f);
            kernels::avx2::adamw_update(n, pv.data(), g.data(), mv.data(), vv.data(), 1e-3f, 0.9f,
                                        0.999f, 1e-8f, 1e-2f, 1.1f, 1.05f);
            for (size_t i = 0; i < n; ++i) {
                CHECK(pv[i] == doctest::Approx(ps[i]).epsilon(1e-5));
                CHECK(mv[i] == doctest::Approx(ms[i]).epsilon(1e-5));
                CHECK(vv[i] == doctest::Approx(vs[i]).epsilon(1e-5));
            }
        }
    }
}
#endif

TEST_CASE("dispatch honors the DISFAS_KERNELS override") {
    // The backend is latched per process; here we only check it reports a
    // valid name and the dispatched gemm works.
    const auto b = kernels::active_backend();
    CHECK((b == kernels::Backend::scalar || b == kernels::Backend::avx2));
    const float a[2] = {1.0f, 2.0f};
    const float x[2] = {3.0f, 4.0f};
    float c[1] = {0.0f};
    kernels::gemm(false, false, 1, 1, 2, 1.0f, a, 2, x, 1, 0.0f, c, 1);
    CHECK(c[0] == doctest::Approx(11.0f));
}
