// AVX2+FMA kernels. This translation unit is compiled with -mavx2 -mfma and
// must only be reached through the dispatch table after a CPUID check.
//
// Elementwise kernels avoid FMA so they stay bitwise identical to the scalar
// reference; sgemm/sum/dot use FMA and lane accumulators and therefore only
// match the reference to rounding error.

#include "aigan/kernels.hpp"

#if defined(__AVX2__) && defined(__FMA__)

#include <immintrin.h>

#include <cmath>
#include <cstring>

namespace aigan::kern {
namespace {

constexpr int kMR = 6; // rows per GEMM microtile
// 16 columns = two ymm accumulator lanes per row

inline void microtile_6x16(int k, int n, const float* a, int i, const float* b, int j,
                           float* c, bool accumulate) {
    __m256 acc[kMR][2];
    for (int r = 0; r < kMR; ++r) {
        if (accumulate) {
            acc[r][0] = _mm256_loadu_ps(c + static_cast<std::int64_t>(i + r) * n + j);
            acc[r][1] = _mm256_loadu_ps(c + static_cast<std::int64_t>(i + r) * n + j + 8);
        } else {
            acc[r][0] = _mm256_setzero_ps();
            acc[r][1] = _mm256_setzero_ps();
        }
    }
    for (int kk = 0; kk < k; ++kk) {
        const float* brow = b + static_cast<std::int64_t>(kk) * n + j;
        const __m256 b0 = _mm256_loadu_ps(brow);
        const __m256 b1 = _mm256_loadu_ps(brow + 8);
        for (int r = 0; r < kMR; ++r) {
            const __m256 av = _mm256_set1_ps(a[static_cast<std::int64_t>(i + r) * k + kk]);
            acc[r][0] = _mm256_fmadd_ps(av, b0, acc[r][0]);
            acc[r][1] = _mm256_fmadd_ps(av, b1, acc[r][1]);
        }
    }
    for (int r = 0; r < kMR; ++r) {
        _mm256_storeu_ps(c + static_cast<std::int64_t>(i + r) * n + j, acc[r][0]);
        _mm256_storeu_ps(c + static_cast<std::int64_t>(i + r) * n + j + 8, acc[r][1]);
    }
}

inline void row_block_w8(int k, int n, const float* a, int i, const float* b, int j,
                         float* c, bool accumulate) {
    __m256 acc = accumulate ? _mm256_loadu_ps(c + static_cast<std::int64_t>(i) * n + j)
                            : _mm256_setzero_ps();
    for (int kk = 0; kk < k; ++kk) {
        const __m256 av = _mm256_set1_ps(a[static_cast<std::int64_t>(i) * k + kk]);
        const __m256 bv = _mm256_loadu_ps(b + static_cast<std::int64_t>(kk) * n + j);
        acc = _mm256_fmadd_ps(av, bv, acc);
    }
    _mm256_storeu_ps(c + static_cast<std::int64_t>(i) * n + j, acc);
}

inline void row_scalar_tail(int k, int n, const float* a, int i, const float* b, int j0,
                            float* c, bool accumulate) {
    for (int j = j0; j < n; ++j) {
        float s = accumulate ? c[static_cast<std::int64_t>(i) * n + j] : 0.0f;
        for (int kk = 0; kk < k; ++kk)
            s += a[static_cast<std::int64_t>(i) * k + kk] *
                 b[static_cast<std::int64_t>(kk) * n + j];
        c[static_cast<std::int64_t>(i) * n + j] = s;
    }
}

void sgemm_avx2(int m, int n, int k, const float* a, const float* b, float* c,
                bool accumulate) {
    const int n16 = n - n % 16;
    int i = 0;
    for (; i + kMR <= m; i += kMR) {
        int j = 0;
        for (; j < n16; j += 16) microtile_6x16(k, n, a, i, b, j, c, accumulate);
        for (int r = 0; r < kMR; ++r) {
            int jj = j;
            if (jj + 8 <= n) {
                row_block_w8(k, n, a, i + r, b, jj, c, accumulate);
                jj += 8;
            }
            row_scalar_tail(k, n, a, i + r, b, jj, c, accumulate);
        }
    }
    for (; i < m; ++i) {
        int j = 0;
        for (; j + 8 <= n; j += 8) row_block_w8(k, n, a, i, b, j, c, accumulate);
        row_scalar_tail(k, n, a, i, b, j, c, accumulate);
    }
}

// ---- elementwise ----

void add_avx2(const float* a, const float* b, float* y, std::int64_t n) {
    std::int64_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(y + i, _mm256_add_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
    for (; i < n; ++i) y[i] = a[i] + b[i];
}

void sub_avx2(const float* a, const float* b, float* y, std::int64_t n) {
    std::int64_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(y + i, _mm256_sub_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
    for (; i < n; ++i) y[i] = a[i] - b[i];
}

void mul_avx2(const float* a, const float* b, float* y, std::int64_t n) {
    std::int64_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(y + i, _mm256_mul_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
    for (; i < n; ++i) y[i] = a[i] * b[i];
}

void scale_avx2(const float* x, float s, float* y, std::int64_t n) {
    const __m256 sv = _mm256_set1_ps(s);
    std::int64_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(y + i, _mm256_mul_ps(sv, _mm256_loadu_ps(x + i)));
    for (; i < n; ++i) y[i] = s * x[i];
}

// two roundings (mul then add), matching the scalar reference
void axpy_avx2(float a, const float* x, float* y, std::int64_t n) {
    const __m256 av = _mm256_set1_ps(a);
    std::int64_t i = 0;
    for (; i + 8 <= n; i += 8) {
        const __m256 prod = _mm256_mul_ps(av, _mm256_loadu_ps(x + i));
        _mm256_storeu_ps(y + i, _mm256_add_ps(_mm256_loadu_ps(y + i), prod));
    }
    for (; i < n; ++i) y[i] = y[i] + a * x[i];
}

void relu_avx2(const float* x, float* y, std::int64_t n) {
    const __m256 zero = _mm256_setzero_ps();
    std::int64_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(y + i, _mm256_max_ps(_mm256_loadu_ps(x + i), zero));
    for (; i < n; ++i) y[i] = x[i] > 0.0f ? x[i] : 0.0f;
}

void relu_bwd_avx2(const float* x, const float* gy, float* gx, std::int64_t n) {
    const __m256 zero = _mm256_setzero_ps();
    std::int64_t i = 0;
    for (; i + 8 <= n; i += 8) {
        const __m256 mask = _mm256_cmp_ps(_mm256_loadu_ps(x + i), zero, _CMP_GT_OQ);
        const __m256 g = _mm256_and_ps(mask, _mm256_loadu_ps(gy + i));
        _mm256_storeu_ps(gx + i, _mm256_add_ps(_mm256_loadu_ps(gx + i), g));
    }
    for (; i < n; ++i)
        if (x[i] > 0.0f) gx[i] += gy[i];
}

void leaky_avx2(const float* x, float slope, float* y, std::int64_t n) {
    const __m256 sv = _mm256_set1_ps(slope);
    const __m256 zero = _mm256_setzero_ps();
    std::int64_t i = 0;
    for (; i + 8 <= n; i += 8) {
        const __m256 xv = _mm256_loadu_ps(x + i);
        const __m256 mask = _mm256_cmp_ps(xv, zero, _CMP_GT_OQ);
        _mm256_storeu_ps(y + i, _mm256_blendv_ps(_mm256_mul_ps(sv, xv), xv, mask));
    }
    for (; i < n; ++i) y[i] = x[i] > 0.0f ? x[i] : slope * x[i];
}

void leaky_bwd_avx2(const float* x, float slope, const float* gy, float* gx,
                    std::int64_t n) {
    const __m256 sv = _mm256_set1_ps(slope);
    const __m256 zero = _mm256_setzero_ps();
    std::int64_t i = 0;
    for (; i + 8 <= n; i += 8) {
        const __m256 gv = _mm256_loadu_ps(gy + i);
        const __m256 mask = _mm256_cmp_ps(_mm256_loadu_ps(x + i), zero, _CMP_GT_OQ);
        const __m256 g = _mm256_blendv_ps(_mm256_mul_ps(sv, gv), gv, mask);
        _mm256_storeu_ps(gx + i, _mm256_add_ps(_mm256_loadu_ps(gx + i), g));
    }
    for (; i < n; ++i) gx[i] += x[i] > 0.0f ? gy[i] : slope * gy[i];
}

void clamp_avx2(const float* x, float lo, float hi, float* y, std::int64_t n) {
    const __m256 lov = _mm256_set1_ps(lo);
    const __m256 hiv = _mm256_set1_ps(hi);
    std::int64_t i = 0;
    for (; i + 8 <= n; i += 8) {
        __m256 v = _mm256_loadu_ps(x + i);
        v = _mm256_max_ps(v, lov);
        v = _mm256_min_ps(v, hiv);
        _mm256_storeu_ps(y + i, v);
    }
    for (; i < n; ++i) {
        float v = x[i];
        v = v > lo ? v : lo;
        v = v < hi ? v : hi;
        y[i] = v;
    }
}

void clamp_bwd_avx2(const float* x, float lo, float hi, const float* gy, float* gx,
                    std::int64_t n) {
    const __m256 lov = _mm256_set1_ps(lo);
    const __m256 hiv = _mm256_set1_ps(hi);
    std::int64_t i = 0;
    for (; i + 8 <= n; i += 8) {
        const __m256 xv = _mm256_loadu_ps(x + i);
        const __m256 in = _mm256_and_ps(_mm256_cmp_ps(xv, lov, _CMP_GE_OQ),
                                        _mm256_cmp_ps(xv, hiv, _CMP_LE_OQ));
        const __m256 g = _mm256_and_ps(in, _mm256_loadu_ps(gy + i));
        _mm256_storeu_ps(gx + i, _mm256_add_ps(_mm256_loadu_ps(gx + i), g));
    }
    for (; i < n; ++i)
        if (x[i] >= lo && x[i] <= hi) gx[i] += gy[i];
}

// ---- reductions ----

float sum_avx2(const float* x, std::int64_t n) {
    __m256 acc = _mm256_setzero_ps();
    std::int64_t i = 0;
    for (; i + 8 <= n; i += 8) acc = _mm256_add_ps(acc, _mm256_loadu_ps(x + i));
    alignas(32) float lanes[8];
    _mm256_store_ps(lanes, acc);
    float s = ((lanes[0] + lanes[1]) + (lanes[2] + lanes[3])) +
              ((lanes[4] + lanes[5]) + (lanes[6] + lanes[7]));
    for (; i < n; ++i) s += x[i];
    return s;
}

float dot_avx2(const float* a, const float* b, std::int64_t n) {
    __m256 acc = _mm256_setzero_ps();
    std::int64_t i = 0;
    for (; i + 8 <= n; i += 8)
        acc = _mm256_fmadd_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i), acc);
    alignas(32) float lanes[8];
    _mm256_store_ps(lanes, acc);
    float s = ((lanes[0] + lanes[1]) + (lanes[2] + lanes[3])) +
              ((lanes[4] + lanes[5]) + (lanes[6] + lanes[7]));
    for (; i < n; ++i) s += a[i] * b[i];
    return s;
}

float max_abs_avx2(const float* x, std::int64_t n) {
    const __m256 signmask = _mm256_set1_ps(-0.0f);
    __m256 acc = _mm256_setzero_ps();
    std::int64_t i = 0;
    for (; i + 8 <= n; i += 8)
        acc = _mm256_max_ps(acc, _mm256_andnot_ps(signmask, _mm256_loadu_ps(x + i)));
    alignas(32) float lanes[8];
    _mm256_store_ps(lanes, acc);
    float m = 0.0f;
    for (float v : lanes)
        if (v > m) m = v;
    for (; i < n; ++i) {
        const float v = std::fabs(x[i]);
        if (v > m) m = v;
    }
    return m;
}

// ---- attack / optimizer steps ----

void sign_step_avx2(const float* x, const float* g, float step, float* y,
                    std::int64_t n) {
    const __m256 zero = _mm256_setzero_ps();
    const __m256 one = _mm256_set1_ps(1.0f);
    const __m256 none = _mm256_set1_ps(-1.0f);
    const __m256 sv = _mm256_set1_ps(step);
    std::int64_t i = 0;
    for (; i + 8 <= n; i += 8) {
        const __m256 gv = _mm256_loadu_ps(g + i);
        __m256 s = _mm256_and_ps(_mm256_cmp_ps(gv, zero, _CMP_GT_OQ), one);
        s = _mm256_blendv_ps(s, none, _mm256_cmp_ps(gv, zero, _CMP_LT_OQ));
        const __m256 d = _mm256_mul_ps(sv, s);
        _mm256_storeu_ps(y + i, _mm256_add_ps(_mm256_loadu_ps(x + i), d));
    }
    for (; i < n; ++i) {
        const float s = g[i] > 0.0f ? 1.0f : (g[i] < 0.0f ? -1.0f : 0.0f);
        y[i] = x[i] + step * s;
    }
}

void project_box_avx2(const float* v, const float* c, float eps, float lo, float hi,
                      float* y, std::int64_t n) {
    const __m256 ev = _mm256_set1_ps(eps);
    const __m256 lov = _mm256_set1_ps(lo);
    const __m256 hiv = _mm256_set1_ps(hi);
    std::int64_t i = 0;
    for (; i + 8 <= n; i += 8) {
        const __m256 cv = _mm256_loadu_ps(c + i);
        const __m256 l = _mm256_max_ps(_mm256_sub_ps(cv, ev), lov);
        const __m256 h = _mm256_min_ps(_mm256_add_ps(cv, ev), hiv);
        __m256 xv = _mm256_loadu_ps(v + i);
        xv = _mm256_max_ps(xv, l);
        xv = _mm256_min_ps(xv, h);
        _mm256_storeu_ps(y + i, xv);
    }
    for (; i < n; ++i) {
        float l = c[i] - eps;
        float h = c[i] + eps;
        l = l > lo ? l : lo;
        h = h < hi ? h : hi;
        float x = v[i];
        x = x > l ? x : l;
        x = x < h ? x : h;
        y[i] = x;
    }
}

void adam_step_avx2(float* p, const float* g, float* m, float* v, float lr, float beta1,
                    float beta2, float eps, float mhat_c, float vhat_c, std::int64_t n) {
    const __m256 b1 = _mm256_set1_ps(beta1);
    const __m256 b2 = _mm256_set1_ps(beta2);
    const __m256 ob1 = _mm256_set1_ps(1.0f - beta1);
    const __m256 ob2 = _mm256_set1_ps(1.0f - beta2);
    const __m256 lrv = _mm256_set1_ps(lr);
    const __m256 ev = _mm256_set1_ps(eps);
    const __m256 mc = _mm256_set1_ps(mhat_c);
    const __m256 vc = _mm256_set1_ps(vhat_c);
    std::int64_t i = 0;
    for (; i + 8 <= n; i += 8) {
        const __m256 gv = _mm256_loadu_ps(g + i);
        __m256 mv = _mm256_loadu_ps(m + i);
        __m256 vv = _mm256_loadu_ps(v + i);
        mv = _mm256_add_ps(_mm256_mul_ps(b1, mv), _mm256_mul_ps(ob1, gv));
        vv = _mm256_add_ps(_mm256_mul_ps(b2, vv), _mm256_mul_ps(ob2, _mm256_mul_ps(gv, gv)));
        _mm256_storeu_ps(m + i, mv);
        _mm256_storeu_ps(v + i, vv);
        const __m256 mhat = _mm256_mul_ps(mv, mc);
        const __m256 vhat = _mm256_mul_ps(vv, vc);
        const __m256 den = _mm256_add_ps(_mm256_sqrt_ps(vhat), ev);
        const __m256 upd = _mm256_mul_ps(lrv, _mm256_div_ps(mhat, den));
        _mm256_storeu_ps(p + i, _mm256_sub_ps(_mm256_loadu_ps(p + i), upd));
    }
    for (; i < n; ++i) {
        m[i] = beta1 * m[i] + (1.0f - beta1) * g[i];
        v[i] = beta2 * v[i] + (1.0f - beta2) * (g[i] * g[i]);
        const float mhat = m[i] * mhat_c;
        const float vhat = v[i] * vhat_c;
        p[i] = p[i] - lr * (mhat / (std::sqrt(vhat) + eps));
    }
}

} // namespace

const Table* avx2_table() {
    static const Table t = [] {
        Table x = scalar_table(); // tanh/sigmoid stay scalar
        x.sgemm = sgemm_avx2;
        x.add = add_avx2;
        x.sub = sub_avx2;
        x.mul = mul_avx2;
        x.scale = scale_avx2;
        x.axpy = axpy_avx2;
        x.relu = relu_avx2;
        x.relu_bwd = relu_bwd_avx2;
        x.leaky_relu = leaky_avx2;
        x.leaky_relu_bwd = leaky_bwd_avx2;
        x.clamp = clamp_avx2;
        x.clamp_bwd = clamp_bwd_avx2;
        x.sum = sum_avx2;
        x.dot = dot_avx2;
        x.max_abs = max_abs_avx2;
        x.sign_step = sign_step_avx2;
        x.project_box = project_box_avx2;
        x.adam_step = adam_step_avx2;
        return x;
    }();
    return &t;
}

} // namespace aigan::kern

#else // no AVX2 at compile time

namespace aigan::kern {
const Table* avx2_table() { return nullptr; }
} // namespace aigan::kern

#endif
