// Scalar reference kernels. These are the semantic ground truth: the AVX2
// variants are tested for equivalence against them, and they are the fallback
// on machines without AVX2.

#include <cmath>
#include <cstring>

#include "aigan/kernels.hpp"

namespace aigan::kern {
namespace {

void sgemm_ref(int m, int n, int k, const float* a, const float* b, float* c,
               bool accumulate) {
    if (!accumulate) std::memset(c, 0, sizeof(float) * static_cast<std::size_t>(m) * n);
    for (int i = 0; i < m; ++i) {
        const float* arow = a + static_cast<std::int64_t>(i) * k;
        float* crow = c + static_cast<std::int64_t>(i) * n;
        for (int kk = 0; kk < k; ++kk) {
            const float aik = arow[kk];
            if (aik == 0.0f) continue;
            const float* brow = b + static_cast<std::int64_t>(kk) * n;
            for (int j = 0; j < n; ++j) crow[j] += aik * brow[j];
        }
    }
}

void add_ref(const float* a, const float* b, float* y, std::int64_t n) {
    for (std::int64_t i = 0; i < n; ++i) y[i] = a[i] + b[i];
}

void sub_ref(const float* a, const float* b, float* y, std::int64_t n) {
    for (std::int64_t i = 0; i < n; ++i) y[i] = a[i] - b[i];
}

void mul_ref(const float* a, const float* b, float* y, std::int64_t n) {
    for (std::int64_t i = 0; i < n; ++i) y[i] = a[i] * b[i];
}

void scale_ref(const float* x, float s, float* y, std::int64_t n) {
    for (std::int64_t i = 0; i < n; ++i) y[i] = s * x[i];
}

void axpy_ref(float a, const float* x, float* y, std::int64_t n) {
    for (std::int64_t i = 0; i < n; ++i) y[i] = y[i] + a * x[i];
}

void relu_ref(const float* x, float* y, std::int64_t n) {
    for (std::int64_t i = 0; i < n; ++i) y[i] = x[i] > 0.0f ? x[i] : 0.0f;
}

// subgradient 0 at x == 0
void relu_bwd_ref(const float* x, const float* gy, float* gx, std::int64_t n) {
    for (std::int64_t i = 0; i < n; ++i)
        if (x[i] > 0.0f) gx[i] += gy[i];
}

void leaky_ref(const float* x, float slope, float* y, std::int64_t n) {
    for (std::int64_t i = 0; i < n; ++i) y[i] = x[i] > 0.0f ? x[i] : slope * x[i];
}

void leaky_bwd_ref(const float* x, float slope, const float* gy, float* gx,
                   std::int64_t n) {
    for (std::int64_t i = 0; i < n; ++i) gx[i] += x[i] > 0.0f ? gy[i] : slope * gy[i];
}

void clamp_ref(const float* x, float lo, float hi, float* y, std::int64_t n) {
    for (std::int64_t i = 0; i < n; ++i) {
        float v = x[i];
        v = v > lo ? v : lo;
        v = v < hi ? v : hi;
        y[i] = v;
    }
}

// zero gradient outside [lo, hi]; boundary points pass gradient through
void clamp_bwd_ref(const float* x, float lo, float hi, const float* gy, float* gx,
                   std::int64_t n) {
    for (std::int64_t i = 0; i < n; ++i)
        if (x[i] >= lo && x[i] <= hi) gx[i] += gy[i];
}

void tanh_ref(const float* x, float* y, std::int64_t n) {
    for (std::int64_t i = 0; i < n; ++i) y[i] = std::tanh(x[i]);
}

void sigmoid_ref(const float* x, float* y, std::int64_t n) {
    for (std::int64_t i = 0; i < n; ++i) y[i] = 1.0f / (1.0f + std::exp(-x[i]));
}

float sum_ref(const float* x, std::int64_t n) {
    float s = 0.0f;
    for (std::int64_t i = 0; i < n; ++i) s += x[i];
    return s;
}

float dot_ref(const float* a, const float* b, std::int64_t n) {
    float s = 0.0f;
    for (std::int64_t i = 0; i < n; ++i) s += a[i] * b[i];
    return s;
}

float max_abs_ref(const float* x, std::int64_t n) {
    float m = 0.0f;
    for (std::int64_t i = 0; i < n; ++i) {
        const float v = std::fabs(x[i]);
        if (v > m) m = v;
    }
    return m;
}

void sign_step_ref(const float* x, const float* g, float step, float* y,
                   std::int64_t n) {
    for (std::int64_t i = 0; i < n; ++i) {
        const float s = g[i] > 0.0f ? 1.0f : (g[i] < 0.0f ? -1.0f : 0.0f);
        y[i] = x[i] + step * s;
    }
}

void project_box_ref(const float* v, const float* c, float eps, float lo, float hi,
                     float* y, std::int64_t n) {
    for (std::int64_t i = 0; i < n; ++i) {
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

void adam_step_ref(float* p, const float* g, float* m, float* v, float lr, float beta1,
                   float beta2, float eps, float mhat_c, float vhat_c, std::int64_t n) {
    for (std::int64_t i = 0; i < n; ++i) {
        m[i] = beta1 * m[i] + (1.0f - beta1) * g[i];
        v[i] = beta2 * v[i] + (1.0f - beta2) * (g[i] * g[i]);
        const float mhat = m[i] * mhat_c;
        const float vhat = v[i] * vhat_c;
        p[i] = p[i] - lr * (mhat / (std::sqrt(vhat) + eps));
    }
}

} // namespace

const Table& scalar_table() {
    static const Table t = {
        sgemm_ref,    add_ref,       sub_ref,        mul_ref,       scale_ref,
        axpy_ref,     relu_ref,      relu_bwd_ref,   leaky_ref,     leaky_bwd_ref,
        clamp_ref,    clamp_bwd_ref, tanh_ref,       sigmoid_ref,   sum_ref,
        dot_ref,      max_abs_ref,   sign_step_ref,  project_box_ref, adam_step_ref,
    };
    return t;
}

} // namespace aigan::kern
