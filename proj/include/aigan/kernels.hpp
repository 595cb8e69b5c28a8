#pragma once

#include <cstdint>
#include <string_view>

namespace aigan::kern {

// Flat-array compute kernels behind every tensor op. Two implementations
// exist: portable scalar reference kernels and AVX2+FMA variants. The active
// table is chosen once at startup from CPUID (override with select() or the
// AIGAN_KERNELS env var: auto|scalar|avx2).
//
// Contracts shared by both implementations:
//   - all matrices are row-major and contiguous (sgemm: lda=k, ldb=n, ldc=n)
//   - *_bwd kernels accumulate into gx (never overwrite)
//   - elementwise kernels are bitwise identical between variants (no FMA);
//     sgemm/sum/dot reassociate and only agree to rounding error
struct Table {
    void (*sgemm)(int m, int n, int k, const float* a, const float* b, float* c,
                  bool accumulate);

    void (*add)(const float* a, const float* b, float* y, std::int64_t n);
    void (*sub)(const float* a, const float* b, float* y, std::int64_t n);
    void (*mul)(const float* a, const float* b, float* y, std::int64_t n);
    void (*scale)(const float* x, float s, float* y, std::int64_t n);
    void (*axpy)(float a, const float* x, float* y, std::int64_t n); // y += a*x

    void (*relu)(const float* x, float* y, std::int64_t n);
    void (*relu_bwd)(const float* x, const float* gy, float* gx, std::int64_t n);
    void (*leaky_relu)(const float* x, float slope, float* y, std::int64_t n);
    void (*leaky_relu_bwd)(const float* x, float slope, const float* gy, float* gx,
                           std::int64_t n);
    void (*clamp)(const float* x, float lo, float hi, float* y, std::int64_t n);
    void (*clamp_bwd)(const float* x, float lo, float hi, const float* gy, float* gx,
                      std::int64_t n);
    void (*tanh)(const float* x, float* y, std::int64_t n);
    void (*sigmoid)(const float* x, float* y, std::int64_t n);

    float (*sum)(const float* x, std::int64_t n);
    float (*dot)(const float* a, const float* b, std::int64_t n);
    float (*max_abs)(const float* x, std::int64_t n);

    // y = x + step*sign(g), sign(0) = 0
    void (*sign_step)(const float* x, const float* g, float step, float* y,
                      std::int64_t n);
    // y = min(max(v, max(c-eps, lo)), min(c+eps, hi))
    void (*project_box)(const float* v, const float* c, float eps, float lo, float hi,
                        float* y, std::int64_t n);
    // bias-corrected adam; mhat_c = 1/(1-b1^t), vhat_c = 1/(1-b2^t)
    void (*adam_step)(float* p, const float* g, float* m, float* v, float lr,
                      float beta1, float beta2, float eps, float mhat_c, float vhat_c,
                      std::int64_t n);
};

const Table& active();
std::string_view active_name();           // "scalar" or "avx2"
bool avx2_available();
void select(std::string_view name);       // "auto" | "scalar" | "avx2"

const Table& scalar_table();              // always available, used by equivalence tests
const Table* avx2_table();                // nullptr when unsupported

} // namespace aigan::kern
