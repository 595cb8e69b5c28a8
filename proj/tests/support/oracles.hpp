#pragma once

// Independent brute-force oracles for the numeric core. Everything here is
// written as plainly as possible (nested loops, double accumulation, no
// kernel calls) so it stays independent of the implementation it checks.

#include <cmath>
#include <vector>

#include "aigan/tensor.hpp"

namespace oracle {

// triple-nested-loop matrix product
inline aigan::Tensor matmul(const aigan::Tensor& a, const aigan::Tensor& b) {
    const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
    aigan::Tensor c({m, n});
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) {
            double s = 0.0;
            for (int kk = 0; kk < k; ++kk)
                s += static_cast<double>(a[i * k + kk]) * static_cast<double>(b[kk * n + j]);
            c[i * n + j] = static_cast<float>(s);
        }
    return c;
}

// direct 6-nested-loop cross-correlation
inline aigan::Tensor conv2d(const aigan::Tensor& x, const aigan::Tensor& w, int stride,
                            int pad) {
    const int n = x.dim(0), c = x.dim(1), h = x.dim(2), win = x.dim(3);
    const int f = w.dim(0), kh = w.dim(2), kw = w.dim(3);
    const int oh = (h + 2 * pad - kh) / stride + 1;
    const int ow = (win + 2 * pad - kw) / stride + 1;
    aigan::Tensor out({n, f, oh, ow});
    for (int s = 0; s < n; ++s)
        for (int fo = 0; fo < f; ++fo)
            for (int i = 0; i < oh; ++i)
                for (int j = 0; j < ow; ++j) {
                    double acc = 0.0;
                    for (int ch = 0; ch < c; ++ch)
                        for (int ki = 0; ki < kh; ++ki)
                            for (int kj = 0; kj < kw; ++kj) {
                                const int si = i * stride - pad + ki;
                                const int sj = j * stride - pad + kj;
                                if (si < 0 || si >= h || sj < 0 || sj >= win) continue;
                                acc += static_cast<double>(
                                           x[((s * c + ch) * h + si) * win + sj]) *
                                       static_cast<double>(
                                           w[((fo * c + ch) * kh + ki) * kw + kj]);
                            }
                    out[((s * f + fo) * oh + i) * ow + j] = static_cast<float>(acc);
                }
    return out;
}

// per-row softmax cross entropy, mean over the batch
inline double softmax_ce(const aigan::Tensor& logits, const std::vector<int>& labels) {
    const int n = logits.dim(0), k = logits.dim(1);
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
        double mx = logits[i * k];
        for (int j = 1; j < k; ++j) mx = std::max(mx, static_cast<double>(logits[i * k + j]));
        double denom = 0.0;
        for (int j = 0; j < k; ++j) denom += std::exp(static_cast<double>(logits[i * k + j]) - mx);
        total -= (static_cast<double>(logits[i * k + labels[(std::size_t)i]]) - mx -
                  std::log(denom));
    }
    return total / n;
}

// binary cross entropy on sigmoid(s) toward a constant 0/1 label, mean
inline double bce_logits(const aigan::Tensor& s, double target) {
    double total = 0.0;
    for (std::int64_t i = 0; i < s.numel(); ++i) {
        const double sig = 1.0 / (1.0 + std::exp(-static_cast<double>(s[i])));
        total -= target * std::log(sig) + (1.0 - target) * std::log(1.0 - sig);
    }
    return total / static_cast<double>(s.numel());
}

// the three-term discriminator objective, coded directly from scalars
inline double d_loss(const aigan::Tensor& s_real, const aigan::Tensor& s_pert,
                     const aigan::Tensor& c_adv, const std::vector<int>& y_adv,
                     const aigan::Tensor& c_pert, const std::vector<int>& y_pert) {
    return bce_logits(s_real, 1.0) + bce_logits(s_pert, 0.0) + softmax_ce(c_adv, y_adv) +
           softmax_ce(c_pert, y_pert);
}

// the three-term generator objective
inline double g_loss(const aigan::Tensor& target_logits, const aigan::Tensor& d_class_logits,
                     const aigan::Tensor& s_pert, const std::vector<int>& t, double w_target,
                     double w_d, double w_s) {
    return w_target * softmax_ce(target_logits, t) + w_d * softmax_ce(d_class_logits, t) +
           w_s * bce_logits(s_pert, 1.0);
}

} // namespace oracle
