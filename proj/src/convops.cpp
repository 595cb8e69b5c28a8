// Structured ops: matmul, convolution (im2col + sgemm), transposed
// convolution, pooling, reshape/concat, bias broadcasts and batchnorm.

#include <cmath>
#include <cstring>
#include <memory>

#include "aigan/kernels.hpp"
#include "aigan/tape.hpp"

namespace aigan {
namespace {

const kern::Table& K() { return kern::active(); }

// col[C*kh*kw, oh*ow] <- x[C,H,W]
void im2col(const float* x, int c, int h, int w, int kh, int kw, int stride, int pad,
            int oh, int ow, float* col) {
    for (int ch = 0; ch < c; ++ch) {
        for (int ki = 0; ki < kh; ++ki) {
            for (int kj = 0; kj < kw; ++kj) {
                float* dst = col + (static_cast<std::int64_t>(ch) * kh * kw + ki * kw + kj) *
                                       (static_cast<std::int64_t>(oh) * ow);
                for (int i = 0; i < oh; ++i) {
                    const int src_i = i * stride - pad + ki;
                    if (src_i < 0 || src_i >= h) {
                        std::memset(dst, 0, sizeof(float) * static_cast<std::size_t>(ow));
                        dst += ow;
                        continue;
                    }
                    const float* srow = x + (static_cast<std::int64_t>(ch) * h + src_i) * w;
                    for (int j = 0; j < ow; ++j) {
                        const int src_j = j * stride - pad + kj;
                        dst[j] = (src_j >= 0 && src_j < w) ? srow[src_j] : 0.0f;
                    }
                    dst += ow;
                }
            }
        }
    }
}

// x[C,H,W] += scatter of col[C*kh*kw, oh*ow]
void col2im(const float* col, int c, int h, int w, int kh, int kw, int stride, int pad,
            int oh, int ow, float* x) {
    for (int ch = 0; ch < c; ++ch) {
        for (int ki = 0; ki < kh; ++ki) {
            for (int kj = 0; kj < kw; ++kj) {
                const float* src = col + (static_cast<std::int64_t>(ch) * kh * kw + ki * kw + kj) *
                                             (static_cast<std::int64_t>(oh) * ow);
                for (int i = 0; i < oh; ++i) {
                    const int dst_i = i * stride - pad + ki;
                    if (dst_i < 0 || dst_i >= h) {
                        src += ow;
                        continue;
                    }
                    float* drow = x + (static_cast<std::int64_t>(ch) * h + dst_i) * w;
                    for (int j = 0; j < ow; ++j) {
                        const int dst_j = j * stride - pad + kj;
                        if (dst_j >= 0 && dst_j < w) drow[dst_j] += src[j];
                    }
                    src += ow;
                }
            }
        }
    }
}

int conv_out_dim(int in, int k, int stride, int pad) {
    return (in + 2 * pad - k) / stride + 1;
}

} // namespace

Value matmul(Value a, Value b) {
    if (a.tape != b.tape) throw ContractError("matmul: operands on different tapes");
    Tape& t = *a.tape;
    const Tensor& av = t.val(a);
    const Tensor& bv = t.val(b);
    if (av.rank() != 2 || bv.rank() != 2 || av.dim(1) != bv.dim(0))
        throw ShapeError("matmul: incompatible shapes " + av.shape_str() + " x " +
                         bv.shape_str());
    const int m = av.dim(0), k = av.dim(1), n = bv.dim(1);
    Tensor out({m, n});
    K().sgemm(m, n, k, av.data(), bv.data(), out.data(), false);
    int id = t.emit(std::move(out), {a.id, b.id}, [a, b, m, k, n](Tape& tp, int self) {
        const Tensor& gy = tp.grad(self);
        if (tp.needs_grad(a.id)) {
            Tensor bt = transpose2d(tp.val(b)); // [n,k]
            K().sgemm(m, k, n, gy.data(), bt.data(), tp.grad(a.id).data(), true);
        }
        if (tp.needs_grad(b.id)) {
            Tensor at = transpose2d(tp.val(a)); // [k,m]
            K().sgemm(k, n, m, at.data(), gy.data(), tp.grad(b.id).data(), true);
        }
    });
    return Value{&t, id};
}

Value conv2d(Value x, Value w, int stride, int pad) {
    if (x.tape != w.tape) throw ContractError("conv2d: operands on different tapes");
    if (stride < 1 || pad < 0) throw ContractError("conv2d: stride must be >=1, pad >=0");
    Tape& t = *x.tape;
    const Tensor& xv = t.val(x);
    const Tensor& wv = t.val(w);
    if (xv.rank() != 4 || wv.rank() != 4)
        throw ShapeError("conv2d: need x[N,C,H,W], w[F,C,kh,kw], got " + xv.shape_str() +
                         " and " + wv.shape_str());
    const int n = xv.dim(0), c = xv.dim(1), h = xv.dim(2), win = xv.dim(3);
    const int f = wv.dim(0), kh = wv.dim(2), kw = wv.dim(3);
    if (wv.dim(1) != c)
        throw ShapeError("conv2d: channel mismatch, x has " + std::to_string(c) +
                         ", w expects " + std::to_string(wv.dim(1)));
    if (kh > h + 2 * pad || kw > win + 2 * pad)
        throw ShapeError("conv2d: kernel " + std::to_string(kh) + "x" + std::to_string(kw) +
                         " larger than padded input " + std::to_string(h + 2 * pad) + "x" +
                         std::to_string(win + 2 * pad));
    const int oh = conv_out_dim(h, kh, stride, pad);
    const int ow = conv_out_dim(win, kw, stride, pad);
    const int l = c * kh * kw;   // patch length
    const int p = oh * ow;       // output positions

    // columns are cached for the backward pass
    auto cols = std::make_shared<Tensor>(std::vector<int>{n, l, p});
    Tensor out({n, f, oh, ow});
    for (int s = 0; s < n; ++s) {
        float* col = cols->data() + static_cast<std::int64_t>(s) * l * p;
        im2col(xv.data() + static_cast<std::int64_t>(s) * c * h * win, c, h, win, kh, kw,
               stride, pad, oh, ow, col);
        K().sgemm(f, p, l, wv.data(), col, out.data() + static_cast<std::int64_t>(s) * f * p,
                  false);
    }

    int id = t.emit(std::move(out), {x.id, w.id},
                    [x, w, cols, n, c, h, win, f, kh, kw, stride, pad, oh, ow, l,
                     p](Tape& tp, int self) {
                        const Tensor& gy = tp.grad(self);
                        if (tp.needs_grad(w.id)) {
                            Tensor& gw = tp.grad(w.id);
                            Tensor colt({p, l});
                            for (int s = 0; s < n; ++s) {
                                const float* col =
                                    cols->data() + static_cast<std::int64_t>(s) * l * p;
                                // [l,p] -> [p,l]
                                for (int i = 0; i < l; ++i)
                                    for (int j = 0; j < p; ++j)
                                        colt[static_cast<std::int64_t>(j) * l + i] =
                                            col[static_cast<std::int64_t>(i) * p + j];
                                K().sgemm(f, l, p,
                                          gy.data() + static_cast<std::int64_t>(s) * f * p,
                                          colt.data(), gw.data(), true);
                            }
                        }
                        if (tp.needs_grad(x.id)) {
                            Tensor wt = transpose2d(
                                Tensor({f, l}, std::vector<float>(tp.val(w).vec())));
                            Tensor& gx = tp.grad(x.id);
                            Tensor dcol({l, p});
                            for (int s = 0; s < n; ++s) {
                                K().sgemm(l, p, f, wt.data(),
                                          gy.data() + static_cast<std::int64_t>(s) * f * p,
                                          dcol.data(), false);
                                col2im(dcol.data(), c, h, win, kh, kw, stride, pad, oh, ow,
                                       gx.data() + static_cast<std::int64_t>(s) * c * h * win);
                            }
                        }
                    });
    return Value{&t, id};
}

Value conv2d_transpose(Value x, Value w, int stride, int pad, int out_pad) {
    if (x.tape != w.tape) throw ContractError("conv2d_transpose: operands on different tapes");
    if (stride < 1 || pad < 0 || out_pad < 0 || out_pad >= stride)
        throw ContractError("conv2d_transpose: need stride>=1, pad>=0, 0<=out_pad<stride");
    Tape& t = *x.tape;
    const Tensor& xv = t.val(x);
    const Tensor& wv = t.val(w);
    if (xv.rank() != 4 || wv.rank() != 4)
        throw ShapeError("conv2d_transpose: need x[N,Cin,H,W], w[Cin,Cout,kh,kw]");
    const int n = xv.dim(0), cin = xv.dim(1), h = xv.dim(2), win = xv.dim(3);
    const int cout = wv.dim(1), kh = wv.dim(2), kw = wv.dim(3);
    if (wv.dim(0) != cin)
        throw ShapeError("conv2d_transpose: channel mismatch " + xv.shape_str() + " vs " +
                         wv.shape_str());
    const int oh = (h - 1) * stride - 2 * pad + kh + out_pad;
    const int ow = (win - 1) * stride - 2 * pad + kw + out_pad;
    if (oh < 1 || ow < 1) throw ShapeError("conv2d_transpose: output would be empty");
    const int l = cout * kh * kw;
    const int p = h * win;

    // forward = col2im(w^T . x_flat): the data-gradient of the matching conv
    Tensor wt = transpose2d(Tensor({cin, l}, std::vector<float>(wv.vec()))); // [l, cin]
    Tensor out({n, cout, oh, ow});
    Tensor cols({l, p});
    for (int s = 0; s < n; ++s) {
        K().sgemm(l, p, cin, wt.data(), xv.data() + static_cast<std::int64_t>(s) * cin * p,
                  cols.data(), false);
        col2im(cols.data(), cout, oh, ow, kh, kw, stride, pad, h, win,
               out.data() + static_cast<std::int64_t>(s) * cout * oh * ow);
    }

    int id = t.emit(std::move(out), {x.id, w.id},
                    [x, w, n, cin, h, win, cout, kh, kw, stride, pad, oh, ow, l,
                     p](Tape& tp, int self) {
                        const Tensor& gy = tp.grad(self);
                        Tensor gcols({l, p});
                        Tensor gcolt({p, l});
                        const bool need_x = tp.needs_grad(x.id);
                        const bool need_w = tp.needs_grad(w.id);
                        for (int s = 0; s < n; ++s) {
                            im2col(gy.data() + static_cast<std::int64_t>(s) * cout * oh * ow,
                                   cout, oh, ow, kh, kw, stride, pad, h, win, gcols.data());
                            if (need_x) {
                                K().sgemm(cin, p, l, tp.val(w).data(), gcols.data(),
                                          tp.grad(x.id).data() +
                                              static_cast<std::int64_t>(s) * cin * p,
                                          true);
                            }
                            if (need_w) {
                                for (int i = 0; i < l; ++i)
                                    for (int j = 0; j < p; ++j)
                                        gcolt[static_cast<std::int64_t>(j) * l + i] =
                                            gcols[static_cast<std::int64_t>(i) * p + j];
                                K().sgemm(cin, l, p,
                                          tp.val(x).data() +
                                              static_cast<std::int64_t>(s) * cin * p,
                                          gcolt.data(), tp.grad(w.id).data(), true);
                            }
                        }
                    });
    return Value{&t, id};
}

Value add_rowvec(Value m, Value v) {
    if (m.tape != v.tape) throw ContractError("add_rowvec: operands on different tapes");
    Tape& t = *m.tape;
    const Tensor& mv = t.val(m);
    const Tensor& vv = t.val(v);
    if (mv.rank() != 2 || vv.rank() != 1 || vv.dim(0) != mv.dim(1))
        throw ShapeError("add_rowvec: " + mv.shape_str() + " + " + vv.shape_str());
    const int rows = mv.dim(0), cols = mv.dim(1);
    Tensor out(mv.shape());
    for (int i = 0; i < rows; ++i)
        K().add(mv.data() + static_cast<std::int64_t>(i) * cols, vv.data(),
                out.data() + static_cast<std::int64_t>(i) * cols, cols);
    int id = t.emit(std::move(out), {m.id, v.id}, [m, v, rows, cols](Tape& tp, int self) {
        const Tensor& gy = tp.grad(self);
        if (tp.needs_grad(m.id))
            K().axpy(1.0f, gy.data(), tp.grad(m.id).data(), gy.numel());
        if (tp.needs_grad(v.id)) {
            Tensor& gv = tp.grad(v.id);
            for (int i = 0; i < rows; ++i)
                K().axpy(1.0f, gy.data() + static_cast<std::int64_t>(i) * cols, gv.data(),
                         cols);
        }
    });
    return Value{&t, id};
}

Value add_chan_bias(Value x, Value b) {
    if (x.tape != b.tape) throw ContractError("add_chan_bias: operands on different tapes");
    Tape& t = *x.tape;
    const Tensor& xv = t.val(x);
    const Tensor& bv = t.val(b);
    if (xv.rank() != 4 || bv.rank() != 1 || bv.dim(0) != xv.dim(1))
        throw ShapeError("add_chan_bias: " + xv.shape_str() + " + " + bv.shape_str());
    const int n = xv.dim(0), c = xv.dim(1);
    const std::int64_t hw = static_cast<std::int64_t>(xv.dim(2)) * xv.dim(3);
    Tensor out(xv.shape());
    for (int s = 0; s < n; ++s)
        for (int ch = 0; ch < c; ++ch) {
            const std::int64_t off = (static_cast<std::int64_t>(s) * c + ch) * hw;
            const float bias = bv[ch];
            for (std::int64_t i = 0; i < hw; ++i) out[off + i] = xv[off + i] + bias;
        }
    int id = t.emit(std::move(out), {x.id, b.id}, [x, b, n, c, hw](Tape& tp, int self) {
        const Tensor& gy = tp.grad(self);
        if (tp.needs_grad(x.id))
            K().axpy(1.0f, gy.data(), tp.grad(x.id).data(), gy.numel());
        if (tp.needs_grad(b.id)) {
            Tensor& gb = tp.grad(b.id);
            for (int s = 0; s < n; ++s)
                for (int ch = 0; ch < c; ++ch)
                    gb[ch] += K().sum(gy.data() + (static_cast<std::int64_t>(s) * c + ch) * hw,
                                      hw);
        }
    });
    return Value{&t, id};
}

Value maxpool2x2(Value x) {
    Tape& t = *x.tape;
    const Tensor& xv = t.val(x);
    if (xv.rank() != 4) throw ShapeError("maxpool2x2: need [N,C,H,W], got " + xv.shape_str());
    const int n = xv.dim(0), c = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
    if (h < 2 || w < 2) throw ShapeError("maxpool2x2: spatial dims too small");
    const int oh = h / 2, ow = w / 2;
    Tensor out({n, c, oh, ow});
    auto argmax = std::make_shared<std::vector<std::int64_t>>(out.numel());
    std::int64_t oidx = 0;
    for (int s = 0; s < n; ++s)
        for (int ch = 0; ch < c; ++ch) {
            const std::int64_t plane = (static_cast<std::int64_t>(s) * c + ch) * h * w;
            for (int i = 0; i < oh; ++i)
                for (int j = 0; j < ow; ++j) {
                    std::int64_t best = plane + static_cast<std::int64_t>(2 * i) * w + 2 * j;
                    float bv2 = xv[best];
                    const std::int64_t cands[3] = {best + 1, best + w, best + w + 1};
                    for (std::int64_t cand : cands)
                        if (xv[cand] > bv2) {
                            bv2 = xv[cand];
                            best = cand;
                        }
                    out[oidx] = bv2;
                    (*argmax)[static_cast<std::size_t>(oidx)] = best;
                    ++oidx;
                }
        }
    int id = t.emit(std::move(out), {x.id}, [x, argmax](Tape& tp, int self) {
        const Tensor& gy = tp.grad(self);
        Tensor& gx = tp.grad(x.id);
        for (std::int64_t i = 0; i < gy.numel(); ++i)
            gx[(*argmax)[static_cast<std::size_t>(i)]] += gy[i];
    });
    return Value{&t, id};
}

Value avgpool_global(Value x) {
    Tape& t = *x.tape;
    const Tensor& xv = t.val(x);
    if (xv.rank() != 4) throw ShapeError("avgpool_global: need [N,C,H,W]");
    const int n = xv.dim(0), c = xv.dim(1);
    const std::int64_t hw = static_cast<std::int64_t>(xv.dim(2)) * xv.dim(3);
    const float inv = 1.0f / static_cast<float>(hw);
    Tensor out({n, c});
    for (int s = 0; s < n; ++s)
        for (int ch = 0; ch < c; ++ch)
            out[static_cast<std::int64_t>(s) * c + ch] =
                K().sum(xv.data() + (static_cast<std::int64_t>(s) * c + ch) * hw, hw) * inv;
    int id = t.emit(std::move(out), {x.id}, [x, n, c, hw, inv](Tape& tp, int self) {
        const Tensor& gy = tp.grad(self);
        Tensor& gx = tp.grad(x.id);
        for (int s = 0; s < n; ++s)
            for (int ch = 0; ch < c; ++ch) {
                const float g = gy[static_cast<std::int64_t>(s) * c + ch] * inv;
                float* dst = gx.data() + (static_cast<std::int64_t>(s) * c + ch) * hw;
                for (std::int64_t i = 0; i < hw; ++i) dst[i] += g;
            }
    });
    return Value{&t, id};
}

Value reshape(Value x, std::vector<int> shape) {
    Tape& t = *x.tape;
    const Tensor& xv = t.val(x);
    Tensor out(std::move(shape), std::vector<float>(xv.vec()));
    if (out.numel() != xv.numel())
        throw ShapeError("reshape: element count changes from " + xv.shape_str() + " to " +
                         out.shape_str());
    int id = t.emit(std::move(out), {x.id}, [x](Tape& tp, int self) {
        const Tensor& gy = tp.grad(self);
        K().axpy(1.0f, gy.data(), tp.grad(x.id).data(), gy.numel());
    });
    return Value{&t, id};
}

Value concat_channels(Value a, Value b) {
    if (a.tape != b.tape) throw ContractError("concat_channels: operands on different tapes");
    Tape& t = *a.tape;
    const Tensor& av = t.val(a);
    const Tensor& bv = t.val(b);
    if (av.rank() != 4 || bv.rank() != 4 || av.dim(0) != bv.dim(0) ||
        av.dim(2) != bv.dim(2) || av.dim(3) != bv.dim(3))
        throw ShapeError("concat_channels: " + av.shape_str() + " and " + bv.shape_str());
    const int n = av.dim(0), ca = av.dim(1), cb = bv.dim(1);
    const std::int64_t hw = static_cast<std::int64_t>(av.dim(2)) * av.dim(3);
    Tensor out({n, ca + cb, av.dim(2), av.dim(3)});
    for (int s = 0; s < n; ++s) {
        std::memcpy(out.data() + static_cast<std::int64_t>(s) * (ca + cb) * hw,
                    av.data() + static_cast<std::int64_t>(s) * ca * hw,
                    sizeof(float) * static_cast<std::size_t>(ca * hw));
        std::memcpy(out.data() + (static_cast<std::int64_t>(s) * (ca + cb) + ca) * hw,
                    bv.data() + static_cast<std::int64_t>(s) * cb * hw,
                    sizeof(float) * static_cast<std::size_t>(cb * hw));
    }
    int id = t.emit(std::move(out), {a.id, b.id}, [a, b, n, ca, cb, hw](Tape& tp, int self) {
        const Tensor& gy = tp.grad(self);
        if (tp.needs_grad(a.id)) {
            Tensor& ga = tp.grad(a.id);
            for (int s = 0; s < n; ++s)
                K().axpy(1.0f, gy.data() + static_cast<std::int64_t>(s) * (ca + cb) * hw,
                         ga.data() + static_cast<std::int64_t>(s) * ca * hw, ca * hw);
        }
        if (tp.needs_grad(b.id)) {
            Tensor& gb = tp.grad(b.id);
            for (int s = 0; s < n; ++s)
                K().axpy(1.0f,
                         gy.data() + (static_cast<std::int64_t>(s) * (ca + cb) + ca) * hw,
                         gb.data() + static_cast<std::int64_t>(s) * cb * hw, cb * hw);
        }
    });
    return Value{&t, id};
}

Value batchnorm2d(Value x, Value gamma, Value beta, Tensor* run_mean, Tensor* run_var,
                  bool training, float momentum, float eps) {
    Tape& t = *x.tape;
    const Tensor& xv = t.val(x);
    const Tensor& gv = t.val(gamma);
    if (xv.rank() != 4) throw ShapeError("batchnorm2d: need [N,C,H,W]");
    const int n = xv.dim(0), c = xv.dim(1);
    if (gv.dim(0) != c || t.val(beta).dim(0) != c)
        throw ShapeError("batchnorm2d: affine params must have " + std::to_string(c) +
                         " channels");
    const std::int64_t hw = static_cast<std::int64_t>(xv.dim(2)) * xv.dim(3);
    const std::int64_t m = static_cast<std::int64_t>(n) * hw;

    auto mean = std::make_shared<Tensor>(std::vector<int>{c});
    auto invstd = std::make_shared<Tensor>(std::vector<int>{c});
    auto xhat = std::make_shared<Tensor>(xv.shape());

    for (int ch = 0; ch < c; ++ch) {
        float mu, var;
        if (training) {
            float s = 0.0f;
            for (int smp = 0; smp < n; ++smp)
                s += K().sum(xv.data() + (static_cast<std::int64_t>(smp) * c + ch) * hw, hw);
            mu = s / static_cast<float>(m);
            float sq = 0.0f;
            for (int smp = 0; smp < n; ++smp) {
                const float* p = xv.data() + (static_cast<std::int64_t>(smp) * c + ch) * hw;
                for (std::int64_t i = 0; i < hw; ++i) {
                    const float d = p[i] - mu;
                    sq += d * d;
                }
            }
            var = sq / static_cast<float>(m); // biased, matches the running estimate
            (*run_mean)[ch] = (1.0f - momentum) * (*run_mean)[ch] + momentum * mu;
            (*run_var)[ch] = (1.0f - momentum) * (*run_var)[ch] + momentum * var;
        } else {
            mu = (*run_mean)[ch];
            var = (*run_var)[ch];
        }
        (*mean)[ch] = mu;
        (*invstd)[ch] = 1.0f / std::sqrt(var + eps);
    }

    Tensor out(xv.shape());
    const Tensor& bv = t.val(beta);
    for (int smp = 0; smp < n; ++smp)
        for (int ch = 0; ch < c; ++ch) {
            const std::int64_t off = (static_cast<std::int64_t>(smp) * c + ch) * hw;
            const float mu = (*mean)[ch], is = (*invstd)[ch];
            const float ga = gv[ch], be = bv[ch];
            for (std::int64_t i = 0; i < hw; ++i) {
                const float xh = (xv[off + i] - mu) * is;
                (*xhat)[off + i] = xh;
                out[off + i] = ga * xh + be;
            }
        }

    int id = t.emit(
        std::move(out), {x.id, gamma.id, beta.id},
        [x, gamma, beta, mean, invstd, xhat, n, c, hw, m, training](Tape& tp, int self) {
            const Tensor& gy = tp.grad(self);
            const Tensor& ga = tp.val(gamma);
            // per-channel reductions over N*H*W
            Tensor dbeta({c});
            Tensor dgamma({c});
            for (int smp = 0; smp < n; ++smp)
                for (int ch = 0; ch < c; ++ch) {
                    const std::int64_t off = (static_cast<std::int64_t>(smp) * c + ch) * hw;
                    dbeta[ch] += K().sum(gy.data() + off, hw);
                    dgamma[ch] += K().dot(gy.data() + off, xhat->data() + off, hw);
                }
            if (tp.needs_grad(beta.id))
                K().axpy(1.0f, dbeta.data(), tp.grad(beta.id).data(), c);
            if (tp.needs_grad(gamma.id))
                K().axpy(1.0f, dgamma.data(), tp.grad(gamma.id).data(), c);
            if (!tp.needs_grad(x.id)) return;
            Tensor& gx = tp.grad(x.id);
            const float invm = 1.0f / static_cast<float>(m);
            for (int smp = 0; smp < n; ++smp)
                for (int ch = 0; ch < c; ++ch) {
                    const std::int64_t off = (static_cast<std::int64_t>(smp) * c + ch) * hw;
                    const float g = ga[ch] * (*invstd)[ch];
                    if (training) {
                        // batch statistics contribute to the gradient
                        const float mb = dbeta[ch] * invm;
                        const float mg = dgamma[ch] * invm;
                        for (std::int64_t i = 0; i < hw; ++i)
                            gx[off + i] +=
                                g * (gy[off + i] - mb - (*xhat)[off + i] * mg);
                    } else {
                        for (std::int64_t i = 0; i < hw; ++i) gx[off + i] += g * gy[off + i];
                    }
                }
        });
    return Value{&t, id};
}

} // namespace aigan
