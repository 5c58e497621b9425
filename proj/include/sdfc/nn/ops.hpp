#pragma once

#include <cblas.h>
#include <cmath>

#include "sdfc/nn/autograd.hpp"

namespace sdfc::nn {

// Row-major sgemm: C = alpha * op(A) op(B) + beta * C.
inline void sgemm(bool trans_a, bool trans_b, int m, int n, int k, float alpha, const float* a,
                  int lda, const float* b, int ldb, float beta, float* c, int ldc) {
    cblas_sgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
                trans_b ? CblasTrans : CblasNoTrans, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}

// ---------------------------------------------------------------------------
// Elementwise and shape ops
// ---------------------------------------------------------------------------

inline Var add(const Var& a, const Var& b) {
    check_same_shape(a->value, b->value, "add");
    Tensor out = a->value;
    const float* bp = b->value.data();
    float* op = out.data();
    for (std::size_t i = 0; i < out.numel(); ++i) op[i] += bp[i];
    return make_node(std::move(out), {a, b}, [a, b](Node& n) {
        if (a->requires_grad) a->accumulate(n.grad);
        if (b->requires_grad) b->accumulate(n.grad);
    });
}

inline Var sub(const Var& a, const Var& b) {
    check_same_shape(a->value, b->value, "sub");
    Tensor out = a->value;
    const float* bp = b->value.data();
    float* op = out.data();
    for (std::size_t i = 0; i < out.numel(); ++i) op[i] -= bp[i];
    return make_node(std::move(out), {a, b}, [a, b](Node& n) {
        if (a->requires_grad) a->accumulate(n.grad);
        if (b->requires_grad) {
            Tensor& dst = b->ensure_grad();
            for (std::size_t i = 0; i < dst.numel(); ++i) dst[i] -= n.grad[i];
        }
    });
}

inline Var mul(const Var& a, const Var& b) {
    check_same_shape(a->value, b->value, "mul");
    Tensor out = a->value;
    const float* bp = b->value.data();
    float* op = out.data();
    for (std::size_t i = 0; i < out.numel(); ++i) op[i] *= bp[i];
    return make_node(std::move(out), {a, b}, [a, b](Node& n) {
        if (a->requires_grad) {
            Tensor& dst = a->ensure_grad();
            for (std::size_t i = 0; i < dst.numel(); ++i) dst[i] += n.grad[i] * b->value[i];
        }
        if (b->requires_grad) {
            Tensor& dst = b->ensure_grad();
            for (std::size_t i = 0; i < dst.numel(); ++i) dst[i] += n.grad[i] * a->value[i];
        }
    });
}

inline Var scale(const Var& a, float s) {
    Tensor out = a->value;
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= s;
    return make_node(std::move(out), {a}, [a, s](Node& n) {
        if (!a->requires_grad) return;
        Tensor& dst = a->ensure_grad();
        for (std::size_t i = 0; i < dst.numel(); ++i) dst[i] += n.grad[i] * s;
    });
}

inline Var exp_op(const Var& a) {
    Tensor out = a->value;
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = std::exp(out[i]);
    return make_node(std::move(out), {a}, [a](Node& n) {
        if (!a->requires_grad) return;
        Tensor& dst = a->ensure_grad();
        for (std::size_t i = 0; i < dst.numel(); ++i) dst[i] += n.grad[i] * n.value[i];
    });
}

inline Var relu(const Var& a) {
    Tensor out = a->value;
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = out[i] > 0.0f ? out[i] : 0.0f;
    return make_node(std::move(out), {a}, [a](Node& n) {
        if (!a->requires_grad) return;
        Tensor& dst = a->ensure_grad();
        for (std::size_t i = 0; i < dst.numel(); ++i)
            if (a->value[i] > 0.0f) dst[i] += n.grad[i];
    });
}

inline Var reshape(const Var& a, std::vector<int> shape) {
    Tensor out = a->value.reshaped(std::move(shape));
    return make_node(std::move(out), {a}, [a](Node& n) {
        if (!a->requires_grad) return;
        a->accumulate(n.grad.reshaped(a->value.shape()));
    });
}

/// Broadcast add over the channel axis: a[B,C,S...] + x[B,1,S...].
inline Var add_bcast_channel(const Var& a, const Var& x) {
    const auto& as = a->value.shape();
    const auto& xs = x->value.shape();
    if (as.size() < 2 || xs.size() != as.size() || xs[1] != 1)
        throw ShapeMismatch("add_bcast_channel: need a[B,C,...] and x[B,1,...], got " +
                            Tensor::shape_str(as) + " and " + Tensor::shape_str(xs));
    for (std::size_t i = 0; i < as.size(); ++i)
        if (i != 1 && as[i] != xs[i])
            throw ShapeMismatch("add_bcast_channel: shape " + Tensor::shape_str(as) + " vs " +
                                Tensor::shape_str(xs));
    const int batch = as[0], channels = as[1];
    std::size_t spatial = 1;
    for (std::size_t i = 2; i < as.size(); ++i) spatial *= static_cast<std::size_t>(as[i]);

    Tensor out = a->value;
    for (int b = 0; b < batch; ++b) {
        const float* xp = x->value.data() + static_cast<std::size_t>(b) * spatial;
        for (int c = 0; c < channels; ++c) {
            float* op = out.data() + (static_cast<std::size_t>(b) * channels + c) * spatial;
            for (std::size_t s = 0; s < spatial; ++s) op[s] += xp[s];
        }
    }
    return make_node(std::move(out), {a, x}, [a, x, batch, channels, spatial](Node& n) {
        if (a->requires_grad) a->accumulate(n.grad);
        if (x->requires_grad) {
            Tensor& dst = x->ensure_grad();
            for (int b = 0; b < batch; ++b) {
                float* xg = dst.data() + static_cast<std::size_t>(b) * spatial;
                for (int c = 0; c < channels; ++c) {
                    const float* gp =
                        n.grad.data() + (static_cast<std::size_t>(b) * channels + c) * spatial;
                    for (std::size_t s = 0; s < spatial; ++s) xg[s] += gp[s];
                }
            }
        }
    });
}

inline Var concat_lastdim(const Var& a, const Var& b) {
    const auto& as = a->value.shape();
    const auto& bs = b->value.shape();
    if (as.size() != bs.size() || as.empty())
        throw ShapeMismatch("concat_lastdim: rank mismatch");
    for (std::size_t i = 0; i + 1 < as.size(); ++i)
        if (as[i] != bs[i]) throw ShapeMismatch("concat_lastdim: leading dims differ");
    const int fa = as.back(), fb = bs.back();
    std::vector<int> os = as;
    os.back() = fa + fb;
    const std::size_t rows = a->value.numel() / static_cast<std::size_t>(fa);

    Tensor out(os);
    for (std::size_t r = 0; r < rows; ++r) {
        float* dst = out.data() + r * static_cast<std::size_t>(fa + fb);
        std::copy_n(a->value.data() + r * fa, fa, dst);
        std::copy_n(b->value.data() + r * fb, fb, dst + fa);
    }
    return make_node(std::move(out), {a, b}, [a, b, rows, fa, fb](Node& n) {
        if (a->requires_grad) {
            Tensor& dst = a->ensure_grad();
            for (std::size_t r = 0; r < rows; ++r)
                for (int i = 0; i < fa; ++i)
                    dst[r * fa + i] += n.grad[r * (fa + fb) + i];
        }
        if (b->requires_grad) {
            Tensor& dst = b->ensure_grad();
            for (std::size_t r = 0; r < rows; ++r)
                for (int i = 0; i < fb; ++i)
                    dst[r * fb + i] += n.grad[r * (fa + fb) + fa + i];
        }
    });
}

inline Var slice_lastdim(const Var& a, int start, int len) {
    const auto& as = a->value.shape();
    const int f = as.back();
    if (start < 0 || len <= 0 || start + len > f)
        throw ShapeMismatch("slice_lastdim: range [" + std::to_string(start) + ", " +
                            std::to_string(start + len) + ") out of " + std::to_string(f));
    std::vector<int> os = as;
    os.back() = len;
    const std::size_t rows = a->value.numel() / static_cast<std::size_t>(f);
    Tensor out(os);
    for (std::size_t r = 0; r < rows; ++r)
        std::copy_n(a->value.data() + r * f + start, len, out.data() + r * len);
    return make_node(std::move(out), {a}, [a, rows, f, start, len](Node& n) {
        if (!a->requires_grad) return;
        Tensor& dst = a->ensure_grad();
        for (std::size_t r = 0; r < rows; ++r)
            for (int i = 0; i < len; ++i)
                dst[r * f + start + i] += n.grad[r * len + i];
    });
}

/// Permutes tensor axes (copying). Used for attention head layout.
inline Var permute(const Var& a, std::vector<int> dims) {
    const auto& as = a->value.shape();
    const int rank = static_cast<int>(as.size());
    if (static_cast<int>(dims.size()) != rank) throw ShapeMismatch("permute: rank mismatch");

    std::vector<int> os(rank);
    for (int i = 0; i < rank; ++i) os[i] = as[dims[i]];

    auto strides_of = [](const std::vector<int>& s) {
        std::vector<std::size_t> st(s.size(), 1);
        for (int i = static_cast<int>(s.size()) - 2; i >= 0; --i)
            st[i] = st[i + 1] * static_cast<std::size_t>(s[i + 1]);
        return st;
    };
    const auto in_strides = strides_of(as);
    const auto out_strides = strides_of(os);

    auto apply = [rank](const Tensor& src, Tensor& dst, const std::vector<int>& dim_map,
                        const std::vector<std::size_t>& sst, const std::vector<std::size_t>& dst_st,
                        const std::vector<int>& dshape) {
        std::vector<int> idx(rank, 0);
        const std::size_t n = src.numel();
        for (std::size_t flat = 0; flat < n; ++flat) {
            std::size_t src_off = 0;
            for (int i = 0; i < rank; ++i) src_off += static_cast<std::size_t>(idx[i]) * sst[dim_map[i]];
            dst[flat] = src[src_off];
            for (int i = rank - 1; i >= 0; --i) {
                if (++idx[i] < dshape[i]) break;
                idx[i] = 0;
            }
        }
        (void)dst_st;
    };

    Tensor out(os);
    apply(a->value, out, dims, in_strides, out_strides, os);

    return make_node(std::move(out), {a}, [a, dims, os](Node& n) {
        if (!a->requires_grad) return;
        // inverse permutation
        std::vector<int> inv(dims.size());
        for (std::size_t i = 0; i < dims.size(); ++i) inv[dims[i]] = static_cast<int>(i);
        const auto& as2 = a->value.shape();
        const int rank2 = static_cast<int>(as2.size());
        std::vector<std::size_t> gst(rank2, 1);
        for (int i = rank2 - 2; i >= 0; --i) gst[i] = gst[i + 1] * static_cast<std::size_t>(os[i + 1]);
        Tensor& dst = a->ensure_grad();
        std::vector<int> idx(rank2, 0);
        for (std::size_t flat = 0; flat < dst.numel(); ++flat) {
            std::size_t src_off = 0;
            for (int i = 0; i < rank2; ++i) src_off += static_cast<std::size_t>(idx[i]) * gst[inv[i]];
            dst[flat] += n.grad[src_off];
            for (int i = rank2 - 1; i >= 0; --i) {
                if (++idx[i] < as2[i]) break;
                idx[i] = 0;
            }
        }
    });
}

// ---------------------------------------------------------------------------
// Linear algebra
// ---------------------------------------------------------------------------

/// y = x W^T + b with x[..., in], W[out, in], b[out]. Leading dims flatten.
inline Var linear(const Var& x, const Var& w, const Var& b) {
    const auto& xs = x->value.shape();
    const auto& ws = w->value.shape();
    if (ws.size() != 2 || xs.empty() || xs.back() != ws[1])
        throw ShapeMismatch("linear: x " + Tensor::shape_str(xs) + " vs W " + Tensor::shape_str(ws));
    const int in = ws[1], out_f = ws[0];
    const int rows = static_cast<int>(x->value.numel() / static_cast<std::size_t>(in));
    if (b && (b->value.rank() != 1 || b->value.dim(0) != out_f))
        throw ShapeMismatch("linear: bias shape");

    std::vector<int> os = xs;
    os.back() = out_f;
    Tensor out(os);
    sgemm(false, true, rows, out_f, in, 1.0f, x->value.data(), in, w->value.data(), in, 0.0f,
          out.data(), out_f);
    if (b) {
        float* op = out.data();
        const float* bp = b->value.data();
        for (int r = 0; r < rows; ++r)
            for (int c = 0; c < out_f; ++c) op[static_cast<std::size_t>(r) * out_f + c] += bp[c];
    }

    std::vector<Var> parents = {x, w};
    if (b) parents.push_back(b);
    return make_node(std::move(out), std::move(parents), [x, w, b, rows, in, out_f](Node& n) {
        const float* gy = n.grad.data();
        if (x->requires_grad) {
            Tensor& gx = x->ensure_grad();
            sgemm(false, false, rows, in, out_f, 1.0f, gy, out_f, w->value.data(), in, 1.0f,
                  gx.data(), in);
        }
        if (w->requires_grad) {
            Tensor& gw = w->ensure_grad();
            sgemm(true, false, out_f, in, rows, 1.0f, gy, out_f, x->value.data(), in, 1.0f,
                  gw.data(), in);
        }
        if (b && b->requires_grad) {
            Tensor& gb = b->ensure_grad();
            for (int r = 0; r < rows; ++r)
                for (int c = 0; c < out_f; ++c) gb[c] += gy[static_cast<std::size_t>(r) * out_f + c];
        }
    });
}

/// Batched matmul: a[G,M,K] x b[G,K,N] -> [G,M,N], optional transposes on the
/// last two axes of either input.
inline Var bmm(const Var& a, const Var& b, bool trans_a = false, bool trans_b = false) {
    const auto& as = a->value.shape();
    const auto& bs = b->value.shape();
    if (as.size() != 3 || bs.size() != 3 || as[0] != bs[0])
        throw ShapeMismatch("bmm: need [G,M,K]x[G,K,N], got " + Tensor::shape_str(as) + " and " +
                            Tensor::shape_str(bs));
    const int g = as[0];
    const int m = trans_a ? as[2] : as[1];
    const int ka = trans_a ? as[1] : as[2];
    const int kb = trans_b ? bs[2] : bs[1];
    const int nn = trans_b ? bs[1] : bs[2];
    if (ka != kb) throw ShapeMismatch("bmm: inner dims disagree");

    const std::size_t a_sz = static_cast<std::size_t>(as[1]) * as[2];
    const std::size_t b_sz = static_cast<std::size_t>(bs[1]) * bs[2];
    const std::size_t o_sz = static_cast<std::size_t>(m) * nn;
    const int lda = as[2], ldb = bs[2];

    Tensor out({g, m, nn});
    for (int i = 0; i < g; ++i)
        sgemm(trans_a, trans_b, m, nn, ka, 1.0f, a->value.data() + i * a_sz, lda,
              b->value.data() + i * b_sz, ldb, 0.0f, out.data() + i * o_sz, nn);

    return make_node(std::move(out), {a, b},
                     [a, b, g, m, nn, ka, trans_a, trans_b, a_sz, b_sz, o_sz, lda, ldb](Node& n) {
        for (int i = 0; i < g; ++i) {
            const float* gy = n.grad.data() + i * o_sz;
            const float* av = a->value.data() + i * a_sz;
            const float* bv = b->value.data() + i * b_sz;
            if (a->requires_grad) {
                float* ga = a->ensure_grad().data() + i * a_sz;
                // dA = dC B^T (or transposed variants)
                if (!trans_a)
                    sgemm(false, !trans_b, m, ka, nn, 1.0f, gy, nn, bv, ldb, 1.0f, ga, lda);
                else
                    sgemm(trans_b, true, ka, m, nn, 1.0f, bv, ldb, gy, nn, 1.0f, ga, lda);
            }
            if (b->requires_grad) {
                float* gb = b->ensure_grad().data() + i * b_sz;
                if (!trans_b)
                    sgemm(!trans_a, false, ka, nn, m, 1.0f, av, lda, gy, nn, 1.0f, gb, ldb);
                else
                    sgemm(true, trans_a, nn, ka, m, 1.0f, gy, nn, av, lda, 1.0f, gb, ldb);
            }
        }
    });
}

// ---------------------------------------------------------------------------
// Normalization and softmax
// ---------------------------------------------------------------------------

inline Var softmax_lastdim(const Var& a) {
    const int f = a->value.shape().back();
    const std::size_t rows = a->value.numel() / static_cast<std::size_t>(f);
    Tensor out = a->value;
    for (std::size_t r = 0; r < rows; ++r) {
        float* p = out.data() + r * f;
        float mx = p[0];
        for (int i = 1; i < f; ++i) mx = std::max(mx, p[i]);
        double sum = 0.0;
        for (int i = 0; i < f; ++i) {
            p[i] = std::exp(p[i] - mx);
            sum += p[i];
        }
        const float inv = static_cast<float>(1.0 / sum);
        for (int i = 0; i < f; ++i) p[i] *= inv;
    }
    return make_node(std::move(out), {a}, [a, rows, f](Node& n) {
        if (!a->requires_grad) return;
        Tensor& dst = a->ensure_grad();
        for (std::size_t r = 0; r < rows; ++r) {
            const float* y = n.value.data() + r * f;
            const float* gy = n.grad.data() + r * f;
            double dotv = 0.0;
            for (int i = 0; i < f; ++i) dotv += static_cast<double>(gy[i]) * y[i];
            float* gx = dst.data() + r * f;
            for (int i = 0; i < f; ++i)
                gx[i] += y[i] * (gy[i] - static_cast<float>(dotv));
        }
    });
}

/// Layer norm over the last dimension with affine parameters.
inline Var layer_norm(const Var& x, const Var& gamma, const Var& beta, float eps = 1e-5f) {
    const int f = x->value.shape().back();
    if (gamma->value.rank() != 1 || gamma->value.dim(0) != f || beta->value.rank() != 1 ||
        beta->value.dim(0) != f)
        throw ShapeMismatch("layer_norm: affine params must be [" + std::to_string(f) + "]");
    const std::size_t rows = x->value.numel() / static_cast<std::size_t>(f);

    Tensor out(x->value.shape());
    Tensor xhat(x->value.shape());
    Tensor inv_std({static_cast<int>(rows)});
    for (std::size_t r = 0; r < rows; ++r) {
        const float* p = x->value.data() + r * f;
        double mean = 0.0;
        for (int i = 0; i < f; ++i) mean += p[i];
        mean /= f;
        double var = 0.0;
        for (int i = 0; i < f; ++i) {
            const double d = p[i] - mean;
            var += d * d;
        }
        var /= f;
        const float istd = static_cast<float>(1.0 / std::sqrt(var + eps));
        inv_std[r] = istd;
        float* xh = xhat.data() + r * f;
        float* o = out.data() + r * f;
        for (int i = 0; i < f; ++i) {
            xh[i] = (p[i] - static_cast<float>(mean)) * istd;
            o[i] = xh[i] * gamma->value[i] + beta->value[i];
        }
    }

    return make_node(std::move(out), {x, gamma, beta},
                     [x, gamma, beta, rows, f, xhat = std::move(xhat),
                      inv_std = std::move(inv_std)](Node& n) {
        const float* gy = n.grad.data();
        if (gamma->requires_grad) {
            Tensor& gg = gamma->ensure_grad();
            for (std::size_t r = 0; r < rows; ++r)
                for (int i = 0; i < f; ++i) gg[i] += gy[r * f + i] * xhat[r * f + i];
        }
        if (beta->requires_grad) {
            Tensor& gb = beta->ensure_grad();
            for (std::size_t r = 0; r < rows; ++r)
                for (int i = 0; i < f; ++i) gb[i] += gy[r * f + i];
        }
        if (x->requires_grad) {
            Tensor& gx = x->ensure_grad();
            for (std::size_t r = 0; r < rows; ++r) {
                const float* xh = xhat.data() + r * f;
                double m1 = 0.0, m2 = 0.0;  // mean(dxhat), mean(dxhat * xhat)
                for (int i = 0; i < f; ++i) {
                    const double dxh = static_cast<double>(gy[r * f + i]) * gamma->value[i];
                    m1 += dxh;
                    m2 += dxh * xh[i];
                }
                m1 /= f;
                m2 /= f;
                for (int i = 0; i < f; ++i) {
                    const double dxh = static_cast<double>(gy[r * f + i]) * gamma->value[i];
                    gx[r * f + i] += static_cast<float>((dxh - m1 - xh[i] * m2) * inv_std[r]);
                }
            }
        }
    });
}

// ---------------------------------------------------------------------------
// Reductions and losses
// ---------------------------------------------------------------------------

inline Var mean_all(const Var& a) {
    double sum = 0.0;
    for (std::size_t i = 0; i < a->value.numel(); ++i) sum += a->value[i];
    const std::size_t n = a->value.numel();
    Tensor out({1});
    out[0] = static_cast<float>(sum / static_cast<double>(n));
    return make_node(std::move(out), {a}, [a, n](Node& nd) {
        if (!a->requires_grad) return;
        Tensor& dst = a->ensure_grad();
        const float g = nd.grad[0] / static_cast<float>(n);
        for (std::size_t i = 0; i < dst.numel(); ++i) dst[i] += g;
    });
}

inline Var sum_weighted(const Var& a, Tensor weights) {
    check_same_shape(a->value, weights, "sum_weighted");
    double sum = 0.0;
    for (std::size_t i = 0; i < a->value.numel(); ++i)
        sum += static_cast<double>(a->value[i]) * weights[i];
    Tensor out({1});
    out[0] = static_cast<float>(sum);
    return make_node(std::move(out), {a}, [a, w = std::move(weights)](Node& nd) {
        if (!a->requires_grad) return;
        Tensor& dst = a->ensure_grad();
        for (std::size_t i = 0; i < dst.numel(); ++i) dst[i] += nd.grad[0] * w[i];
    });
}

/// Mean absolute error. Subgradient at 0 is 0.
inline Var l1_loss(const Var& a, const Var& b) {
    check_same_shape(a->value, b->value, "l1_loss");
    const std::size_t n = a->value.numel();
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) sum += std::abs(a->value[i] - b->value[i]);
    Tensor out({1});
    out[0] = static_cast<float>(sum / static_cast<double>(n));
    return make_node(std::move(out), {a, b}, [a, b, n](Node& nd) {
        const float g = nd.grad[0] / static_cast<float>(n);
        float* ga = a->requires_grad ? a->ensure_grad().data() : nullptr;
        float* gb = b->requires_grad ? b->ensure_grad().data() : nullptr;
        for (std::size_t i = 0; i < n; ++i) {
            const float d = a->value[i] - b->value[i];
            const float s = d > 0.0f ? g : (d < 0.0f ? -g : 0.0f);
            if (ga) ga[i] += s;
            if (gb) gb[i] -= s;
        }
    });
}

/// KL divergence to the standard normal, averaged over the leading (batch)
/// dimension: mean_b 0.5 * sum_d(mu^2 + sigma^2 - log sigma^2 - 1).
inline Var kl_to_standard_normal(const Var& mu, const Var& log_var) {
    check_same_shape(mu->value, log_var->value, "kl_to_standard_normal");
    const auto& s = mu->value.shape();
    const int batch = s.empty() ? 1 : s[0];
    const std::size_t n = mu->value.numel();

    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double m = mu->value[i];
        const double lv = log_var->value[i];
        total += 0.5 * (m * m + std::exp(lv) - lv - 1.0);
    }
    Tensor out({1});
    out[0] = static_cast<float>(total / batch);
    return make_node(std::move(out), {mu, log_var}, [mu, log_var, batch, n](Node& nd) {
        const float g = nd.grad[0] / static_cast<float>(batch);
        if (mu->requires_grad) {
            Tensor& dst = mu->ensure_grad();
            for (std::size_t i = 0; i < n; ++i) dst[i] += g * mu->value[i];
        }
        if (log_var->requires_grad) {
            Tensor& dst = log_var->ensure_grad();
            for (std::size_t i = 0; i < n; ++i)
                dst[i] += g * 0.5f * (std::exp(log_var->value[i]) - 1.0f);
        }
    });
}

/// Replaces masked rows of tokens[N, D] with a single shared trainable token.
inline Var apply_mask_token(const Var& tokens, const std::vector<bool>& masked, const Var& token) {
    const auto& ts = tokens->value.shape();
    if (ts.size() != 2 || token->value.rank() != 1 || token->value.dim(0) != ts[1])
        throw ShapeMismatch("apply_mask_token: tokens [N,D] and token [D] required");
    const int n = ts[0], d = ts[1];
    if (static_cast<int>(masked.size()) != n)
        throw ShapeMismatch("apply_mask_token: mask length " + std::to_string(masked.size()) +
                            " vs N " + std::to_string(n));
    Tensor out = tokens->value;
    for (int i = 0; i < n; ++i)
        if (masked[i]) std::copy_n(token->value.data(), d, out.data() + static_cast<std::size_t>(i) * d);

    return make_node(std::move(out), {tokens, token}, [tokens, token, masked, n, d](Node& nd) {
        if (tokens->requires_grad) {
            Tensor& dst = tokens->ensure_grad();
            for (int i = 0; i < n; ++i)
                if (!masked[i])
                    for (int j = 0; j < d; ++j)
                        dst[static_cast<std::size_t>(i) * d + j] += nd.grad[static_cast<std::size_t>(i) * d + j];
        }
        if (token->requires_grad) {
            Tensor& dst = token->ensure_grad();
            for (int i = 0; i < n; ++i)
                if (masked[i])
                    for (int j = 0; j < d; ++j)
                        dst[j] += nd.grad[static_cast<std::size_t>(i) * d + j];
        }
    });
}

}  // namespace sdfc::nn
