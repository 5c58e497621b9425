#pragma once

#include "sdfc/nn/ops.hpp"

namespace sdfc::nn {

// ---------------------------------------------------------------------------
// conv3d: cross-correlation over [B, C, D, H, W] tensors, im2col + GEMM.
// ---------------------------------------------------------------------------

namespace detail {

/// Reusable per-thread scratch for im2col-style buffers (conv calls are hot
/// and the buffers run to megabytes).
inline float* scratch(std::size_t count, int slot) {
    thread_local std::vector<float> buf[2];
    auto& b = buf[slot];
    if (b.size() < count) b.resize(count);
    return b.data();
}

struct ConvDims {
    int batch, c_in, in_d, in_h, in_w;
    int c_out, k, stride, pad;
    int out_d, out_h, out_w;
    std::size_t in_spatial() const { return static_cast<std::size_t>(in_d) * in_h * in_w; }
    std::size_t out_spatial() const { return static_cast<std::size_t>(out_d) * out_h * out_w; }
    std::size_t col_rows() const { return static_cast<std::size_t>(c_in) * k * k * k; }
};

inline ConvDims conv_dims(const Tensor& x, const Tensor& w, int stride, int pad) {
    const auto& xs = x.shape();
    const auto& ws = w.shape();
    if (xs.size() != 5 || ws.size() != 5)
        throw ShapeMismatch("conv3d: need x[B,C,D,H,W] and w[Co,Ci,k,k,k], got " +
                            Tensor::shape_str(xs) + " and " + Tensor::shape_str(ws));
    if (ws[1] != xs[1])
        throw ShapeMismatch("conv3d: channel mismatch, x " + Tensor::shape_str(xs) + " vs w " +
                            Tensor::shape_str(ws));
    if (ws[2] != ws[3] || ws[3] != ws[4]) throw ShapeMismatch("conv3d: kernel must be cubic");
    ConvDims d;
    d.batch = xs[0];
    d.c_in = xs[1];
    d.in_d = xs[2];
    d.in_h = xs[3];
    d.in_w = xs[4];
    d.c_out = ws[0];
    d.k = ws[2];
    d.stride = stride;
    d.pad = pad;
    d.out_d = (d.in_d + 2 * pad - d.k) / stride + 1;
    d.out_h = (d.in_h + 2 * pad - d.k) / stride + 1;
    d.out_w = (d.in_w + 2 * pad - d.k) / stride + 1;
    if (d.out_d <= 0 || d.out_h <= 0 || d.out_w <= 0)
        throw ShapeMismatch("conv3d: non-positive output size");
    return d;
}

/// Unpacks one sample into the [Ci*k^3, L_out] column matrix.
inline void im2col(const float* x, const ConvDims& d, float* cols) {
    const std::size_t l = d.out_spatial();
    std::size_t row = 0;
    for (int ci = 0; ci < d.c_in; ++ci) {
        const float* xc = x + static_cast<std::size_t>(ci) * d.in_spatial();
        for (int kz = 0; kz < d.k; ++kz)
            for (int ky = 0; ky < d.k; ++ky)
                for (int kx = 0; kx < d.k; ++kx, ++row) {
                    float* out_row = cols + row * l;
                    std::size_t col = 0;
                    for (int oz = 0; oz < d.out_d; ++oz) {
                        const int iz = oz * d.stride + kz - d.pad;
                        const bool z_ok = iz >= 0 && iz < d.in_d;
                        for (int oy = 0; oy < d.out_h; ++oy) {
                            const int iy = oy * d.stride + ky - d.pad;
                            const bool zy_ok = z_ok && iy >= 0 && iy < d.in_h;
                            const float* src =
                                xc + (static_cast<std::size_t>(iz) * d.in_h + iy) * d.in_w;
                            for (int ox = 0; ox < d.out_w; ++ox, ++col) {
                                const int ix = ox * d.stride + kx - d.pad;
                                out_row[col] = (zy_ok && ix >= 0 && ix < d.in_w) ? src[ix] : 0.0f;
                            }
                        }
                    }
                }
    }
}

/// Scatter-add of a column matrix back into one sample (adjoint of im2col).
inline void col2im_add(const float* cols, const ConvDims& d, float* x) {
    const std::size_t l = d.out_spatial();
    std::size_t row = 0;
    for (int ci = 0; ci < d.c_in; ++ci) {
        float* xc = x + static_cast<std::size_t>(ci) * d.in_spatial();
        for (int kz = 0; kz < d.k; ++kz)
            for (int ky = 0; ky < d.k; ++ky)
                for (int kx = 0; kx < d.k; ++kx, ++row) {
                    const float* in_row = cols + row * l;
                    std::size_t col = 0;
                    for (int oz = 0; oz < d.out_d; ++oz) {
                        const int iz = oz * d.stride + kz - d.pad;
                        const bool z_ok = iz >= 0 && iz < d.in_d;
                        for (int oy = 0; oy < d.out_h; ++oy) {
                            const int iy = oy * d.stride + ky - d.pad;
                            const bool zy_ok = z_ok && iy >= 0 && iy < d.in_h;
                            float* dst = xc + (static_cast<std::size_t>(iz) * d.in_h + iy) * d.in_w;
                            for (int ox = 0; ox < d.out_w; ++ox, ++col) {
                                const int ix = ox * d.stride + kx - d.pad;
                                if (zy_ok && ix >= 0 && ix < d.in_w) dst[ix] += in_row[col];
                            }
                        }
                    }
                }
    }
}

}  // namespace detail

/// y[oz,oy,ox] += w * x[oz+dz, oy+dy, ox+dx] over the in-bounds region; the
/// inner x loop is contiguous and auto-vectorizes.
inline void axpy_shift(float* y, const float* x, float wv, int dd, int hh, int ww, int dz, int dy,
                       int dx) {
    const int z0 = std::max(0, -dz), z1 = std::min(dd, dd - dz);
    const int y0 = std::max(0, -dy), y1 = std::min(hh, hh - dy);
    const int x0 = std::max(0, -dx), x1 = std::min(ww, ww - dx);
    for (int z = z0; z < z1; ++z)
        for (int yy = y0; yy < y1; ++yy) {
            float* dst = y + (static_cast<std::size_t>(z) * hh + yy) * ww;
            const float* src = x + (static_cast<std::size_t>(z + dz) * hh + (yy + dy)) * ww + dx;
            for (int xx = x0; xx < x1; ++xx) dst[xx] += wv * src[xx];
        }
}

/// sum of y[oz,oy,ox] * x[oz+dz, ...] over the same region (weight gradient).
inline double dot_shift(const float* y, const float* x, int dd, int hh, int ww, int dz, int dy,
                        int dx) {
    const int z0 = std::max(0, -dz), z1 = std::min(dd, dd - dz);
    const int y0 = std::max(0, -dy), y1 = std::min(hh, hh - dy);
    const int x0 = std::max(0, -dx), x1 = std::min(ww, ww - dx);
    double acc = 0.0;
    for (int z = z0; z < z1; ++z)
        for (int yy = y0; yy < y1; ++yy) {
            const float* a = y + (static_cast<std::size_t>(z) * hh + yy) * ww;
            const float* b = x + (static_cast<std::size_t>(z + dz) * hh + (yy + dy)) * ww + dx;
            float part = 0.0f;
            for (int xx = x0; xx < x1; ++xx) part += a[xx] * b[xx];
            acc += part;
        }
    return acc;
}

namespace detail {

// Small-channel 3x3x3 stride-1 convolutions run faster as fused output
// stencils than as im2col + skinny GEMM.
inline bool use_direct_conv(const ConvDims& d) {
    return d.k == 3 && d.stride == 1 && d.pad == 1 && d.c_in * d.c_out <= 4096;
}

/// Copies every channel of one sample into a zero-halo buffer of side +2.
/// The halo realizes pad=1 exactly, so the stencil loops need no bounds
/// checks and always run full-width rows.
inline float* pad_channels(const float* x, int channels, int dd, int hh, int ww, int slot) {
    const int pd = dd + 2, ph = hh + 2, pw = ww + 2;
    const std::size_t pad_sp = static_cast<std::size_t>(pd) * ph * pw;
    float* buf = scratch(static_cast<std::size_t>(channels) * pad_sp, slot);
    std::fill(buf, buf + static_cast<std::size_t>(channels) * pad_sp, 0.0f);
    for (int c = 0; c < channels; ++c) {
        const float* src = x + static_cast<std::size_t>(c) * dd * hh * ww;
        float* dst = buf + static_cast<std::size_t>(c) * pad_sp;
        for (int z = 0; z < dd; ++z)
            for (int y = 0; y < hh; ++y)
                std::copy_n(src + (static_cast<std::size_t>(z) * hh + y) * ww, ww,
                            dst + (static_cast<std::size_t>(z + 1) * ph + (y + 1)) * pw + 1);
    }
    return buf;
}

/// y(+=)27-tap stencil over one padded input channel.
inline void stencil3_accumulate_padded(float* y, const float* xpad, const float* w27, int dd,
                                       int hh, int ww) {
    const int ph = hh + 2, pw = ww + 2;
    for (int oz = 0; oz < dd; ++oz)
        for (int oy = 0; oy < hh; ++oy) {
            float* yr = y + (static_cast<std::size_t>(oz) * hh + oy) * ww;
            const float* r0 = xpad + (static_cast<std::size_t>(oz) * ph + oy) * pw;
            const float* r1 = r0 + pw;
            const float* r2 = r1 + pw;
            const float* r3 = r0 + static_cast<std::size_t>(ph) * pw;
            const float* r4 = r3 + pw;
            const float* r5 = r4 + pw;
            const float* r6 = r3 + static_cast<std::size_t>(ph) * pw;
            const float* r7 = r6 + pw;
            const float* r8 = r7 + pw;
            for (int ox = 0; ox < ww; ++ox) {
                const float acc =
                    w27[0] * r0[ox] + w27[1] * r0[ox + 1] + w27[2] * r0[ox + 2] +
                    w27[3] * r1[ox] + w27[4] * r1[ox + 1] + w27[5] * r1[ox + 2] +
                    w27[6] * r2[ox] + w27[7] * r2[ox + 1] + w27[8] * r2[ox + 2] +
                    w27[9] * r3[ox] + w27[10] * r3[ox + 1] + w27[11] * r3[ox + 2] +
                    w27[12] * r4[ox] + w27[13] * r4[ox + 1] + w27[14] * r4[ox + 2] +
                    w27[15] * r5[ox] + w27[16] * r5[ox + 1] + w27[17] * r5[ox + 2] +
                    w27[18] * r6[ox] + w27[19] * r6[ox + 1] + w27[20] * r6[ox + 2] +
                    w27[21] * r7[ox] + w27[22] * r7[ox + 1] + w27[23] * r7[ox + 2] +
                    w27[24] * r8[ox] + w27[25] * r8[ox + 1] + w27[26] * r8[ox + 2];
                yr[ox] += acc;
            }
        }
}

inline void direct_conv_forward(const float* x, const float* w, const float* bias,
                                const ConvDims& d, float* y) {
    const std::size_t sp = d.in_spatial();
    const int pd = d.in_d + 2, ph = d.in_h + 2, pw = d.in_w + 2;
    const std::size_t pad_sp = static_cast<std::size_t>(pd) * ph * pw;
    const float* xpad = pad_channels(x, d.c_in, d.in_d, d.in_h, d.in_w, 1);
    for (int co = 0; co < d.c_out; ++co) {
        float* yc = y + static_cast<std::size_t>(co) * sp;
        const float bv = bias ? bias[co] : 0.0f;
        for (std::size_t i = 0; i < sp; ++i) yc[i] = bv;
        for (int ci = 0; ci < d.c_in; ++ci)
            stencil3_accumulate_padded(yc, xpad + static_cast<std::size_t>(ci) * pad_sp,
                                       w + (static_cast<std::size_t>(co) * d.c_in + ci) * 27,
                                       d.in_d, d.in_h, d.in_w);
    }
}

/// Weight gradient for one (co, ci) pair over the padded input: nine row
/// passes with three shifted accumulators each.
inline void stencil3_weight_grad_padded(const float* gy, const float* xpad, float* dw27, int dd,
                                        int hh, int ww) {
    const int ph = hh + 2, pw = ww + 2;
    double acc[27] = {};
    for (int oz = 0; oz < dd; ++oz)
        for (int oy = 0; oy < hh; ++oy) {
            const float* gr = gy + (static_cast<std::size_t>(oz) * hh + oy) * ww;
            for (int ty = 0; ty < 9; ++ty) {
                const float* src =
                    xpad + (static_cast<std::size_t>(oz + ty / 3) * ph + (oy + ty % 3)) * pw;
                float a0 = 0.0f, a1 = 0.0f, a2 = 0.0f;
#pragma omp simd reduction(+ : a0, a1, a2)
                for (int ox = 0; ox < ww; ++ox) {
                    const float g = gr[ox];
                    a0 += g * src[ox];
                    a1 += g * src[ox + 1];
                    a2 += g * src[ox + 2];
                }
                acc[3 * ty] += a0;
                acc[3 * ty + 1] += a1;
                acc[3 * ty + 2] += a2;
            }
        }
    for (int t = 0; t < 27; ++t) dw27[t] += static_cast<float>(acc[t]);
}

}  // namespace detail

inline Var conv3d(const Var& x, const Var& w, const Var& b, int stride, int pad) {
    const detail::ConvDims d = detail::conv_dims(x->value, w->value, stride, pad);
    if (b && (b->value.rank() != 1 || b->value.dim(0) != d.c_out))
        throw ShapeMismatch("conv3d: bias must be [" + std::to_string(d.c_out) + "]");

    const std::size_t l = d.out_spatial();
    const std::size_t rows = d.col_rows();
    const bool pointwise = d.k == 1 && d.stride == 1 && d.pad == 0;
    const bool direct = detail::use_direct_conv(d);
    Tensor out({d.batch, d.c_out, d.out_d, d.out_h, d.out_w});

    for (int bi = 0; bi < d.batch; ++bi) {
        const float* xs = x->value.data() + bi * d.c_in * d.in_spatial();
        float* y = out.data() + bi * d.c_out * l;
        if (direct) {
            detail::direct_conv_forward(xs, w->value.data(), b ? b->value.data() : nullptr, d, y);
            continue;
        }
        if (pointwise) {
            // y = W[Co,Ci] x[Ci,L]; no unpacking needed
            sgemm(false, false, d.c_out, static_cast<int>(l), d.c_in, 1.0f, w->value.data(),
                  d.c_in, xs, static_cast<int>(l), 0.0f, y, static_cast<int>(l));
        } else {
            float* cols = detail::scratch(rows * l, 0);
            detail::im2col(xs, d, cols);
            sgemm(false, false, d.c_out, static_cast<int>(l), static_cast<int>(rows), 1.0f,
                  w->value.data(), static_cast<int>(rows), cols, static_cast<int>(l), 0.0f, y,
                  static_cast<int>(l));
        }
        if (b) {
            for (int co = 0; co < d.c_out; ++co) {
                const float bias = b->value[co];
                float* yc = y + static_cast<std::size_t>(co) * l;
                for (std::size_t i = 0; i < l; ++i) yc[i] += bias;
            }
        }
    }

    std::vector<Var> parents = {x, w};
    if (b) parents.push_back(b);
    return make_node(std::move(out), std::move(parents), [x, w, b, d, pointwise, direct](Node& n) {
        const std::size_t l = d.out_spatial();
        const std::size_t rows = d.col_rows();
        const std::size_t in_sp = d.in_spatial();
        float* gx = x->requires_grad ? x->ensure_grad().data() : nullptr;
        float* gw = w->requires_grad ? w->ensure_grad().data() : nullptr;
        float* gb = (b && b->requires_grad) ? b->ensure_grad().data() : nullptr;

        for (int bi = 0; bi < d.batch; ++bi) {
            const float* gy = n.grad.data() + bi * d.c_out * l;
            const float* xs = x->value.data() + bi * d.c_in * in_sp;
            if (direct) {
                const std::size_t pad_sp = static_cast<std::size_t>(d.in_d + 2) * (d.in_h + 2) *
                                           (d.in_w + 2);
                const float* gypad = detail::pad_channels(gy, d.c_out, d.in_d, d.in_h, d.in_w, 0);
                if (gx) {
                    float* gxs = gx + bi * d.c_in * in_sp;
                    for (int co = 0; co < d.c_out; ++co) {
                        const float* gyp = gypad + static_cast<std::size_t>(co) * pad_sp;
                        for (int ci = 0; ci < d.c_in; ++ci) {
                            const float* wk =
                                w->value.data() + (static_cast<std::size_t>(co) * d.c_in + ci) * 27;
                            // adjoint: mirrored kernel
                            float wf[27];
                            for (int t = 0; t < 27; ++t) wf[t] = wk[26 - t];
                            detail::stencil3_accumulate_padded(
                                gxs + static_cast<std::size_t>(ci) * in_sp, gyp, wf, d.in_d,
                                d.in_h, d.in_w);
                        }
                    }
                }
                if (gw) {
                    const float* xpad =
                        detail::pad_channels(xs, d.c_in, d.in_d, d.in_h, d.in_w, 1);
                    for (int co = 0; co < d.c_out; ++co) {
                        const float* gyc = gy + static_cast<std::size_t>(co) * l;
                        for (int ci = 0; ci < d.c_in; ++ci)
                            detail::stencil3_weight_grad_padded(
                                gyc, xpad + static_cast<std::size_t>(ci) * pad_sp,
                                gw + (static_cast<std::size_t>(co) * d.c_in + ci) * 27, d.in_d,
                                d.in_h, d.in_w);
                    }
                }
            } else if (pointwise) {
                if (gx)
                    sgemm(true, false, d.c_in, static_cast<int>(l), d.c_out, 1.0f, w->value.data(),
                          d.c_in, gy, static_cast<int>(l), 1.0f, gx + bi * d.c_in * in_sp,
                          static_cast<int>(l));
                if (gw)
                    sgemm(false, true, d.c_out, d.c_in, static_cast<int>(l), 1.0f, gy,
                          static_cast<int>(l), xs, static_cast<int>(l), 1.0f, gw, d.c_in);
            } else {
                float* cols = detail::scratch(rows * l, 0);
                if (gx) {
                    // dcols = W^T dy, then scatter back into dx
                    sgemm(true, false, static_cast<int>(rows), static_cast<int>(l), d.c_out, 1.0f,
                          w->value.data(), static_cast<int>(rows), gy, static_cast<int>(l), 0.0f,
                          cols, static_cast<int>(l));
                    detail::col2im_add(cols, d, gx + bi * d.c_in * in_sp);
                }
                if (gw) {
                    detail::im2col(xs, d, cols);
                    sgemm(false, true, d.c_out, static_cast<int>(rows), static_cast<int>(l), 1.0f,
                          gy, static_cast<int>(l), cols, static_cast<int>(l), 1.0f, gw,
                          static_cast<int>(rows));
                }
            }
            if (gb) {
                for (int co = 0; co < d.c_out; ++co) {
                    const float* yc = gy + static_cast<std::size_t>(co) * l;
                    double s = 0.0;
                    for (std::size_t i = 0; i < l; ++i) s += yc[i];
                    gb[co] += static_cast<float>(s);
                }
            }
        }
    });
}

// ---------------------------------------------------------------------------
// conv_transpose3d: weight layout [Ci, Co, k, k, k] (input channels first).
// Output side = (in - 1) * stride - 2 * pad + k + output_padding.
// ---------------------------------------------------------------------------

namespace detail {

struct ConvTDims {
    int batch, c_in, in_d, in_h, in_w;
    int c_out, k, stride, pad, out_pad;
    int out_d, out_h, out_w;
    std::size_t in_spatial() const { return static_cast<std::size_t>(in_d) * in_h * in_w; }
    std::size_t out_spatial() const { return static_cast<std::size_t>(out_d) * out_h * out_w; }
    std::size_t col_rows() const { return static_cast<std::size_t>(c_out) * k * k * k; }
};

inline ConvTDims convt_dims(const Tensor& x, const Tensor& w, int stride, int pad, int out_pad) {
    const auto& xs = x.shape();
    const auto& ws = w.shape();
    if (xs.size() != 5 || ws.size() != 5)
        throw ShapeMismatch("conv_transpose3d: need x[B,C,D,H,W], w[Ci,Co,k,k,k]");
    if (ws[0] != xs[1])
        throw ShapeMismatch("conv_transpose3d: channel mismatch, x " + Tensor::shape_str(xs) +
                            " vs w " + Tensor::shape_str(ws));
    ConvTDims d;
    d.batch = xs[0];
    d.c_in = xs[1];
    d.in_d = xs[2];
    d.in_h = xs[3];
    d.in_w = xs[4];
    d.c_out = ws[1];
    d.k = ws[2];
    d.stride = stride;
    d.pad = pad;
    d.out_pad = out_pad;
    d.out_d = (d.in_d - 1) * stride - 2 * pad + d.k + out_pad;
    d.out_h = (d.in_h - 1) * stride - 2 * pad + d.k + out_pad;
    d.out_w = (d.in_w - 1) * stride - 2 * pad + d.k + out_pad;
    if (d.out_d <= 0) throw ShapeMismatch("conv_transpose3d: non-positive output size");
    return d;
}

/// Scatters cols[Co*k^3, L_in] into the output volume of one sample.
inline void colt_scatter_add(const float* cols, const ConvTDims& d, float* y) {
    const std::size_t l = d.in_spatial();
    std::size_t row = 0;
    for (int co = 0; co < d.c_out; ++co) {
        float* yc = y + static_cast<std::size_t>(co) * d.out_spatial();
        for (int kz = 0; kz < d.k; ++kz)
            for (int ky = 0; ky < d.k; ++ky)
                for (int kx = 0; kx < d.k; ++kx, ++row) {
                    const float* in_row = cols + row * l;
                    std::size_t col = 0;
                    for (int iz = 0; iz < d.in_d; ++iz) {
                        const int oz = iz * d.stride + kz - d.pad;
                        const bool z_ok = oz >= 0 && oz < d.out_d;
                        for (int iy = 0; iy < d.in_h; ++iy) {
                            const int oy = iy * d.stride + ky - d.pad;
                            const bool zy_ok = z_ok && oy >= 0 && oy < d.out_h;
                            float* dst = yc + (static_cast<std::size_t>(oz) * d.out_h + oy) * d.out_w;
                            for (int ix = 0; ix < d.in_w; ++ix, ++col) {
                                const int ox = ix * d.stride + kx - d.pad;
                                if (zy_ok && ox >= 0 && ox < d.out_w) dst[ox] += in_row[col];
                            }
                        }
                    }
                }
    }
}

/// Gathers from the output volume back into cols (adjoint of colt_scatter_add).
inline void colt_gather(const float* y, const ConvTDims& d, float* cols) {
    const std::size_t l = d.in_spatial();
    std::size_t row = 0;
    for (int co = 0; co < d.c_out; ++co) {
        const float* yc = y + static_cast<std::size_t>(co) * d.out_spatial();
        for (int kz = 0; kz < d.k; ++kz)
            for (int ky = 0; ky < d.k; ++ky)
                for (int kx = 0; kx < d.k; ++kx, ++row) {
                    float* out_row = cols + row * l;
                    std::size_t col = 0;
                    for (int iz = 0; iz < d.in_d; ++iz) {
                        const int oz = iz * d.stride + kz - d.pad;
                        const bool z_ok = oz >= 0 && oz < d.out_d;
                        for (int iy = 0; iy < d.in_h; ++iy) {
                            const int oy = iy * d.stride + ky - d.pad;
                            const bool zy_ok = z_ok && oy >= 0 && oy < d.out_h;
                            const float* src =
                                yc + (static_cast<std::size_t>(oz) * d.out_h + oy) * d.out_w;
                            for (int ix = 0; ix < d.in_w; ++ix, ++col) {
                                const int ox = ix * d.stride + kx - d.pad;
                                out_row[col] = (zy_ok && ox >= 0 && ox < d.out_w) ? src[ox] : 0.0f;
                            }
                        }
                    }
                }
    }
}

}  // namespace detail

namespace detail {

// The upsampling DecoderLayer configuration (k=3, s=2, p=1, op=1) gets a fast
// path: a tall [L, Co*27] GEMM followed by a per-voxel scatter. Only taps with
// index 0 can fall outside the output (at input coordinate 0), which keeps the
// scatter branch-light.
inline bool convt_fast(const ConvTDims& d) {
    return d.k == 3 && d.stride == 2 && d.pad == 1 && d.out_pad == 1;
}

inline void convt_tap_offsets(const ConvTDims& d, std::ptrdiff_t* rel) {
    for (int t = 0; t < 27; ++t) {
        const int tz = t / 9, ty = (t / 3) % 3, tx = t % 3;
        rel[t] = (static_cast<std::ptrdiff_t>(tz) * d.out_h + ty) * d.out_w + tx;
    }
}

inline void convt_fast_scatter(const float* cols2, const ConvTDims& d, float* y) {
    const int ck = d.c_out * 27;
    const std::size_t out_sp = d.out_spatial();
    std::ptrdiff_t rel[27];
    convt_tap_offsets(d, rel);
    std::size_t i = 0;
    for (int iz = 0; iz < d.in_d; ++iz)
        for (int iy = 0; iy < d.in_h; ++iy)
            for (int ix = 0; ix < d.in_w; ++ix, ++i) {
                const float* row = cols2 + i * ck;
                const std::ptrdiff_t base =
                    (static_cast<std::ptrdiff_t>(2 * iz - 1) * d.out_h + (2 * iy - 1)) * d.out_w +
                    (2 * ix - 1);
                const bool interior = iz > 0 && iy > 0 && ix > 0;
                for (int co = 0; co < d.c_out; ++co) {
                    float* yc = y + static_cast<std::size_t>(co) * out_sp + base;
                    const float* wrow = row + co * 27;
                    if (interior) {
                        for (int t = 0; t < 27; ++t) yc[rel[t]] += wrow[t];
                    } else {
                        for (int t = 0; t < 27; ++t) {
                            if ((iz == 0 && t < 9) || (iy == 0 && (t / 3) % 3 == 0) ||
                                (ix == 0 && t % 3 == 0))
                                continue;
                            yc[rel[t]] += wrow[t];
                        }
                    }
                }
            }
}

inline void convt_fast_gather(const float* gy, const ConvTDims& d, float* cols2) {
    const int ck = d.c_out * 27;
    const std::size_t out_sp = d.out_spatial();
    std::ptrdiff_t rel[27];
    convt_tap_offsets(d, rel);
    std::size_t i = 0;
    for (int iz = 0; iz < d.in_d; ++iz)
        for (int iy = 0; iy < d.in_h; ++iy)
            for (int ix = 0; ix < d.in_w; ++ix, ++i) {
                float* row = cols2 + i * ck;
                const std::ptrdiff_t base =
                    (static_cast<std::ptrdiff_t>(2 * iz - 1) * d.out_h + (2 * iy - 1)) * d.out_w +
                    (2 * ix - 1);
                const bool interior = iz > 0 && iy > 0 && ix > 0;
                for (int co = 0; co < d.c_out; ++co) {
                    const float* yc = gy + static_cast<std::size_t>(co) * out_sp + base;
                    float* wrow = row + co * 27;
                    if (interior) {
                        for (int t = 0; t < 27; ++t) wrow[t] = yc[rel[t]];
                    } else {
                        for (int t = 0; t < 27; ++t) {
                            if ((iz == 0 && t < 9) || (iy == 0 && (t / 3) % 3 == 0) ||
                                (ix == 0 && t % 3 == 0)) {
                                wrow[t] = 0.0f;
                                continue;
                            }
                            wrow[t] = yc[rel[t]];
                        }
                    }
                }
            }
}

}  // namespace detail

inline Var conv_transpose3d(const Var& x, const Var& w, const Var& b, int stride, int pad,
                            int output_padding) {
    const detail::ConvTDims d = detail::convt_dims(x->value, w->value, stride, pad, output_padding);
    if (b && (b->value.rank() != 1 || b->value.dim(0) != d.c_out))
        throw ShapeMismatch("conv_transpose3d: bias must be [" + std::to_string(d.c_out) + "]");

    const std::size_t l = d.in_spatial();
    const std::size_t rows = d.col_rows();
    const bool fast = detail::convt_fast(d);
    Tensor out({d.batch, d.c_out, d.out_d, d.out_h, d.out_w});
    float* cols = detail::scratch(rows * l, 0);

    for (int bi = 0; bi < d.batch; ++bi) {
        float* y = out.data() + bi * d.c_out * d.out_spatial();
        if (fast) {
            // cols2[L, Co*27] = X^T W  (tall GEMM), then scatter
            sgemm(true, false, static_cast<int>(l), static_cast<int>(rows), d.c_in, 1.0f,
                  x->value.data() + bi * d.c_in * l, static_cast<int>(l), w->value.data(),
                  static_cast<int>(rows), 0.0f, cols, static_cast<int>(rows));
            detail::convt_fast_scatter(cols, d, y);
        } else {
            // cols = W^T x  with W viewed as [Ci, Co*k^3]
            sgemm(true, false, static_cast<int>(rows), static_cast<int>(l), d.c_in, 1.0f,
                  w->value.data(), static_cast<int>(rows), x->value.data() + bi * d.c_in * l,
                  static_cast<int>(l), 0.0f, cols, static_cast<int>(l));
            detail::colt_scatter_add(cols, d, y);
        }
        if (b) {
            for (int co = 0; co < d.c_out; ++co) {
                const float bias = b->value[co];
                float* yc = y + static_cast<std::size_t>(co) * d.out_spatial();
                for (std::size_t i = 0; i < d.out_spatial(); ++i) yc[i] += bias;
            }
        }
    }

    std::vector<Var> parents = {x, w};
    if (b) parents.push_back(b);
    return make_node(std::move(out), std::move(parents), [x, w, b, d, fast](Node& n) {
        const std::size_t l = d.in_spatial();
        const std::size_t rows = d.col_rows();
        float* cols = detail::scratch(rows * l, 0);
        float* gx = x->requires_grad ? x->ensure_grad().data() : nullptr;
        float* gw = w->requires_grad ? w->ensure_grad().data() : nullptr;
        float* gb = (b && b->requires_grad) ? b->ensure_grad().data() : nullptr;

        for (int bi = 0; bi < d.batch; ++bi) {
            const float* gy = n.grad.data() + bi * d.c_out * d.out_spatial();
            if (fast) {
                // dcols2[L, Co*27] gathered from dy, then two GEMMs
                detail::convt_fast_gather(gy, d, cols);
                if (gx)
                    sgemm(false, true, d.c_in, static_cast<int>(l), static_cast<int>(rows), 1.0f,
                          w->value.data(), static_cast<int>(rows), cols, static_cast<int>(rows),
                          1.0f, gx + bi * d.c_in * l, static_cast<int>(l));
                if (gw)
                    sgemm(false, false, d.c_in, static_cast<int>(rows), static_cast<int>(l), 1.0f,
                          x->value.data() + bi * d.c_in * l, static_cast<int>(l), cols,
                          static_cast<int>(rows), 1.0f, gw, static_cast<int>(rows));
            } else {
                detail::colt_gather(gy, d, cols);
                if (gx) {
                    // dx = W dcols
                    sgemm(false, false, d.c_in, static_cast<int>(l), static_cast<int>(rows), 1.0f,
                          w->value.data(), static_cast<int>(rows), cols, static_cast<int>(l),
                          1.0f, gx + bi * d.c_in * l, static_cast<int>(l));
                }
                if (gw) {
                    // dW += x dcols^T
                    sgemm(false, true, d.c_in, static_cast<int>(rows), static_cast<int>(l), 1.0f,
                          x->value.data() + bi * d.c_in * l, static_cast<int>(l), cols,
                          static_cast<int>(l), 1.0f, gw, static_cast<int>(rows));
                }
            }
            if (gb) {
                for (int co = 0; co < d.c_out; ++co) {
                    const float* yc = gy + static_cast<std::size_t>(co) * d.out_spatial();
                    double s = 0.0;
                    for (std::size_t i = 0; i < d.out_spatial(); ++i) s += yc[i];
                    gb[co] += static_cast<float>(s);
                }
            }
        }
    });
}

// ---------------------------------------------------------------------------
// Pooling / upsampling
// ---------------------------------------------------------------------------

/// 2x2x2 max pooling with stride 2 (floor mode).
inline Var max_pool3d(const Var& x) {
    const auto& xs = x->value.shape();
    if (xs.size() != 5) throw ShapeMismatch("max_pool3d: need [B,C,D,H,W]");
    const int batch = xs[0], c = xs[1], in_d = xs[2], in_h = xs[3], in_w = xs[4];
    const int od = in_d / 2, oh = in_h / 2, ow = in_w / 2;
    if (od == 0 || oh == 0 || ow == 0) throw ShapeMismatch("max_pool3d: input too small");

    Tensor out({batch, c, od, oh, ow});
    std::vector<std::uint32_t> argmax(out.numel());
    const std::size_t in_sp = static_cast<std::size_t>(in_d) * in_h * in_w;

    std::size_t o = 0;
    for (int bc = 0; bc < batch * c; ++bc) {
        const float* xin = x->value.data() + bc * in_sp;
        for (int z = 0; z < od; ++z)
            for (int y = 0; y < oh; ++y)
                for (int xx = 0; xx < ow; ++xx, ++o) {
                    float best = -std::numeric_limits<float>::infinity();
                    std::uint32_t best_at = 0;
                    for (int dz = 0; dz < 2; ++dz)
                        for (int dy = 0; dy < 2; ++dy)
                            for (int dx = 0; dx < 2; ++dx) {
                                const std::size_t idx =
                                    (static_cast<std::size_t>(2 * z + dz) * in_h + (2 * y + dy)) *
                                        in_w +
                                    (2 * xx + dx);
                                if (xin[idx] > best) {
                                    best = xin[idx];
                                    best_at = static_cast<std::uint32_t>(idx);
                                }
                            }
                    out[o] = best;
                    argmax[o] = best_at;
                }
    }

    const std::size_t out_sp = static_cast<std::size_t>(od) * oh * ow;
    return make_node(std::move(out), {x},
                     [x, argmax = std::move(argmax), batch, c, in_sp, out_sp](Node& n) {
        if (!x->requires_grad) return;
        Tensor& dst = x->ensure_grad();
        for (int bc = 0; bc < batch * c; ++bc) {
            float* gx = dst.data() + bc * in_sp;
            const float* gy = n.grad.data() + bc * out_sp;
            const std::uint32_t* am = argmax.data() + bc * out_sp;
            for (std::size_t i = 0; i < out_sp; ++i) gx[am[i]] += gy[i];
        }
    });
}

/// Trilinear x2 upsampling, align_corners = false: source coordinate of output
/// index o is (o + 0.5) / 2 - 0.5, clamped at the borders.
inline Var upsample_trilinear2x(const Var& x) {
    const auto& xs = x->value.shape();
    if (xs.size() != 5) throw ShapeMismatch("upsample_trilinear2x: need [B,C,D,H,W]");
    const int batch = xs[0], c = xs[1], in_d = xs[2], in_h = xs[3], in_w = xs[4];
    const int od = in_d * 2, oh = in_h * 2, ow = in_w * 2;

    // Per-axis interpolation stencils (lo index, hi index, hi weight).
    struct Stencil {
        int lo, hi;
        float t;
    };
    auto make_stencils = [](int out_n, int in_n) {
        std::vector<Stencil> s(out_n);
        for (int o = 0; o < out_n; ++o) {
            const double src = (o + 0.5) / 2.0 - 0.5;
            double fl = std::floor(src);
            double t = src - fl;
            int lo = static_cast<int>(fl);
            int hi = lo + 1;
            if (lo < 0) { lo = 0; hi = 0; t = 0.0; }
            if (hi >= in_n) { hi = in_n - 1; lo = in_n - 1; t = 0.0; }
            s[o] = {lo, hi, static_cast<float>(t)};
        }
        return s;
    };
    const auto sz = make_stencils(od, in_d);
    const auto sy = make_stencils(oh, in_h);
    const auto sx = make_stencils(ow, in_w);

    const std::size_t in_sp = static_cast<std::size_t>(in_d) * in_h * in_w;
    const std::size_t out_sp = static_cast<std::size_t>(od) * oh * ow;
    Tensor out({batch, c, od, oh, ow});

    for (int bc = 0; bc < batch * c; ++bc) {
        const float* xin = x->value.data() + bc * in_sp;
        float* y = out.data() + bc * out_sp;
        std::size_t o = 0;
        for (int z = 0; z < od; ++z) {
            const auto& wz = sz[z];
            const float z1 = wz.t, z0 = 1.0f - wz.t;
            for (int yy = 0; yy < oh; ++yy) {
                const auto& wy = sy[yy];
                const float y1 = wy.t, y0 = 1.0f - wy.t;
                const float* r00 = xin + (static_cast<std::size_t>(wz.lo) * in_h + wy.lo) * in_w;
                const float* r01 = xin + (static_cast<std::size_t>(wz.lo) * in_h + wy.hi) * in_w;
                const float* r10 = xin + (static_cast<std::size_t>(wz.hi) * in_h + wy.lo) * in_w;
                const float* r11 = xin + (static_cast<std::size_t>(wz.hi) * in_h + wy.hi) * in_w;
                const float w00 = z0 * y0, w01 = z0 * y1, w10 = z1 * y0, w11 = z1 * y1;
                for (int xx = 0; xx < ow; ++xx, ++o) {
                    const auto& wx = sx[xx];
                    const float x1 = wx.t, x0 = 1.0f - wx.t;
                    const float plane_lo = w00 * r00[wx.lo] + w01 * r01[wx.lo] +
                                           w10 * r10[wx.lo] + w11 * r11[wx.lo];
                    const float plane_hi = w00 * r00[wx.hi] + w01 * r01[wx.hi] +
                                           w10 * r10[wx.hi] + w11 * r11[wx.hi];
                    y[o] = x0 * plane_lo + x1 * plane_hi;
                }
            }
        }
    }

    return make_node(std::move(out), {x}, [x, sz, sy, sx, batch, c, in_sp, out_sp, in_h, in_w, od, oh, ow](Node& n) {
        if (!x->requires_grad) return;
        Tensor& dst = x->ensure_grad();
        for (int bc = 0; bc < batch * c; ++bc) {
            float* gx = dst.data() + bc * in_sp;
            const float* gy = n.grad.data() + bc * out_sp;
            std::size_t o = 0;
            for (int z = 0; z < od; ++z) {
                const auto& wz = sz[z];
                const float z1 = wz.t, z0 = 1.0f - wz.t;
                for (int yy = 0; yy < oh; ++yy) {
                    const auto& wy = sy[yy];
                    const float y1 = wy.t, y0 = 1.0f - wy.t;
                    float* r00 = gx + (static_cast<std::size_t>(wz.lo) * in_h + wy.lo) * in_w;
                    float* r01 = gx + (static_cast<std::size_t>(wz.lo) * in_h + wy.hi) * in_w;
                    float* r10 = gx + (static_cast<std::size_t>(wz.hi) * in_h + wy.lo) * in_w;
                    float* r11 = gx + (static_cast<std::size_t>(wz.hi) * in_h + wy.hi) * in_w;
                    const float w00 = z0 * y0, w01 = z0 * y1, w10 = z1 * y0, w11 = z1 * y1;
                    for (int xx = 0; xx < ow; ++xx, ++o) {
                        const auto& wx = sx[xx];
                        const float g = gy[o];
                        const float glo = g * (1.0f - wx.t), ghi = g * wx.t;
                        r00[wx.lo] += w00 * glo;
                        r01[wx.lo] += w01 * glo;
                        r10[wx.lo] += w10 * glo;
                        r11[wx.lo] += w11 * glo;
                        r00[wx.hi] += w00 * ghi;
                        r01[wx.hi] += w01 * ghi;
                        r10[wx.hi] += w10 * ghi;
                        r11[wx.hi] += w11 * ghi;
                    }
                }
            }
        }
    });
}

// ---------------------------------------------------------------------------
// Batch norm (3d): per-channel statistics over batch x spatial.
// ---------------------------------------------------------------------------

/// Running statistics owned by the model, updated only in training mode.
struct BatchNormState {
    Tensor running_mean;
    Tensor running_var;

    explicit BatchNormState(int channels)
        : running_mean({channels}, 0.0f), running_var({channels}, 1.0f) {}
    BatchNormState() = default;
};

inline Var batch_norm3d(const Var& x, const Var& gamma, const Var& beta, BatchNormState& state,
                        bool training, float momentum = 0.1f, float eps = 1e-5f) {
    const auto& xs = x->value.shape();
    if (xs.size() != 5) throw ShapeMismatch("batch_norm3d: need [B,C,D,H,W]");
    const int batch = xs[0], c = xs[1];
    const std::size_t sp = static_cast<std::size_t>(xs[2]) * xs[3] * xs[4];
    if (gamma->value.numel() != static_cast<std::size_t>(c) ||
        beta->value.numel() != static_cast<std::size_t>(c) ||
        state.running_mean.numel() != static_cast<std::size_t>(c))
        throw ShapeMismatch("batch_norm3d: parameter channel mismatch");
    if (training && batch < 2)
        throw InvalidBatch("batch_norm3d: training mode requires batch > 1, got " +
                           std::to_string(batch));

    const std::size_t n = static_cast<std::size_t>(batch) * sp;
    Tensor mean({c}), var({c});

    if (training) {
        for (int ch = 0; ch < c; ++ch) {
            double m = 0.0;
            for (int bi = 0; bi < batch; ++bi) {
                const float* p = x->value.data() + (static_cast<std::size_t>(bi) * c + ch) * sp;
                for (std::size_t i = 0; i < sp; ++i) m += p[i];
            }
            m /= static_cast<double>(n);
            double v = 0.0;
            for (int bi = 0; bi < batch; ++bi) {
                const float* p = x->value.data() + (static_cast<std::size_t>(bi) * c + ch) * sp;
                for (std::size_t i = 0; i < sp; ++i) {
                    const double dd = p[i] - m;
                    v += dd * dd;
                }
            }
            v /= static_cast<double>(n);
            mean[ch] = static_cast<float>(m);
            var[ch] = static_cast<float>(v);
            // unbiased variance feeds the running estimate
            const double unbiased = n > 1 ? v * static_cast<double>(n) / static_cast<double>(n - 1) : v;
            state.running_mean[ch] =
                (1.0f - momentum) * state.running_mean[ch] + momentum * static_cast<float>(m);
            state.running_var[ch] =
                (1.0f - momentum) * state.running_var[ch] + momentum * static_cast<float>(unbiased);
        }
    } else {
        mean = state.running_mean;
        var = state.running_var;
    }

    Tensor out(xs);
    Tensor xhat(xs);
    std::vector<float> inv_std(c);
    for (int ch = 0; ch < c; ++ch)
        inv_std[ch] = 1.0f / std::sqrt(var[ch] + eps);

    for (int bi = 0; bi < batch; ++bi)
        for (int ch = 0; ch < c; ++ch) {
            const float* p = x->value.data() + (static_cast<std::size_t>(bi) * c + ch) * sp;
            float* xh = xhat.data() + (static_cast<std::size_t>(bi) * c + ch) * sp;
            float* y = out.data() + (static_cast<std::size_t>(bi) * c + ch) * sp;
            const float m = mean[ch], istd = inv_std[ch], g = gamma->value[ch], bt = beta->value[ch];
            for (std::size_t i = 0; i < sp; ++i) {
                xh[i] = (p[i] - m) * istd;
                y[i] = xh[i] * g + bt;
            }
        }

    return make_node(std::move(out), {x, gamma, beta},
                     [x, gamma, beta, batch, c, sp, n, training,
                      xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& nd) {
        const float* gy = nd.grad.data();
        Tensor dgamma({c}), dbeta({c});
        for (int bi = 0; bi < batch; ++bi)
            for (int ch = 0; ch < c; ++ch) {
                const float* g = gy + (static_cast<std::size_t>(bi) * c + ch) * sp;
                const float* xh = xhat.data() + (static_cast<std::size_t>(bi) * c + ch) * sp;
                double sg = 0.0, sgx = 0.0;
                for (std::size_t i = 0; i < sp; ++i) {
                    sg += g[i];
                    sgx += static_cast<double>(g[i]) * xh[i];
                }
                dbeta[ch] += static_cast<float>(sg);
                dgamma[ch] += static_cast<float>(sgx);
            }
        if (gamma->requires_grad) gamma->accumulate(dgamma);
        if (beta->requires_grad) beta->accumulate(dbeta);
        if (!x->requires_grad) return;

        Tensor& dst = x->ensure_grad();
        if (training) {
            // dx = (gamma * istd / n) * (n*dy - sum(dy) - xhat * sum(dy*xhat))
            for (int bi = 0; bi < batch; ++bi)
                for (int ch = 0; ch < c; ++ch) {
                    const float* g = gy + (static_cast<std::size_t>(bi) * c + ch) * sp;
                    const float* xh = xhat.data() + (static_cast<std::size_t>(bi) * c + ch) * sp;
                    float* gx = dst.data() + (static_cast<std::size_t>(bi) * c + ch) * sp;
                    const float k = gamma->value[ch] * inv_std[ch] / static_cast<float>(n);
                    const float sg = dbeta[ch], sgx = dgamma[ch];
                    for (std::size_t i = 0; i < sp; ++i)
                        gx[i] += k * (static_cast<float>(n) * g[i] - sg - xh[i] * sgx);
                }
        } else {
            for (int bi = 0; bi < batch; ++bi)
                for (int ch = 0; ch < c; ++ch) {
                    const float* g = gy + (static_cast<std::size_t>(bi) * c + ch) * sp;
                    float* gx = dst.data() + (static_cast<std::size_t>(bi) * c + ch) * sp;
                    const float k = gamma->value[ch] * inv_std[ch];
                    for (std::size_t i = 0; i < sp; ++i) gx[i] += k * g[i];
                }
        }
    });
}

}  // namespace sdfc::nn
