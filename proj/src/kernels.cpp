#include "fcap/kernels.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <vector>

#include "fcap/rng.hpp"

namespace fcap::kernels {

namespace {

template <typename S>
using MatMap = Eigen::Map<Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <typename S>
using ConstMatMap =
    Eigen::Map<const Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

// Unpacks one sample into a (Cin*9) x (Hout*Wout) patch matrix, zero-filling
// out-of-range taps. Row r = c*9 + ky*3 + kx, column = output site index.
template <typename S>
void im2col(const S* x, const ConvDims& d, S* col) {
    const std::int64_t sites = d.hout * d.wout;
    for (std::int64_t c = 0; c < d.cin; ++c) {
        const S* xc = x + c * d.h * d.w;
        for (std::int64_t ky = 0; ky < 3; ++ky) {
            for (std::int64_t kx = 0; kx < 3; ++kx) {
                S* row = col + (c * 9 + ky * 3 + kx) * sites;
                for (std::int64_t yo = 0; yo < d.hout; ++yo) {
                    const std::int64_t y = yo * d.stride - d.pad_top + ky;
                    S* out = row + yo * d.wout;
                    if (y < 0 || y >= d.h) {
                        std::fill(out, out + d.wout, S(0));
                        continue;
                    }
                    // valid xo range: 0 <= xo*stride - pad_left + kx < w
                    const std::int64_t off = kx - d.pad_left;
                    std::int64_t xo_lo = off < 0 ? (-off + d.stride - 1) / d.stride : 0;
                    std::int64_t xo_hi = (d.w - off + d.stride - 1) / d.stride;
                    xo_hi = std::min(xo_hi, d.wout);
                    xo_lo = std::min(xo_lo, xo_hi);
                    std::fill(out, out + xo_lo, S(0));
                    const S* src = xc + y * d.w;
                    if (d.stride == 1) {
                        std::copy(src + xo_lo + off, src + xo_hi + off, out + xo_lo);
                    } else {
                        for (std::int64_t xo = xo_lo; xo < xo_hi; ++xo)
                            out[xo] = src[xo * d.stride + off];
                    }
                    std::fill(out + xo_hi, out + d.wout, S(0));
                }
            }
        }
    }
}

// Scatters a (Cin*9) x (Hout*Wout) gradient patch matrix back onto the input
// gradient. Serial with a fixed loop order, so accumulation is deterministic.
template <typename S>
void col2im_add(const S* col, const ConvDims& d, S* dx) {
    const std::int64_t sites = d.hout * d.wout;
    for (std::int64_t c = 0; c < d.cin; ++c) {
        S* dxc = dx + c * d.h * d.w;
        for (std::int64_t ky = 0; ky < 3; ++ky) {
            for (std::int64_t kx = 0; kx < 3; ++kx) {
                const S* row = col + (c * 9 + ky * 3 + kx) * sites;
                for (std::int64_t yo = 0; yo < d.hout; ++yo) {
                    const std::int64_t y = yo * d.stride - d.pad_top + ky;
                    if (y < 0 || y >= d.h) continue;
                    const std::int64_t off = kx - d.pad_left;
                    std::int64_t xo_lo = off < 0 ? (-off + d.stride - 1) / d.stride : 0;
                    std::int64_t xo_hi = (d.w - off + d.stride - 1) / d.stride;
                    xo_hi = std::min(xo_hi, d.wout);
                    xo_lo = std::min(xo_lo, xo_hi);
                    const S* src = row + yo * d.wout;
                    S* dst = dxc + y * d.w;
                    if (d.stride == 1) {
                        for (std::int64_t xo = xo_lo; xo < xo_hi; ++xo) dst[xo + off] += src[xo];
                    } else {
                        for (std::int64_t xo = xo_lo; xo < xo_hi; ++xo)
                            dst[xo * d.stride + off] += src[xo];
                    }
                }
            }
        }
    }
}

// Scratch reused across calls; conv1b's patch matrix is ~44 MB, so
// reallocating it per sample would dominate small-layer time.
template <typename S>
std::vector<S>& col_scratch(std::size_t n) {
    thread_local std::vector<S> buf;
    if (buf.size() < n) buf.resize(n);
    return buf;
}

inline double hash_unit(std::uint64_t seed, std::uint64_t index) {
    return static_cast<double>(splitmix64(seed ^ (index * 0x9e3779b97f4a7c15ull)) >> 40) *
           0x1.0p-24;
}

} // namespace

ConvDims conv_dims(const Shape& input, const Shape& weight, std::int64_t stride) {
    if (input.size() != 4)
        throw DimensionError("conv2d input must be NxCxHxW, got " + shape_str(input));
    if (weight.size() != 4 || weight[2] != 3 || weight[3] != 3)
        throw DimensionError("conv2d weight must be CoutxCinx3x3, got " + shape_str(weight));
    if (weight[1] != input[1])
        throw DimensionError("conv2d channel mismatch: weight Cin " + std::to_string(weight[1]) +
                             " vs input Cin " + std::to_string(input[1]));
    if (stride != 1 && stride != 2)
        throw ParameterError("conv2d stride must be 1 or 2, got " + std::to_string(stride));
    ConvDims d;
    d.n = input[0];
    d.cin = input[1];
    d.h = input[2];
    d.w = input[3];
    d.cout = weight[0];
    d.stride = stride;
    d.hout = (d.h + stride - 1) / stride;
    d.wout = (d.w + stride - 1) / stride;
    const std::int64_t pad_h = std::max<std::int64_t>((d.hout - 1) * stride + 3 - d.h, 0);
    const std::int64_t pad_w = std::max<std::int64_t>((d.wout - 1) * stride + 3 - d.w, 0);
    d.pad_top = pad_h / 2;
    d.pad_left = pad_w / 2;
    return d;
}

template <typename S>
void conv2d_forward(const TensorT<S>& x, const TensorT<S>& w, const TensorT<S>& b,
                    std::int64_t stride, TensorT<S>& y) {
    const ConvDims d = conv_dims(x.shape(), w.shape(), stride);
    if (b.shape() != Shape{d.cout})
        throw DimensionError("conv2d bias must have length Cout=" + std::to_string(d.cout));
    y = TensorT<S>({d.n, d.cout, d.hout, d.wout});
    const std::int64_t sites = d.hout * d.wout;
    const std::int64_t k = d.cin * 9;
    std::vector<S>& col = col_scratch<S>(static_cast<std::size_t>(k * sites));
    ConstMatMap<S> wm(w.data(), d.cout, k);
    for (std::int64_t n = 0; n < d.n; ++n) {
        im2col(x.data() + n * d.cin * d.h * d.w, d, col.data());
        ConstMatMap<S> cm(col.data(), k, sites);
        MatMap<S> ym(y.data() + n * d.cout * sites, d.cout, sites);
        ym.noalias() = wm * cm;
        for (std::int64_t c = 0; c < d.cout; ++c) ym.row(c).array() += b[c];
    }
}

template <typename S>
void conv2d_backward(const TensorT<S>& x, const TensorT<S>& w, std::int64_t stride,
                     const S* dy, S* dw, S* db, S* dx) {
    const ConvDims d = conv_dims(x.shape(), w.shape(), stride);
    const std::int64_t sites = d.hout * d.wout;
    const std::int64_t k = d.cin * 9;
    std::vector<S>& col = col_scratch<S>(static_cast<std::size_t>(k * sites));
    ConstMatMap<S> wm(w.data(), d.cout, k);
    for (std::int64_t n = 0; n < d.n; ++n) {
        ConstMatMap<S> dym(dy + n * d.cout * sites, d.cout, sites);
        if (dw) {
            im2col(x.data() + n * d.cin * d.h * d.w, d, col.data());
            ConstMatMap<S> cm(col.data(), k, sites);
            MatMap<S> dwm(dw, d.cout, k);
            dwm.noalias() += dym * cm.transpose();
        }
        if (db)
            for (std::int64_t c = 0; c < d.cout; ++c) db[c] += dym.row(c).sum();
        if (dx) {
            MatMap<S> dcol(col.data(), k, sites);
            dcol.noalias() = wm.transpose() * dym;
            col2im_add(col.data(), d, dx + n * d.cin * d.h * d.w);
        }
    }
}

template <typename S>
void linear_forward(const TensorT<S>& x, const TensorT<S>& w, const TensorT<S>& b, TensorT<S>& y) {
    if (x.ndim() < 2) throw DimensionError("linear input must be NxDin, got " + shape_str(x.shape()));
    if (w.ndim() != 2) throw DimensionError("linear weight must be DoutxDin, got " + shape_str(w.shape()));
    // Inputs with more than two axes are read as N x (numel/N); the row-major
    // layout makes this the flatten the fc layer needs.
    const std::int64_t n = x.dim(0), din = x.numel() / x.dim(0), dout = w.dim(0);
    if (w.dim(1) != din)
        throw DimensionError("linear width mismatch: input Din " + std::to_string(din) +
                             " vs weight Din " + std::to_string(w.dim(1)));
    if (b.shape() != Shape{dout})
        throw DimensionError("linear bias must have length Dout=" + std::to_string(dout));
    y = TensorT<S>({n, dout});
    ConstMatMap<S> xm(x.data(), n, din), wm(w.data(), dout, din);
    Eigen::Map<const Eigen::Matrix<S, Eigen::Dynamic, 1>> bv(b.data(), dout);
    MatMap<S> ym(y.data(), n, dout);
    ym.noalias() = xm * wm.transpose();
    ym.rowwise() += bv.transpose();
}

template <typename S>
void linear_backward(const TensorT<S>& x, const TensorT<S>& w, const S* dy,
                     S* dw, S* db, S* dx) {
    const std::int64_t n = x.dim(0), din = x.numel() / x.dim(0), dout = w.dim(0);
    ConstMatMap<S> xm(x.data(), n, din), wm(w.data(), dout, din), dym(dy, n, dout);
    if (dw) {
        MatMap<S> dwm(dw, dout, din);
        dwm.noalias() += dym.transpose() * xm;
    }
    if (db) {
        Eigen::Map<Eigen::Matrix<S, Eigen::Dynamic, 1>> dbv(db, dout);
        dbv.noalias() += dym.colwise().sum().transpose();
    }
    if (dx) {
        MatMap<S> dxm(dx, n, din);
        dxm.noalias() += dym * wm;
    }
}

template <typename S>
void relu_forward(const TensorT<S>& x, TensorT<S>& y) {
    y = TensorT<S>(x.shape());
    const S* in = x.data();
    S* out = y.data();
    const std::int64_t n = x.numel();
    for (std::int64_t i = 0; i < n; ++i) out[i] = in[i] > S(0) ? in[i] : S(0);
}

template <typename S>
void relu_backward(const TensorT<S>& x, const S* dy, S* dx) {
    const S* in = x.data();
    const S* g = dy;
    const std::int64_t n = x.numel();
    for (std::int64_t i = 0; i < n; ++i)
        if (in[i] > S(0)) dx[i] += g[i];
}

template <typename S>
void tanh_forward(const TensorT<S>& x, TensorT<S>& y) {
    y = TensorT<S>(x.shape());
    const S* in = x.data();
    S* out = y.data();
    const std::int64_t n = x.numel();
    for (std::int64_t i = 0; i < n; ++i) out[i] = std::tanh(in[i]);
}

template <typename S>
void tanh_backward(const TensorT<S>& y, const S* dy, S* dx) {
    const S* out = y.data();
    const S* g = dy;
    const std::int64_t n = y.numel();
    for (std::int64_t i = 0; i < n; ++i) dx[i] += g[i] * (S(1) - out[i] * out[i]);
}

template <typename S>
void dropout_forward(const TensorT<S>& x, double p, bool train, std::uint64_t seed, TensorT<S>& y) {
    if (p < 0.0 || p >= 1.0)
        throw ParameterError("dropout probability must satisfy 0 <= p < 1, got " + std::to_string(p));
    if (!train || p == 0.0) {
        y = x;
        return;
    }
    y = TensorT<S>(x.shape());
    const S scale = static_cast<S>(1.0 / (1.0 - p));
    const S* in = x.data();
    S* out = y.data();
    const std::int64_t n = x.numel();
    for (std::int64_t i = 0; i < n; ++i)
        out[i] = hash_unit(seed, static_cast<std::uint64_t>(i)) < p ? S(0) : in[i] * scale;
}

template <typename S>
void dropout_backward(double p, bool train, std::uint64_t seed, std::int64_t n, const S* dy, S* dx) {
    const S* g = dy;
    if (!train || p == 0.0) {
        for (std::int64_t i = 0; i < n; ++i) dx[i] += g[i];
        return;
    }
    const S scale = static_cast<S>(1.0 / (1.0 - p));
    for (std::int64_t i = 0; i < n; ++i)
        if (hash_unit(seed, static_cast<std::uint64_t>(i)) >= p) dx[i] += g[i] * scale;
}

template <typename S>
double mse_forward(const TensorT<S>& pred, const TensorT<S>& target) {
    if (!pred.same_shape(target))
        throw DimensionError("mse shape mismatch: " + shape_str(pred.shape()) + " vs " +
                             shape_str(target.shape()));
    const S* a = pred.data();
    const S* b = target.data();
    const std::int64_t n = pred.numel();
    double acc = 0.0;
    for (std::int64_t i = 0; i < n; ++i) {
        const double diff = static_cast<double>(a[i]) - static_cast<double>(b[i]);
        acc += diff * diff;
    }
    return acc / static_cast<double>(n);
}

template <typename S>
void mse_backward(const TensorT<S>& pred, const TensorT<S>& target, S scale, S* dpred, S* dtarget) {
    const S* a = pred.data();
    const S* b = target.data();
    const std::int64_t n = pred.numel();
    const S c = S(2) * scale / static_cast<S>(n);
    for (std::int64_t i = 0; i < n; ++i) {
        const S g = c * (a[i] - b[i]);
        if (dpred) dpred[i] += g;
        if (dtarget) dtarget[i] -= g;
    }
}

#define FCAP_INSTANTIATE(S)                                                                        \
    template void conv2d_forward<S>(const TensorT<S>&, const TensorT<S>&, const TensorT<S>&,      \
                                    std::int64_t, TensorT<S>&);                                    \
    template void conv2d_backward<S>(const TensorT<S>&, const TensorT<S>&, std::int64_t,          \
                                     const S*, S*, S*, S*);                                        \
    template void linear_forward<S>(const TensorT<S>&, const TensorT<S>&, const TensorT<S>&,      \
                                    TensorT<S>&);                                                  \
    template void linear_backward<S>(const TensorT<S>&, const TensorT<S>&, const S*,              \
                                     S*, S*, S*);                                                  \
    template void relu_forward<S>(const TensorT<S>&, TensorT<S>&);                                 \
    template void relu_backward<S>(const TensorT<S>&, const S*, S*);                              \
    template void tanh_forward<S>(const TensorT<S>&, TensorT<S>&);                                 \
    template void tanh_backward<S>(const TensorT<S>&, const S*, S*);                              \
    template void dropout_forward<S>(const TensorT<S>&, double, bool, std::uint64_t, TensorT<S>&); \
    template void dropout_backward<S>(double, bool, std::uint64_t, std::int64_t, const S*, S*);   \
    template double mse_forward<S>(const TensorT<S>&, const TensorT<S>&);                          \
    template void mse_backward<S>(const TensorT<S>&, const TensorT<S>&, S, S*, S*);

FCAP_INSTANTIATE(float)
FCAP_INSTANTIATE(double)
#undef FCAP_INSTANTIATE

} // namespace fcap::kernels
