#pragma once

#include <cstdint>

#include "fcap/tensor.hpp"

namespace fcap::kernels {

// Geometry of a 3x3 convolution with ceil-mode SAME padding: the output
// spatial extent is ceil(in/stride) and the required zero padding,
// total = max((out-1)*stride + 3 - in, 0), puts the extra unit on the
// bottom/right side. This is the rule that takes 240x320 through the
// stride-2 chain 240->120->60->30->15->8->4.
struct ConvDims {
    std::int64_t n = 0, cin = 0, h = 0, w = 0;
    std::int64_t cout = 0, stride = 1;
    std::int64_t hout = 0, wout = 0;
    std::int64_t pad_top = 0, pad_left = 0;
};

ConvDims conv_dims(const Shape& input, const Shape& weight, std::int64_t stride);

// y: N x Cout x Hout x Wout. Cross-correlation plus per-channel bias.
template <typename S>
void conv2d_forward(const TensorT<S>& x, const TensorT<S>& w, const TensorT<S>& b,
                    std::int64_t stride, TensorT<S>& y);

// All gradient outputs accumulate (+=). dy is the upstream gradient laid out
// like the op's output. dw/db/dx may be null when the corresponding operand
// does not require a gradient (skipping the first conv layer's input pass
// saves a full GEMM per sample).
template <typename S>
void conv2d_backward(const TensorT<S>& x, const TensorT<S>& w, std::int64_t stride,
                     const S* dy, S* dw, S* db, S* dx);

// y = x * w^T + b,  x: N x Din, w: Dout x Din, b: Dout.
template <typename S>
void linear_forward(const TensorT<S>& x, const TensorT<S>& w, const TensorT<S>& b, TensorT<S>& y);

template <typename S>
void linear_backward(const TensorT<S>& x, const TensorT<S>& w, const S* dy,
                     S* dw, S* db, S* dx);

template <typename S>
void relu_forward(const TensorT<S>& x, TensorT<S>& y);
// ReLU derivative at exactly 0 is taken as 0.
template <typename S>
void relu_backward(const TensorT<S>& x, const S* dy, S* dx);

template <typename S>
void tanh_forward(const TensorT<S>& x, TensorT<S>& y);
template <typename S>
void tanh_backward(const TensorT<S>& y, const S* dy, S* dx);

// Inverted dropout: in train mode each element survives with probability
// 1-p and is scaled by 1/(1-p); eval mode is the identity. The mask is a
// pure function of (seed, element index), so results do not depend on how
// work is scheduled.
template <typename S>
void dropout_forward(const TensorT<S>& x, double p, bool train, std::uint64_t seed, TensorT<S>& y);
template <typename S>
void dropout_backward(double p, bool train, std::uint64_t seed, std::int64_t n, const S* dy, S* dx);

// Mean over all elements of squared difference; accumulated in double.
template <typename S>
double mse_forward(const TensorT<S>& pred, const TensorT<S>& target);
// d(scale * mse)/dpred accumulated into dpred; dtarget (optional) gets the
// negated gradient.
template <typename S>
void mse_backward(const TensorT<S>& pred, const TensorT<S>& target, S scale, S* dpred, S* dtarget);

} // namespace fcap::kernels
