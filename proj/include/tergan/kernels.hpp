#pragma once

#include "tergan/tensor.hpp"

// OpenMP-parallel compute kernels. Every output element is produced by exactly
// one thread with a fixed accumulation order, so results do not depend on the
// thread count. Serial reference versions live in reference_kernels.hpp.
namespace tergan::kernels {

/// 3x3 convolution, stride 1, zero padding 1. x: [N,H,W,Ci], w: [3,3,Ci,Co], b: [Co].
template <class T>
BasicTensor<T> conv3x3_forward(const BasicTensor<T>& x, const BasicTensor<T>& w, const BasicTensor<T>& b);

/// Gradient w.r.t. the convolution input.
template <class T>
BasicTensor<T> conv3x3_backward_input(const BasicTensor<T>& grad_out, const BasicTensor<T>& w);

/// Accumulates weight and bias gradients into gw and gb.
template <class T>
void conv3x3_backward_params(const BasicTensor<T>& x, const BasicTensor<T>& grad_out, BasicTensor<T>& gw,
                             BasicTensor<T>& gb);

/// Affine map. x: [N,I], w: [I,O], b: [O].
template <class T>
BasicTensor<T> linear_forward(const BasicTensor<T>& x, const BasicTensor<T>& w, const BasicTensor<T>& b);

template <class T>
BasicTensor<T> linear_backward_input(const BasicTensor<T>& grad_out, const BasicTensor<T>& w);

template <class T>
void linear_backward_params(const BasicTensor<T>& x, const BasicTensor<T>& grad_out, BasicTensor<T>& gw,
                            BasicTensor<T>& gb);

/// 2x2 average pooling with stride 2 over NHWC.
template <class T>
BasicTensor<T> avgpool2_forward(const BasicTensor<T>& x);
template <class T>
BasicTensor<T> avgpool2_backward(const BasicTensor<T>& grad_out);

/// 2x nearest-neighbour upsampling over NHWC.
template <class T>
BasicTensor<T> upsample2_forward(const BasicTensor<T>& x);
template <class T>
BasicTensor<T> upsample2_backward(const BasicTensor<T>& grad_out);

/// Per-channel (last axis) mean and biased variance over all other axes.
template <class T>
void channel_moments(const BasicTensor<T>& x, std::vector<T>& mean, std::vector<T>& var);

}  // namespace tergan::kernels
