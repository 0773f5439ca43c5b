#pragma once

#include "tergan/tensor.hpp"

// Straightforward single-threaded versions of the kernels in kernels.hpp.
// Kept as the test oracle and benchmark baseline; not used on the training path.
namespace tergan::kernels::reference {

template <class T>
BasicTensor<T> conv3x3_forward(const BasicTensor<T>& x, const BasicTensor<T>& w, const BasicTensor<T>& b);
template <class T>
BasicTensor<T> conv3x3_backward_input(const BasicTensor<T>& grad_out, const BasicTensor<T>& w);
template <class T>
void conv3x3_backward_params(const BasicTensor<T>& x, const BasicTensor<T>& grad_out, BasicTensor<T>& gw,
                             BasicTensor<T>& gb);

template <class T>
BasicTensor<T> linear_forward(const BasicTensor<T>& x, const BasicTensor<T>& w, const BasicTensor<T>& b);
template <class T>
BasicTensor<T> linear_backward_input(const BasicTensor<T>& grad_out, const BasicTensor<T>& w);
template <class T>
void linear_backward_params(const BasicTensor<T>& x, const BasicTensor<T>& grad_out, BasicTensor<T>& gw,
                            BasicTensor<T>& gb);

template <class T>
BasicTensor<T> avgpool2_forward(const BasicTensor<T>& x);
template <class T>
BasicTensor<T> avgpool2_backward(const BasicTensor<T>& grad_out);
template <class T>
BasicTensor<T> upsample2_forward(const BasicTensor<T>& x);
template <class T>
BasicTensor<T> upsample2_backward(const BasicTensor<T>& grad_out);

template <class T>
void channel_moments(const BasicTensor<T>& x, std::vector<T>& mean, std::vector<T>& var);

}  // namespace tergan::kernels::reference
