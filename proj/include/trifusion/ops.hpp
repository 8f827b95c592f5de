#pragma once

#include <span>
#include <vector>

#include "trifusion/tensor.hpp"

// Differentiable tensor ops. Every op accepts tracked or untracked inputs and
// records a tape node only when some input is tracked. No broadcasting: binary
// ops need identical shapes; scalars enter only through scale().
namespace trifusion {

template <typename T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b);

/// x: [C_in,H,W], w: [C_out,C_in,kh,kw].
template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& x, const BasicTensor<T>& w, std::size_t stride,
                      std::size_t padding);

/// Adjoint of conv2d. x: [C_in,H,W], w: [C_in,C_out,kh,kw];
/// output spatial size stride*(H-1)+kh-2*padding.
template <typename T>
BasicTensor<T> conv2d_transpose(const BasicTensor<T>& x, const BasicTensor<T>& w, std::size_t stride,
                                std::size_t padding);

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <typename T>
BasicTensor<T> sub(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <typename T>
BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <typename T>
BasicTensor<T> scale(const BasicTensor<T>& x, T factor);
/// max(x, 0); the subgradient at exactly 0 is 0.
template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& x);

/// Adds b (length shape[axis]) along `axis` of x.
template <typename T>
BasicTensor<T> add_bias(const BasicTensor<T>& x, const BasicTensor<T>& b, std::size_t axis);

template <typename T>
BasicTensor<T> softmax_lastdim(const BasicTensor<T>& x);

template <typename T>
BasicTensor<T> sum(const BasicTensor<T>& x);

/// Mean of squared differences, as a scalar tensor.
template <typename T>
BasicTensor<T> mse_loss(const BasicTensor<T>& a, const BasicTensor<T>& b);

template <typename T>
BasicTensor<T> reshape(const BasicTensor<T>& x, Shape shape);

/// Output axis i is input axis perm[i].
template <typename T>
BasicTensor<T> transpose(const BasicTensor<T>& x, const std::vector<std::size_t>& perm);

/// Concatenates along `axis`; all other dims must agree.
template <typename T>
BasicTensor<T> concat(const std::vector<BasicTensor<T>>& parts, std::size_t axis);

/// Elements [start, start+length) along `axis`.
template <typename T>
BasicTensor<T> slice(const BasicTensor<T>& x, std::size_t axis, std::size_t start, std::size_t length);

}  // namespace trifusion
