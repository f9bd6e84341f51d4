#pragma once

#include "cgen/tensor.hpp"

namespace cgen::ad {

// Primitive differentiable ops. Every op runs eagerly; when a tape is active
// on the current thread and any input requires grad, the adjoint rule is
// recorded and the output is marked requires_grad. Binary elementwise ops
// demand exactly equal shapes — there is no broadcasting.

// a[r×k] · b[k×c] -> [r×c]
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

// Cross-correlation (no kernel flip). input [B×C×H×W], kernel [F×C×kh×kw],
// output [B×F×H′×W′] with H′ = (H + 2·pad − kh)/stride + 1; a non-integral
// or non-positive extent is a configuration error.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernel, std::size_t stride,
                 std::size_t padding);

// Adjoint of conv2d with identical hyperparameters: input [B×F×H×W],
// kernel [F×C×kh×kw], output [B×C×H″×W″] with H″ = (H−1)·stride + kh − 2·pad.
template <typename T>
Tensor<T> conv_transpose2d(const Tensor<T>& input, const Tensor<T>& kernel, std::size_t stride,
                           std::size_t padding);

template <typename T>
Tensor<T> relu(const Tensor<T>& x);
template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x);
template <typename T>
Tensor<T> tanh(const Tensor<T>& x);
template <typename T>
Tensor<T> exp(const Tensor<T>& x);

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> scale(const Tensor<T>& x, T c);

// m[B×N] + v[N] broadcast over rows (dense-layer bias).
template <typename T>
Tensor<T> add_rowvec(const Tensor<T>& m, const Tensor<T>& v);

// x[B×C×H×W] + bias[C] broadcast over batch and spatial extents.
template <typename T>
Tensor<T> add_channel_bias(const Tensor<T>& x, const Tensor<T>& bias);

// Same element count, new shape; data is copied, gradient flows through.
template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape);

// Full reduction to a scalar.
template <typename T>
Tensor<T> sum(const Tensor<T>& x);

// Mean over all elements of squared differences.
template <typename T>
Tensor<T> mse(const Tensor<T>& a, const Tensor<T>& b);

// Mean binary cross-entropy. Probabilities are clamped to [eps, 1−eps] with
// eps = 1e-7 before the logs; labels must be exactly 0 or 1. Gradient flows
// to prob only — labels are data.
template <typename T>
Tensor<T> bce(const Tensor<T>& prob, const Tensor<T>& label);

extern template Tensor<float> matmul<float>(const Tensor<float>&, const Tensor<float>&);
extern template Tensor<double> matmul<double>(const Tensor<double>&, const Tensor<double>&);
extern template Tensor<float> conv2d<float>(const Tensor<float>&, const Tensor<float>&, std::size_t,
                                            std::size_t);
extern template Tensor<double> conv2d<double>(const Tensor<double>&, const Tensor<double>&,
                                              std::size_t, std::size_t);
extern template Tensor<float> conv_transpose2d<float>(const Tensor<float>&, const Tensor<float>&,
                                                      std::size_t, std::size_t);
extern template Tensor<double> conv_transpose2d<double>(const Tensor<double>&,
                                                        const Tensor<double>&, std::size_t,
                                                        std::size_t);
extern template Tensor<float> relu<float>(const Tensor<float>&);
extern template Tensor<double> relu<double>(const Tensor<double>&);
extern template Tensor<float> sigmoid<float>(const Tensor<float>&);
extern template Tensor<double> sigmoid<double>(const Tensor<double>&);
extern template Tensor<float> tanh<float>(const Tensor<float>&);
extern template Tensor<double> tanh<double>(const Tensor<double>&);
extern template Tensor<float> exp<float>(const Tensor<float>&);
extern template Tensor<double> exp<double>(const Tensor<double>&);
extern template Tensor<float> add<float>(const Tensor<float>&, const Tensor<float>&);
extern template Tensor<double> add<double>(const Tensor<double>&, const Tensor<double>&);
extern template Tensor<float> sub<float>(const Tensor<float>&, const Tensor<float>&);
extern template Tensor<double> sub<double>(const Tensor<double>&, const Tensor<double>&);
extern template Tensor<float> mul<float>(const Tensor<float>&, const Tensor<float>&);
extern template Tensor<double> mul<double>(const Tensor<double>&, const Tensor<double>&);
extern template Tensor<float> scale<float>(const Tensor<float>&, float);
extern template Tensor<double> scale<double>(const Tensor<double>&, double);
extern template Tensor<float> add_rowvec<float>(const Tensor<float>&, const Tensor<float>&);
extern template Tensor<double> add_rowvec<double>(const Tensor<double>&, const Tensor<double>&);
extern template Tensor<float> add_channel_bias<float>(const Tensor<float>&, const Tensor<float>&);
extern template Tensor<double> add_channel_bias<double>(const Tensor<double>&,
                                                        const Tensor<double>&);
extern template Tensor<float> reshape<float>(const Tensor<float>&, Shape);
extern template Tensor<double> reshape<double>(const Tensor<double>&, Shape);
extern template Tensor<float> sum<float>(const Tensor<float>&);
extern template Tensor<double> sum<double>(const Tensor<double>&);
extern template Tensor<float> mse<float>(const Tensor<float>&, const Tensor<float>&);
extern template Tensor<double> mse<double>(const Tensor<double>&, const Tensor<double>&);
extern template Tensor<float> bce<float>(const Tensor<float>&, const Tensor<float>&);
extern template Tensor<double> bce<double>(const Tensor<double>&, const Tensor<double>&);

}  // namespace cgen::ad
