#pragma once

#include <algorithm>
#include <cmath>
#include <functional>

#include "cgen/ops.hpp"

namespace cgen::ad {

// Central-difference verification of the backward pass. `f` must evaluate to
// a scalar; `point`'s storage is perturbed coordinate-by-coordinate, so f has
// to read the tensor's current values on every call. Returns the maximum
// relative error between analytic and numeric gradients, with denominator
// max(|analytic|, |numeric|, 1e-8). Meant to run in 64-bit mode.
template <typename T>
T grad_check(const std::function<Tensor<T>(const Tensor<T>&)>& f, Tensor<T> point,
             T h = T(1e-5)) {
    point.set_requires_grad(true);
    point.zero_grad();

    std::vector<T> analytic(point.numel());
    {
        TapeScope<T> scope;
        Tensor<T> loss = f(point);
        if (loss.numel() != 1) {
            throw DimensionError("grad_check: f must be scalar-valued, got " +
                                 shape_str(loss.shape()));
        }
        scope.backward(loss);
        for (std::size_t i = 0; i < analytic.size(); ++i) analytic[i] = point.grad_at(i);
    }
    point.zero_grad();

    auto data = point.data();
    T max_rel = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        const T saved = data[i];
        data[i] = saved + h;
        const T fplus = f(point).item();
        data[i] = saved - h;
        const T fminus = f(point).item();
        data[i] = saved;
        const T numeric = (fplus - fminus) / (T(2) * h);
        const T denom = std::max({std::abs(analytic[i]), std::abs(numeric), T(1e-8)});
        max_rel = std::max(max_rel, std::abs(analytic[i] - numeric) / denom);
    }
    return max_rel;
}

}  // namespace cgen::ad
