#include "cgen/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace cgen::ad {

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (std::size_t e : shape) n *= e;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

bool same_shape(const Shape& a, const Shape& b) { return a == b; }

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape) {
    auto d = std::make_shared<TensorStorage<T>>();
    d->data.assign(shape_numel(shape), T(0));
    d->shape = std::move(shape);
    return Tensor(std::move(d));
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value) {
    auto d = std::make_shared<TensorStorage<T>>();
    d->data.assign(shape_numel(shape), value);
    d->shape = std::move(shape);
    return Tensor(std::move(d));
}

template <typename T>
Tensor<T> Tensor<T>::from(Shape shape, std::vector<T> values) {
    if (shape_numel(shape) != values.size()) {
        throw DimensionError("tensor data length " + std::to_string(values.size()) +
                             " does not match shape " + shape_str(shape));
    }
    auto d = std::make_shared<TensorStorage<T>>();
    d->shape = std::move(shape);
    d->data = std::move(values);
    return Tensor(std::move(d));
}

template <typename T>
T Tensor<T>::item() const {
    if (numel() != 1) {
        throw DimensionError("item() on non-scalar tensor of shape " + shape_str(shape()));
    }
    return d_->data[0];
}

template <typename T>
void Tensor<T>::accum_grad(std::span<const T> g) const {
    if (g.size() != d_->data.size()) {
        throw DimensionError("gradient length " + std::to_string(g.size()) +
                             " does not match tensor " + shape_str(shape()));
    }
    if (d_->grad.empty()) d_->grad.assign(d_->data.size(), T(0));
    for (std::size_t i = 0; i < g.size(); ++i) d_->grad[i] += g[i];
}

template <typename T>
void Tensor<T>::zero_grad() const {
    if (!d_->grad.empty()) std::fill(d_->grad.begin(), d_->grad.end(), T(0));
}

template <typename T>
void Tensor<T>::ensure_finite(const char* what) const {
    for (T v : d_->data) {
        if (!std::isfinite(static_cast<double>(v))) {
            throw ValidationError(std::string(what) + ": non-finite value in tensor " +
                                  (d_->name.empty() ? shape_str(shape()) : d_->name));
        }
    }
}

template <typename T>
void Tensor<T>::ensure_grad_finite(const char* what) const {
    for (T v : d_->grad) {
        if (!std::isfinite(static_cast<double>(v))) {
            throw ValidationError(std::string(what) + ": non-finite gradient in tensor " +
                                  (d_->name.empty() ? shape_str(shape()) : d_->name));
        }
    }
}

template <typename T>
void Tape<T>::record(std::function<void()> step, std::vector<Tensor<T>> touched) {
    steps_.push_back(std::move(step));
    for (auto& t : touched) touched_.push_back(std::move(t));
}

template <typename T>
void Tape<T>::backward(const Tensor<T>& loss) {
    if (consumed_) {
        throw StateError("tape already consumed: backward requires a fresh forward pass");
    }
    if (!loss.valid() || loss.numel() != 1) {
        throw DimensionError("backward expects a scalar loss");
    }
    consumed_ = true;
    if (loss.requires_grad()) {
        const T one(1);
        loss.accum_grad(std::span<const T>(&one, 1));
        for (auto it = steps_.rbegin(); it != steps_.rend(); ++it) (*it)();
        for (const auto& t : touched_) t.ensure_grad_finite("backward");
    }
}

template <typename T>
Tape<T>*& active_tape_slot() {
    thread_local Tape<T>* slot = nullptr;
    return slot;
}

template class Tensor<float>;
template class Tensor<double>;
template class Tape<float>;
template class Tape<double>;
template Tape<float>*& active_tape_slot<float>();
template Tape<double>*& active_tape_slot<double>();

}  // namespace cgen::ad
