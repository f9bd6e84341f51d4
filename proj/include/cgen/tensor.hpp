#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "cgen/errors.hpp"

namespace cgen::ad {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);
bool same_shape(const Shape& a, const Shape& b);

template <typename T>
struct TensorStorage {
    Shape shape;
    std::vector<T> data;
    std::vector<T> grad;  // empty until something backpropagates into it
    bool requires_grad = false;
    std::string name;
};

// Value-semantics handle over shared storage. Copies alias the same buffer,
// which is what the tape's backward closures rely on. Gradients accumulate
// across backward passes until explicitly zeroed.
template <typename T>
class Tensor {
public:
    using Scalar = T;

    Tensor() = default;

    static Tensor zeros(Shape shape);
    static Tensor full(Shape shape, T value);
    static Tensor from(Shape shape, std::vector<T> values);
    static Tensor scalar(T value) { return full({1}, value); }

    bool valid() const { return static_cast<bool>(d_); }

    const Shape& shape() const { return d_->shape; }
    std::size_t rank() const { return d_->shape.size(); }
    std::size_t dim(std::size_t i) const { return d_->shape[i]; }
    std::size_t numel() const { return d_->data.size(); }

    std::span<T> data() const { return {d_->data.data(), d_->data.size()}; }
    T item() const;

    bool requires_grad() const { return d_ && d_->requires_grad; }
    Tensor& set_requires_grad(bool v) {
        d_->requires_grad = v;
        return *this;
    }

    const std::string& name() const { return d_->name; }
    Tensor& set_name(std::string n) {
        d_->name = std::move(n);
        return *this;
    }

    bool has_grad() const { return d_ && !d_->grad.empty(); }
    // Raw gradient buffer; empty span when nothing has been accumulated yet.
    std::span<T> grad() const {
        if (!has_grad()) return {};
        return {d_->grad.data(), d_->grad.size()};
    }
    T grad_at(std::size_t i) const { return has_grad() ? d_->grad[i] : T(0); }

    void accum_grad(std::span<const T> g) const;
    void zero_grad() const;

    // Throws ValidationError if any element is NaN/Inf.
    void ensure_finite(const char* what) const;
    void ensure_grad_finite(const char* what) const;

    bool same_storage(const Tensor& other) const { return d_ == other.d_; }

private:
    explicit Tensor(std::shared_ptr<TensorStorage<T>> d) : d_(std::move(d)) {}
    std::shared_ptr<TensorStorage<T>> d_;
};

// Record of one forward pass. Backward replays the recorded adjoint rules in
// exact reverse order; a tape can be consumed once.
template <typename T>
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    void record(std::function<void()> step, std::vector<Tensor<T>> touched);
    void backward(const Tensor<T>& loss);
    bool consumed() const { return consumed_; }
    std::size_t size() const { return steps_.size(); }

private:
    std::vector<std::function<void()>> steps_;
    std::vector<Tensor<T>> touched_;
    bool consumed_ = false;
};

template <typename T>
Tape<T>*& active_tape_slot();

template <typename T>
inline Tape<T>* active_tape() {
    return active_tape_slot<T>();
}

// RAII activation of a tape on the current thread. Ops record onto the
// innermost active tape; with no active tape they run forward-only.
template <typename T>
class TapeScope {
public:
    TapeScope() : prev_(active_tape_slot<T>()) { active_tape_slot<T>() = &tape_; }
    ~TapeScope() { active_tape_slot<T>() = prev_; }
    TapeScope(const TapeScope&) = delete;
    TapeScope& operator=(const TapeScope&) = delete;

    Tape<T>& tape() { return tape_; }
    void backward(const Tensor<T>& loss) { tape_.backward(loss); }

private:
    Tape<T> tape_;
    Tape<T>* prev_;
};

extern template class Tensor<float>;
extern template class Tensor<double>;
extern template class Tape<float>;
extern template class Tape<double>;
extern template Tape<float>*& active_tape_slot<float>();
extern template Tape<double>*& active_tape_slot<double>();

}  // namespace cgen::ad
