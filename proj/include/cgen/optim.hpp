#pragma once

#include "cgen/tensor.hpp"

namespace cgen::ad {

enum class OptKind { SGD, Adam };

// Updates the trainable members of a fixed parameter set in place. Frozen
// tensors (requires_grad=false) are skipped untouched; trainable tensors
// without a populated gradient are a state error. Gradients are zeroed after
// each update.
template <typename T>
class Optimizer {
public:
    Optimizer(OptKind kind, T learning_rate, std::vector<Tensor<T>> params);

    void step();

    OptKind kind() const { return kind_; }
    T learning_rate() const { return lr_; }
    void set_learning_rate(T lr) { lr_ = lr; }
    std::size_t step_count() const { return step_count_; }
    // Scalar elements written by the most recent step(); lets callers assert
    // how many variables an optimization actually moves.
    std::size_t last_step_scalar_count() const { return last_scalars_; }
    const std::vector<Tensor<T>>& params() const { return params_; }

private:
    OptKind kind_;
    T lr_;
    std::vector<Tensor<T>> params_;
    std::vector<std::vector<T>> m_;  // Adam first moments, per parameter
    std::vector<std::vector<T>> v_;  // Adam second moments, per parameter
    std::size_t step_count_ = 0;
    std::size_t last_scalars_ = 0;
};

extern template class Optimizer<float>;
extern template class Optimizer<double>;

}  // namespace cgen::ad
