#include "cgen/optim.hpp"

#include <cmath>

namespace cgen::ad {

namespace {
constexpr double kBeta1 = 0.9;
constexpr double kBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;
}  // namespace

template <typename T>
Optimizer<T>::Optimizer(OptKind kind, T learning_rate, std::vector<Tensor<T>> params)
    : kind_(kind), lr_(learning_rate), params_(std::move(params)) {
    if (lr_ <= T(0)) throw ConfigError("optimizer: learning rate must be positive");
    if (kind_ == OptKind::Adam) {
        m_.resize(params_.size());
        v_.resize(params_.size());
        for (std::size_t i = 0; i < params_.size(); ++i) {
            m_[i].assign(params_[i].numel(), T(0));
            v_[i].assign(params_[i].numel(), T(0));
        }
    }
}

template <typename T>
void Optimizer<T>::step() {
    std::string missing;
    for (const auto& p : params_) {
        if (p.requires_grad() && !p.has_grad()) {
            if (!missing.empty()) missing += ", ";
            missing += p.name().empty() ? shape_str(p.shape()) : p.name();
        }
    }
    if (!missing.empty()) {
        throw StateError("optimizer step with missing gradients for: " + missing);
    }

    ++step_count_;
    last_scalars_ = 0;
    const T bc1 = T(1) - static_cast<T>(std::pow(kBeta1, static_cast<double>(step_count_)));
    const T bc2 = T(1) - static_cast<T>(std::pow(kBeta2, static_cast<double>(step_count_)));

    for (std::size_t i = 0; i < params_.size(); ++i) {
        auto& p = params_[i];
        if (!p.requires_grad()) continue;
        auto data = p.data();
        auto grad = p.grad();
        if (kind_ == OptKind::SGD) {
            for (std::size_t j = 0; j < data.size(); ++j) data[j] -= lr_ * grad[j];
        } else {
            auto& m = m_[i];
            auto& v = v_[i];
            for (std::size_t j = 0; j < data.size(); ++j) {
                m[j] = static_cast<T>(kBeta1) * m[j] + (T(1) - static_cast<T>(kBeta1)) * grad[j];
                v[j] = static_cast<T>(kBeta2) * v[j] +
                       (T(1) - static_cast<T>(kBeta2)) * grad[j] * grad[j];
                const T mhat = m[j] / bc1;
                const T vhat = v[j] / bc2;
                data[j] -= lr_ * mhat / (std::sqrt(vhat) + static_cast<T>(kAdamEps));
            }
        }
        last_scalars_ += data.size();
        p.zero_grad();
        p.ensure_finite("optimizer step");
    }
}

template class Optimizer<float>;
template class Optimizer<double>;

}  // namespace cgen::ad
