#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cgen/ops.hpp"
#include "cgen/rng.hpp"

namespace cgen::nn {

using ad::Shape;
using ad::Tensor;

enum class LayerKind { Conv, ConvTranspose, Dense, Activation, Flatten, Reshape };
enum class Act { Relu, Sigmoid, Tanh };

// One layer of a sequential network, with a text codec used by the
// checkpoint header (e.g. "conv(out=8,k=4,s=2,p=1)", "act(relu)").
struct LayerSpec {
    LayerKind kind = LayerKind::Activation;
    std::size_t out_channels = 0;  // conv / conv_transpose
    std::size_t kernel = 0;
    std::size_t stride = 1;
    std::size_t padding = 0;
    std::size_t units = 0;  // dense
    Act act = Act::Relu;    // activation
    Shape target;           // reshape target (C,H,W)

    static LayerSpec conv(std::size_t out, std::size_t k, std::size_t s, std::size_t p);
    static LayerSpec conv_transpose(std::size_t out, std::size_t k, std::size_t s, std::size_t p);
    static LayerSpec dense(std::size_t units);
    static LayerSpec activation(Act a);
    static LayerSpec flatten();
    static LayerSpec reshape(Shape target);

    std::string str() const;
    // Inverse of str(); malformed text is a format error.
    static LayerSpec parse(const std::string& text);
};

std::string act_name(Act a);

// Sequential network over a fixed (batch-free) input shape. Weights are
// He-initialized when the next activation is relu and Glorot-initialized
// otherwise, drawn from per-layer streams of the given seed.
template <typename T>
class Network {
public:
    Network() = default;
    Network(std::string name, std::vector<LayerSpec> specs, Shape input_shape,
            std::uint64_t seed);

    // x carries a leading batch extent: [B, ...input_shape].
    Tensor<T> forward(const Tensor<T>& x) const;

    std::vector<Tensor<T>> parameters() const;
    void set_trainable(bool trainable);
    bool trainable() const { return trainable_; }

    const std::string& name() const { return name_; }
    const std::vector<LayerSpec>& specs() const { return specs_; }
    const Shape& input_shape() const { return input_shape_; }
    const Shape& output_shape() const { return output_shape_; }
    bool empty() const { return specs_.empty(); }

    // Direct access for checkpoint loading; order matches parameters().
    std::vector<Tensor<T>> weight_slots() const { return parameters(); }

private:
    struct Layer {
        LayerSpec spec;
        Tensor<T> w, b;  // invalid for parameterless layers
        Shape out_shape; // batch-free
    };

    std::string name_;
    std::vector<LayerSpec> specs_;
    Shape input_shape_, output_shape_;
    std::vector<Layer> layers_;
    bool trainable_ = true;
};

// FNV-1a over the little-endian byte stream of all parameters in order;
// the freeze-discipline checks compare these hashes.
template <typename T>
std::uint64_t weight_hash(const std::vector<Tensor<T>>& params);

// Generator G: x -> x', encoder/decoder pair with a dense latent bottleneck.
// The variational variant adds a log-variance head and reparameterized
// sampling; the plain variant is a deterministic autoencoder.
template <typename T>
class Generator {
public:
    Generator() = default;
    Generator(Shape image_shape, std::size_t latent_dim, bool variational, std::uint64_t seed,
              std::size_t base_width = 8);
    // Assembles a generator from already-built parts (checkpoint loading).
    Generator(Network<T> encoder, Network<T> mu_head, Network<T> logvar_head,
              Network<T> decoder, Shape image_shape, std::size_t latent_dim, bool variational);

    struct Forward {
        Tensor<T> x_prime;
        Tensor<T> mu;       // latent mean, [B, l]
        Tensor<T> log_var;  // valid only for variational generators
        Tensor<T> z;        // latent actually decoded
    };

    // eps == nullptr selects the deterministic path z = mu; otherwise
    // z = mu + exp(log_var/2) * eps with caller-supplied noise of shape [B, l].
    Forward forward(const Tensor<T>& x, const Tensor<T>* eps = nullptr) const;

    // Decoder-only pass for latent-space search; z is [l] or [B, l].
    // Unsupported on non-variational generators.
    Tensor<T> decode(const Tensor<T>& z) const;

    std::vector<Tensor<T>> parameters() const;
    void set_trainable(bool trainable);
    std::uint64_t hash() const { return weight_hash(parameters()); }

    bool variational() const { return variational_; }
    std::size_t latent_dim() const { return latent_dim_; }
    const Shape& image_shape() const { return image_shape_; }

    const Network<T>& encoder() const { return encoder_; }
    const Network<T>& mu_head() const { return mu_head_; }
    const Network<T>& logvar_head() const { return logvar_head_; }
    const Network<T>& decoder() const { return decoder_; }

private:
    Network<T> encoder_, mu_head_, logvar_head_, decoder_;
    Shape image_shape_;
    std::size_t latent_dim_ = 0;
    bool variational_ = false;
};

// Classifier C: x -> probability in (0,1) of the target class.
template <typename T>
class Classifier {
public:
    Classifier() = default;
    Classifier(Shape image_shape, std::uint64_t seed, std::size_t base_width = 8);
    explicit Classifier(Network<T> net) : net_(std::move(net)) {}

    // [B, ...] -> [B, 1] probabilities
    Tensor<T> prob(const Tensor<T>& x) const { return net_.forward(x); }

    std::vector<Tensor<T>> parameters() const { return net_.parameters(); }
    void set_trainable(bool t) { net_.set_trainable(t); }
    std::uint64_t hash() const { return weight_hash(parameters()); }
    const Network<T>& net() const { return net_; }

private:
    Network<T> net_;
};

// Predictor P: x -> m real control outputs; frozen during all cGen training.
template <typename T>
class Predictor {
public:
    Predictor() = default;
    Predictor(Shape image_shape, std::size_t out_dim, std::uint64_t seed,
              std::size_t base_width = 8);
    Predictor(Network<T> net, std::size_t out_dim)
        : net_(std::move(net)), out_dim_(out_dim) {}

    // [B, ...] -> [B, m]
    Tensor<T> predict(const Tensor<T>& x) const { return net_.forward(x); }

    std::size_t out_dim() const { return out_dim_; }
    bool frozen() const { return frozen_; }
    void set_frozen(bool frozen) {
        frozen_ = frozen;
        net_.set_trainable(!frozen);
    }

    std::vector<Tensor<T>> parameters() const { return net_.parameters(); }
    std::uint64_t hash() const { return weight_hash(parameters()); }
    const Network<T>& net() const { return net_; }

private:
    Network<T> net_;
    std::size_t out_dim_ = 0;
    bool frozen_ = false;
};

// Batch-mean KL divergence to the standard normal:
//   (1/B) * 1/2 * sum_i (mu_i^2 + exp(log_var_i) - 1 - log_var_i)
// mu and log_var are [B, l] (or [l], treated as one sample). Differentiable.
template <typename T>
Tensor<T> kl_to_standard_normal(const Tensor<T>& mu, const Tensor<T>& log_var);

// Preset layer stacks. Image shapes are (C, H, W) with H = W a power of two
// >= 8; every stage halves the plane with a k4/s2/p1 convolution.
std::vector<LayerSpec> encoder_spec(const Shape& image_shape, std::size_t base_width);
std::vector<LayerSpec> decoder_spec(const Shape& image_shape, std::size_t base_width);
std::vector<LayerSpec> classifier_spec(const Shape& image_shape, std::size_t base_width);
std::vector<LayerSpec> predictor_spec(const Shape& image_shape, std::size_t base_width,
                                      std::size_t out_dim);
// Flat extent of the encoder output for the given image shape.
std::size_t encoder_feature_dim(const Shape& image_shape, std::size_t base_width);

extern template class Network<float>;
extern template class Network<double>;
extern template class Generator<float>;
extern template class Generator<double>;
extern template class Classifier<float>;
extern template class Classifier<double>;
extern template class Predictor<float>;
extern template class Predictor<double>;
extern template std::uint64_t weight_hash<float>(const std::vector<Tensor<float>>&);
extern template std::uint64_t weight_hash<double>(const std::vector<Tensor<double>>&);
extern template Tensor<float> kl_to_standard_normal<float>(const Tensor<float>&,
                                                           const Tensor<float>&);
extern template Tensor<double> kl_to_standard_normal<double>(const Tensor<double>&,
                                                             const Tensor<double>&);

}  // namespace cgen::nn
