#include "cgen/nn.hpp"

#include <bit>
#include <cmath>
#include <sstream>

#include "cgen/errors.hpp"

namespace cgen::nn {

using ad::shape_numel;
using ad::shape_str;

LayerSpec LayerSpec::conv(std::size_t out, std::size_t k, std::size_t s, std::size_t p) {
    LayerSpec l;
    l.kind = LayerKind::Conv;
    l.out_channels = out;
    l.kernel = k;
    l.stride = s;
    l.padding = p;
    return l;
}

LayerSpec LayerSpec::conv_transpose(std::size_t out, std::size_t k, std::size_t s, std::size_t p) {
    LayerSpec l = conv(out, k, s, p);
    l.kind = LayerKind::ConvTranspose;
    return l;
}

LayerSpec LayerSpec::dense(std::size_t units) {
    LayerSpec l;
    l.kind = LayerKind::Dense;
    l.units = units;
    return l;
}

LayerSpec LayerSpec::activation(Act a) {
    LayerSpec l;
    l.kind = LayerKind::Activation;
    l.act = a;
    return l;
}

LayerSpec LayerSpec::flatten() {
    LayerSpec l;
    l.kind = LayerKind::Flatten;
    return l;
}

LayerSpec LayerSpec::reshape(Shape target) {
    LayerSpec l;
    l.kind = LayerKind::Reshape;
    l.target = std::move(target);
    return l;
}

std::string act_name(Act a) {
    switch (a) {
        case Act::Relu: return "relu";
        case Act::Sigmoid: return "sigmoid";
        case Act::Tanh: return "tanh";
    }
    return "relu";
}

std::string LayerSpec::str() const {
    std::ostringstream os;
    switch (kind) {
        case LayerKind::Conv:
        case LayerKind::ConvTranspose:
            os << (kind == LayerKind::Conv ? "conv" : "conv_transpose") << "(out=" << out_channels
               << ",k=" << kernel << ",s=" << stride << ",p=" << padding << ")";
            break;
        case LayerKind::Dense:
            os << "dense(units=" << units << ")";
            break;
        case LayerKind::Activation:
            os << "act(" << act_name(act) << ")";
            break;
        case LayerKind::Flatten:
            os << "flatten";
            break;
        case LayerKind::Reshape:
            os << "reshape(";
            for (std::size_t i = 0; i < target.size(); ++i) os << (i ? "," : "") << target[i];
            os << ")";
            break;
    }
    return os.str();
}

namespace {

[[noreturn]] void bad_spec(const std::string& text, const std::string& why) {
    throw FormatError("layer spec '" + text + "': " + why);
}

std::size_t parse_size(const std::string& text, const std::string& tok) {
    if (tok.empty() || tok.find_first_not_of("0123456789") != std::string::npos) {
        bad_spec(text, "expected a non-negative integer, got '" + tok + "'");
    }
    return static_cast<std::size_t>(std::stoull(tok));
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = s.find(sep, start);
        out.push_back(s.substr(start, pos - start));
        if (pos == std::string::npos) break;
        start = pos + 1;
    }
    return out;
}

}  // namespace

LayerSpec LayerSpec::parse(const std::string& text) {
    std::string head = text, args;
    const std::size_t open = text.find('(');
    if (open != std::string::npos) {
        if (text.back() != ')') bad_spec(text, "missing closing parenthesis");
        head = text.substr(0, open);
        args = text.substr(open + 1, text.size() - open - 2);
    }
    if (head == "flatten") {
        if (open != std::string::npos) bad_spec(text, "flatten takes no arguments");
        return flatten();
    }
    if (head == "act") {
        if (args == "relu") return activation(Act::Relu);
        if (args == "sigmoid") return activation(Act::Sigmoid);
        if (args == "tanh") return activation(Act::Tanh);
        bad_spec(text, "unknown activation '" + args + "'");
    }
    if (head == "reshape") {
        Shape target;
        for (const auto& tok : split(args, ',')) target.push_back(parse_size(text, tok));
        if (target.empty()) bad_spec(text, "reshape needs at least one extent");
        return reshape(std::move(target));
    }
    if (head == "dense") {
        const auto kv = split(args, '=');
        if (kv.size() != 2 || kv[0] != "units") bad_spec(text, "expected units=<n>");
        return dense(parse_size(text, kv[1]));
    }
    if (head == "conv" || head == "conv_transpose") {
        std::size_t out = 0, k = 0, s = 0, p = 0;
        bool have_out = false, have_k = false, have_s = false, have_p = false;
        for (const auto& item : split(args, ',')) {
            const auto kv = split(item, '=');
            if (kv.size() != 2) bad_spec(text, "expected key=value, got '" + item + "'");
            const std::size_t v = parse_size(text, kv[1]);
            if (kv[0] == "out") out = v, have_out = true;
            else if (kv[0] == "k") k = v, have_k = true;
            else if (kv[0] == "s") s = v, have_s = true;
            else if (kv[0] == "p") p = v, have_p = true;
            else bad_spec(text, "unknown key '" + kv[0] + "'");
        }
        if (!(have_out && have_k && have_s && have_p)) bad_spec(text, "needs out,k,s,p");
        return head == "conv" ? conv(out, k, s, p) : conv_transpose(out, k, s, p);
    }
    bad_spec(text, "unknown layer kind '" + head + "'");
}

namespace {

// Initialization is chosen by the activation that consumes the layer's
// output: He for relu, Glorot otherwise (including linear outputs).
Act following_activation(const std::vector<LayerSpec>& specs, std::size_t i) {
    for (std::size_t j = i + 1; j < specs.size(); ++j) {
        if (specs[j].kind == LayerKind::Activation) return specs[j].act;
        if (specs[j].kind != LayerKind::Flatten && specs[j].kind != LayerKind::Reshape) break;
    }
    return Act::Sigmoid;  // any non-relu choice selects Glorot
}

double init_std(Act next, std::size_t fan_in, std::size_t fan_out) {
    if (next == Act::Relu) return std::sqrt(2.0 / static_cast<double>(fan_in));
    return std::sqrt(2.0 / static_cast<double>(fan_in + fan_out));
}

}  // namespace

template <typename T>
Network<T>::Network(std::string name, std::vector<LayerSpec> specs, Shape input_shape,
                    std::uint64_t seed)
    : name_(std::move(name)), specs_(std::move(specs)), input_shape_(std::move(input_shape)) {
    Shape cur = input_shape_;
    std::string prev = "input " + shape_str(cur);
    for (std::size_t i = 0; i < specs_.size(); ++i) {
        const LayerSpec& s = specs_[i];
        auto fail = [&](const std::string& why) -> void {
            throw DimensionError("build '" + name_ + "': layer " + std::to_string(i) + " '" +
                                 s.str() + "' does not compose with " + prev + ": " + why);
        };
        Layer layer;
        layer.spec = s;
        std::size_t fan_in = 0, fan_out = 0;
        switch (s.kind) {
            case LayerKind::Conv: {
                if (cur.size() != 3) fail("expects a CxHxW input");
                if (s.stride == 0) fail("stride must be positive");
                const std::size_t ph = cur[1] + 2 * s.padding, pw = cur[2] + 2 * s.padding;
                if (ph < s.kernel || (ph - s.kernel) % s.stride != 0 || pw < s.kernel ||
                    (pw - s.kernel) % s.stride != 0) {
                    fail("non-integral conv output extent");
                }
                fan_in = cur[0] * s.kernel * s.kernel;
                fan_out = s.out_channels * s.kernel * s.kernel;
                layer.w = Tensor<T>::zeros({s.out_channels, cur[0], s.kernel, s.kernel});
                layer.b = Tensor<T>::zeros({s.out_channels});
                cur = {s.out_channels, (ph - s.kernel) / s.stride + 1,
                       (pw - s.kernel) / s.stride + 1};
                break;
            }
            case LayerKind::ConvTranspose: {
                if (cur.size() != 3) fail("expects a CxHxW input");
                if (s.stride == 0) fail("stride must be positive");
                const long long oh = static_cast<long long>((cur[1] - 1) * s.stride + s.kernel) -
                                     2 * static_cast<long long>(s.padding);
                const long long ow = static_cast<long long>((cur[2] - 1) * s.stride + s.kernel) -
                                     2 * static_cast<long long>(s.padding);
                if (oh < 1 || ow < 1) fail("non-positive output extent");
                fan_in = cur[0] * s.kernel * s.kernel;
                fan_out = s.out_channels * s.kernel * s.kernel;
                layer.w = Tensor<T>::zeros({cur[0], s.out_channels, s.kernel, s.kernel});
                layer.b = Tensor<T>::zeros({s.out_channels});
                cur = {s.out_channels, static_cast<std::size_t>(oh),
                       static_cast<std::size_t>(ow)};
                break;
            }
            case LayerKind::Dense: {
                if (cur.size() != 1) fail("expects a flat input extent (missing flatten?)");
                fan_in = cur[0];
                fan_out = s.units;
                layer.w = Tensor<T>::zeros({cur[0], s.units});
                layer.b = Tensor<T>::zeros({s.units});
                cur = {s.units};
                break;
            }
            case LayerKind::Activation:
                break;
            case LayerKind::Flatten:
                cur = {shape_numel(cur)};
                break;
            case LayerKind::Reshape:
                if (shape_numel(s.target) != shape_numel(cur)) {
                    fail("element count " + std::to_string(shape_numel(cur)) +
                         " does not match target " + shape_str(s.target));
                }
                cur = s.target;
                break;
        }
        if (layer.w.valid()) {
            Rng rng(derive_seed(seed, name_, i));
            const double std = init_std(following_activation(specs_, i), fan_in, fan_out);
            for (auto& v : layer.w.data()) v = static_cast<T>(rng.normal(0.0, std));
            layer.w.set_requires_grad(true).set_name(name_ + ".w" + std::to_string(i));
            layer.b.set_requires_grad(true).set_name(name_ + ".b" + std::to_string(i));
        }
        layer.out_shape = cur;
        layers_.push_back(std::move(layer));
        prev = "layer " + std::to_string(i) + " '" + s.str() + "' output " + shape_str(cur);
    }
    output_shape_ = cur;
}

template <typename T>
Tensor<T> Network<T>::forward(const Tensor<T>& x) const {
    if (x.rank() != input_shape_.size() + 1) {
        throw DimensionError("forward '" + name_ + "': expected batched input of " +
                             shape_str(input_shape_) + ", got " + shape_str(x.shape()));
    }
    for (std::size_t i = 0; i < input_shape_.size(); ++i) {
        if (x.dim(i + 1) != input_shape_[i]) {
            throw DimensionError("forward '" + name_ + "': expected batched input of " +
                                 shape_str(input_shape_) + ", got " + shape_str(x.shape()));
        }
    }
    const std::size_t batch = x.dim(0);
    Tensor<T> cur = x;
    for (const Layer& l : layers_) {
        switch (l.spec.kind) {
            case LayerKind::Conv:
                cur = ad::add_channel_bias(ad::conv2d(cur, l.w, l.spec.stride, l.spec.padding),
                                           l.b);
                break;
            case LayerKind::ConvTranspose:
                cur = ad::add_channel_bias(
                    ad::conv_transpose2d(cur, l.w, l.spec.stride, l.spec.padding), l.b);
                break;
            case LayerKind::Dense:
                cur = ad::add_rowvec(ad::matmul(cur, l.w), l.b);
                break;
            case LayerKind::Activation:
                switch (l.spec.act) {
                    case Act::Relu: cur = ad::relu(cur); break;
                    case Act::Sigmoid: cur = ad::sigmoid(cur); break;
                    case Act::Tanh: cur = ad::tanh(cur); break;
                }
                break;
            case LayerKind::Flatten:
                cur = ad::reshape(cur, {batch, shape_numel(l.out_shape)});
                break;
            case LayerKind::Reshape: {
                Shape target{batch};
                target.insert(target.end(), l.out_shape.begin(), l.out_shape.end());
                cur = ad::reshape(cur, std::move(target));
                break;
            }
        }
    }
    return cur;
}

template <typename T>
std::vector<Tensor<T>> Network<T>::parameters() const {
    std::vector<Tensor<T>> out;
    for (const Layer& l : layers_) {
        if (l.w.valid()) {
            out.push_back(l.w);
            out.push_back(l.b);
        }
    }
    return out;
}

template <typename T>
void Network<T>::set_trainable(bool trainable) {
    trainable_ = trainable;
    for (auto& p : parameters()) p.set_requires_grad(trainable);
}

template <typename T>
std::uint64_t weight_hash(const std::vector<Tensor<T>>& params) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto feed = [&h](unsigned char byte) {
        h ^= byte;
        h *= 0x100000001b3ULL;
    };
    for (const auto& p : params) {
        for (T v : p.data()) {
            if constexpr (sizeof(T) == 4) {
                const auto bits = std::bit_cast<std::uint32_t>(v);
                for (int k = 0; k < 4; ++k) feed(static_cast<unsigned char>(bits >> (8 * k)));
            } else {
                const auto bits = std::bit_cast<std::uint64_t>(v);
                for (int k = 0; k < 8; ++k) feed(static_cast<unsigned char>(bits >> (8 * k)));
            }
        }
    }
    return h;
}

namespace {

void validate_image_shape(const Shape& image_shape) {
    if (image_shape.size() != 3 || image_shape[1] != image_shape[2]) {
        throw ConfigError("image shape must be CxHxW with H = W, got " + shape_str(image_shape));
    }
    const std::size_t h = image_shape[1];
    if (h < 8 || (h & (h - 1)) != 0) {
        throw ConfigError("image extent must be a power of two >= 8, got " + std::to_string(h));
    }
}

std::size_t stage_channels(std::size_t base_width, std::size_t stage) {
    return std::min<std::size_t>(base_width << stage, 64);
}

}  // namespace

std::vector<LayerSpec> encoder_spec(const Shape& image_shape, std::size_t base_width) {
    validate_image_shape(image_shape);
    std::vector<LayerSpec> specs;
    std::size_t extent = image_shape[1];
    std::size_t stage = 0;
    while (extent > 2) {  // halve down to a 2x2 plane
        specs.push_back(LayerSpec::conv(stage_channels(base_width, stage), 4, 2, 1));
        specs.push_back(LayerSpec::activation(Act::Relu));
        extent /= 2;
        ++stage;
    }
    specs.push_back(LayerSpec::flatten());
    return specs;
}

std::size_t encoder_feature_dim(const Shape& image_shape, std::size_t base_width) {
    validate_image_shape(image_shape);
    std::size_t extent = image_shape[1], stage = 0;
    while (extent > 2) {
        extent /= 2;
        ++stage;
    }
    return stage_channels(base_width, stage - 1) * 2 * 2;
}

std::vector<LayerSpec> decoder_spec(const Shape& image_shape, std::size_t base_width) {
    validate_image_shape(image_shape);
    std::size_t extent = image_shape[1], stages = 0;
    while (extent > 2) {
        extent /= 2;
        ++stages;
    }
    std::vector<LayerSpec> specs;
    const std::size_t top = stage_channels(base_width, stages - 1);
    specs.push_back(LayerSpec::dense(top * 2 * 2));
    specs.push_back(LayerSpec::activation(Act::Relu));
    specs.push_back(LayerSpec::reshape({top, 2, 2}));
    for (std::size_t s = stages - 1; s > 0; --s) {
        specs.push_back(LayerSpec::conv_transpose(stage_channels(base_width, s - 1), 4, 2, 1));
        specs.push_back(LayerSpec::activation(Act::Relu));
    }
    specs.push_back(LayerSpec::conv_transpose(image_shape[0], 4, 2, 1));
    specs.push_back(LayerSpec::activation(Act::Sigmoid));
    return specs;
}

std::vector<LayerSpec> classifier_spec(const Shape& image_shape, std::size_t base_width) {
    validate_image_shape(image_shape);
    std::vector<LayerSpec> specs;
    std::size_t extent = image_shape[1], stage = 0;
    while (extent > 4) {  // halve down to a 4x4 plane
        specs.push_back(LayerSpec::conv(stage_channels(base_width, stage), 4, 2, 1));
        specs.push_back(LayerSpec::activation(Act::Relu));
        extent /= 2;
        ++stage;
    }
    specs.push_back(LayerSpec::flatten());
    specs.push_back(LayerSpec::dense(64));
    specs.push_back(LayerSpec::activation(Act::Relu));
    specs.push_back(LayerSpec::dense(1));
    specs.push_back(LayerSpec::activation(Act::Sigmoid));
    return specs;
}

std::vector<LayerSpec> predictor_spec(const Shape& image_shape, std::size_t base_width,
                                      std::size_t out_dim) {
    validate_image_shape(image_shape);
    std::vector<LayerSpec> specs;
    std::size_t extent = image_shape[1], stage = 0;
    while (extent > 4) {
        specs.push_back(LayerSpec::conv(stage_channels(base_width, stage), 4, 2, 1));
        specs.push_back(LayerSpec::activation(Act::Relu));
        extent /= 2;
        ++stage;
    }
    specs.push_back(LayerSpec::flatten());
    specs.push_back(LayerSpec::dense(64));
    specs.push_back(LayerSpec::activation(Act::Relu));
    specs.push_back(LayerSpec::dense(out_dim));
    return specs;
}

template <typename T>
Generator<T>::Generator(Shape image_shape, std::size_t latent_dim, bool variational,
                        std::uint64_t seed, std::size_t base_width)
    : image_shape_(image_shape), latent_dim_(latent_dim), variational_(variational) {
    if (latent_dim == 0) throw ConfigError("generator: latent_dim must be positive");
    encoder_ = Network<T>("encoder", encoder_spec(image_shape, base_width), image_shape, seed);
    const std::size_t feat = shape_numel(encoder_.output_shape());
    mu_head_ = Network<T>("mu", {LayerSpec::dense(latent_dim)}, {feat}, seed);
    if (variational) {
        logvar_head_ = Network<T>("logvar", {LayerSpec::dense(latent_dim)}, {feat}, seed);
    }
    decoder_ = Network<T>("decoder", decoder_spec(image_shape, base_width), {latent_dim}, seed);
}

template <typename T>
Generator<T>::Generator(Network<T> encoder, Network<T> mu_head, Network<T> logvar_head,
                        Network<T> decoder, Shape image_shape, std::size_t latent_dim,
                        bool variational)
    : encoder_(std::move(encoder)),
      mu_head_(std::move(mu_head)),
      logvar_head_(std::move(logvar_head)),
      decoder_(std::move(decoder)),
      image_shape_(std::move(image_shape)),
      latent_dim_(latent_dim),
      variational_(variational) {}

template <typename T>
typename Generator<T>::Forward Generator<T>::forward(const Tensor<T>& x,
                                                     const Tensor<T>* eps) const {
    Forward f;
    auto feat = encoder_.forward(x);
    f.mu = mu_head_.forward(feat);
    if (variational_) {
        f.log_var = logvar_head_.forward(feat);
        if (eps != nullptr) {
            if (!ad::same_shape(eps->shape(), f.mu.shape())) {
                throw DimensionError("generator: noise shape " + shape_str(eps->shape()) +
                                     " does not match latent " + shape_str(f.mu.shape()));
            }
            f.z = ad::add(f.mu, ad::mul(ad::exp(ad::scale(f.log_var, T(0.5))), *eps));
        } else {
            f.z = f.mu;
        }
    } else {
        f.z = f.mu;
    }
    f.x_prime = decoder_.forward(f.z);
    return f;
}

template <typename T>
Tensor<T> Generator<T>::decode(const Tensor<T>& z) const {
    if (!variational_) {
        throw UnsupportedError("decode_latent requires a variational generator");
    }
    Tensor<T> batched = z.rank() == 1 ? ad::reshape(z, {1, z.dim(0)}) : z;
    return decoder_.forward(batched);
}

template <typename T>
std::vector<Tensor<T>> Generator<T>::parameters() const {
    std::vector<Tensor<T>> out;
    for (const Network<T>* net : {&encoder_, &mu_head_, &logvar_head_, &decoder_}) {
        auto p = net->parameters();
        out.insert(out.end(), p.begin(), p.end());
    }
    return out;
}

template <typename T>
void Generator<T>::set_trainable(bool trainable) {
    encoder_.set_trainable(trainable);
    mu_head_.set_trainable(trainable);
    if (!logvar_head_.empty()) logvar_head_.set_trainable(trainable);
    decoder_.set_trainable(trainable);
}

template <typename T>
Classifier<T>::Classifier(Shape image_shape, std::uint64_t seed, std::size_t base_width)
    : net_("classifier", classifier_spec(image_shape, base_width), image_shape, seed) {}

template <typename T>
Predictor<T>::Predictor(Shape image_shape, std::size_t out_dim, std::uint64_t seed,
                        std::size_t base_width)
    : net_("predictor", predictor_spec(image_shape, base_width, out_dim), image_shape, seed),
      out_dim_(out_dim) {}

template <typename T>
Tensor<T> kl_to_standard_normal(const Tensor<T>& mu, const Tensor<T>& log_var) {
    if (!ad::same_shape(mu.shape(), log_var.shape())) {
        throw DimensionError("kl_to_standard_normal: mu " + shape_str(mu.shape()) +
                             " and log_var " + shape_str(log_var.shape()) + " do not match");
    }
    mu.ensure_finite("kl_to_standard_normal");
    log_var.ensure_finite("kl_to_standard_normal");
    const std::size_t batch = mu.rank() == 2 ? mu.dim(0) : 1;
    auto ones = Tensor<T>::full(mu.shape(), T(1));
    auto term = ad::sub(ad::sub(ad::add(ad::mul(mu, mu), ad::exp(log_var)), ones), log_var);
    return ad::scale(ad::sum(term), T(0.5) / static_cast<T>(batch));
}

template class Network<float>;
template class Network<double>;
template class Generator<float>;
template class Generator<double>;
template class Classifier<float>;
template class Classifier<double>;
template class Predictor<float>;
template class Predictor<double>;
template std::uint64_t weight_hash<float>(const std::vector<Tensor<float>>&);
template std::uint64_t weight_hash<double>(const std::vector<Tensor<double>>&);
template Tensor<float> kl_to_standard_normal<float>(const Tensor<float>&, const Tensor<float>&);
template Tensor<double> kl_to_standard_normal<double>(const Tensor<double>&,
                                                      const Tensor<double>&);

}  // namespace cgen::nn
