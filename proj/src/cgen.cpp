#include "cgen/cgen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "cgen/optim.hpp"

namespace cgen {

using ad::Shape;
using ad::Tensor;

namespace {

std::vector<std::size_t> shuffled_indices(std::size_t n, Rng& rng) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    for (std::size_t i = n; i > 1; --i) {
        const auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<long long>(i) - 1));
        std::swap(idx[i - 1], idx[j]);
    }
    return idx;
}

// Copies the selected leading-dimension rows into a fresh leaf tensor.
template <typename T>
Tensor<T> gather_rows(const Tensor<T>& data, const std::vector<std::size_t>& idx) {
    Shape s = data.shape();
    const std::size_t row = data.numel() / s[0];
    s[0] = idx.size();
    auto out = Tensor<T>::zeros(s);
    for (std::size_t i = 0; i < idx.size(); ++i) {
        std::copy_n(data.data().begin() + idx[i] * row, row, out.data().begin() + i * row);
    }
    return out;
}

template <typename T>
Tensor<T> with_batch(const Tensor<T>& x, const Shape& image_shape) {
    if (x.rank() == image_shape.size() + 1) return x;
    if (!ad::same_shape(x.shape(), image_shape)) {
        throw DimensionError("expected an image of shape " + ad::shape_str(image_shape) +
                             ", got " + ad::shape_str(x.shape()));
    }
    Shape s{1};
    s.insert(s.end(), image_shape.begin(), image_shape.end());
    return ad::reshape(x, s);
}

template <typename T>
Tensor<T> strip_batch(const Tensor<T>& xb) {
    return ad::reshape(xb, Shape(xb.shape().begin() + 1, xb.shape().end()));
}

// RAII freeze of a parameter set via the shared requires_grad flags; restores
// the previous flags on scope exit.
template <typename T>
class FreezeGuard {
public:
    explicit FreezeGuard(std::vector<Tensor<T>> params) : params_(std::move(params)) {
        prev_.reserve(params_.size());
        for (auto& p : params_) {
            prev_.push_back(p.requires_grad());
            p.set_requires_grad(false);
        }
    }
    ~FreezeGuard() {
        for (std::size_t i = 0; i < params_.size(); ++i) {
            params_[i].set_requires_grad(prev_[i]);
        }
    }
    FreezeGuard(const FreezeGuard&) = delete;
    FreezeGuard& operator=(const FreezeGuard&) = delete;

private:
    std::vector<Tensor<T>> params_;
    std::vector<bool> prev_;
};

bool in_unit_interval(double v) { return v >= 0.0 && v <= 1.0; }

std::string fmt_real(double v) {
    std::ostringstream o;
    o << std::setprecision(10) << v;
    return o.str();
}

}  // namespace

void validate_weights(const CGenWeights& weights) {
    if (weights.mode == CGenMode::Classification) {
        if (!in_unit_interval(weights.alpha)) {
            throw ConfigError("alpha must lie in [0,1], got " + fmt_real(weights.alpha));
        }
        if (weights.beta != 0.0 || weights.gamma != 0.0) {
            throw ConfigError("classification mode uses alpha only; beta/gamma must stay unset");
        }
    } else {
        if (!in_unit_interval(weights.alpha) || !in_unit_interval(weights.beta) ||
            !in_unit_interval(weights.gamma)) {
            throw ConfigError("regression weights alpha/beta/gamma must each lie in [0,1]");
        }
    }
}

void validate_train_config(const TrainConfig& cfg) {
    if (cfg.epochs == 0 || cfg.batch_size == 0 || cfg.gen_per_cls == 0) {
        throw ConfigError("training epochs, batch size, and alternation ratio must be positive");
    }
    if (cfg.lr_generator <= 0.0 || cfg.lr_classifier <= 0.0) {
        throw ConfigError("learning rates must be positive");
    }
    validate_weights(cfg.weights);
}

template <typename T>
LossTerms<T> cgen_loss_classification(const Tensor<T>& x, const Tensor<T>& x_prime,
                                      const nn::Classifier<T>& classifier, double alpha) {
    if (!in_unit_interval(alpha)) {
        throw ConfigError("alpha must lie in [0,1], got " + fmt_real(alpha));
    }
    if (!ad::same_shape(x.shape(), x_prime.shape())) {
        throw DimensionError("counterfactual shape " + ad::shape_str(x_prime.shape()) +
                             " does not match the input " + ad::shape_str(x.shape()));
    }
    auto l_g = ad::mse(x, x_prime);
    auto probs = classifier.prob(x_prime);
    auto l_c = ad::mse(probs, Tensor<T>::full(probs.shape(), T(1)));
    auto total = ad::add(ad::scale(l_g, static_cast<T>(1.0 - alpha)),
                         ad::scale(l_c, static_cast<T>(alpha)));

    LossTerms<T> terms;
    terms.total = total;
    terms.l_g = static_cast<double>(l_g.item());
    terms.l_c = static_cast<double>(l_c.item());
    terms.l_total = static_cast<double>(total.item());
    return terms;
}

template <typename T>
LossTerms<T> cgen_loss_regression(const Tensor<T>& x, const Tensor<T>& x_prime,
                                  const nn::Classifier<T>& classifier,
                                  const nn::Predictor<T>& predictor, const Tensor<T>& t_r,
                                  const CGenWeights& weights) {
    if (weights.mode != CGenMode::Regression) {
        throw ConfigError("cgen_loss_regression needs regression-mode weights");
    }
    validate_weights(weights);
    if (!predictor.frozen()) {
        throw StateError("the predictor must be frozen during counterfactual training");
    }
    if (!ad::same_shape(x.shape(), x_prime.shape())) {
        throw DimensionError("counterfactual shape " + ad::shape_str(x_prime.shape()) +
                             " does not match the input " + ad::shape_str(x.shape()));
    }
    if (t_r.rank() != 2 || t_r.dim(1) != predictor.out_dim() || t_r.dim(0) != x.dim(0)) {
        throw DimensionError("goal tensor " + ad::shape_str(t_r.shape()) + " does not match [" +
                             std::to_string(x.dim(0)) + "," +
                             std::to_string(predictor.out_dim()) + "]");
    }

    auto l_g = ad::mse(x, x_prime);
    auto probs = classifier.prob(x_prime);
    auto l_c = ad::mse(probs, Tensor<T>::full(probs.shape(), T(1)));
    auto l_p = ad::mse(predictor.predict(x_prime), t_r);
    auto total = ad::add(ad::add(ad::scale(l_g, static_cast<T>(weights.alpha)),
                                 ad::scale(l_c, static_cast<T>(weights.beta))),
                         ad::scale(l_p, static_cast<T>(weights.gamma)));

    LossTerms<T> terms;
    terms.total = total;
    terms.l_g = static_cast<double>(l_g.item());
    terms.l_c = static_cast<double>(l_c.item());
    terms.l_p = static_cast<double>(l_p.item());
    terms.l_total = static_cast<double>(total.item());
    return terms;
}

void write_training_csv(const std::string& path, const TrainLog& log) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out << "epoch,l_g,l_c,l_p,l_total,classifier_acc\n";
    for (const auto& r : log.rows) {
        out << r.epoch << ',' << fmt_real(r.l_g) << ',' << fmt_real(r.l_c) << ','
            << fmt_real(r.l_p) << ',' << fmt_real(r.l_total) << ','
            << fmt_real(r.classifier_acc) << '\n';
    }
    out.flush();
    if (!out) throw IoError("failed while writing " + path);
}

template <typename T>
TrainLog pretrain_generator(nn::Generator<T>& g, const Tensor<T>& images,
                            const PretrainConfig& cfg) {
    if (!images.valid() || images.rank() < 2 || images.dim(0) == 0) {
        throw ValidationError("pretrain_generator: the dataset is empty");
    }
    if (cfg.epochs == 0 || cfg.batch_size == 0 || cfg.lr <= 0.0) {
        throw ConfigError("pretrain epochs, batch size, and learning rate must be positive");
    }

    const std::size_t n = images.dim(0);
    const std::size_t val_n =
        n >= 10 ? static_cast<std::size_t>(std::llround(cfg.val_fraction * static_cast<double>(n)))
                : 0;
    const std::size_t train_n = n - val_n;

    TrainLog log;
    ad::Optimizer<T> opt(ad::OptKind::Adam, static_cast<T>(cfg.lr), g.parameters());

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng rng(derive_seed(cfg.seed, "pretrain", epoch));
        const auto order = shuffled_indices(train_n, rng);
        double sum_g = 0.0, sum_total = 0.0;
        std::size_t batches = 0;

        for (std::size_t start = 0; start < train_n; start += cfg.batch_size) {
            const std::size_t stop = std::min(train_n, start + cfg.batch_size);
            const std::vector<std::size_t> slice(order.begin() + start, order.begin() + stop);
            auto xb = gather_rows(images, slice);

            ad::TapeScope<T> scope;
            typename nn::Generator<T>::Forward f;
            Tensor<T> eps;
            if (g.variational()) {
                eps = Tensor<T>::zeros({slice.size(), g.latent_dim()});
                for (auto& e : eps.data()) e = static_cast<T>(rng.normal(0.0, 1.0));
                f = g.forward(xb, &eps);
            } else {
                f = g.forward(xb, nullptr);
            }
            auto l_g = ad::mse(xb, f.x_prime);
            auto total = l_g;
            if (g.variational()) {
                auto kl = nn::kl_to_standard_normal(f.mu, f.log_var);
                total = ad::add(l_g, ad::scale(kl, static_cast<T>(cfg.kl_weight)));
            }
            scope.backward(total);
            opt.step();

            sum_g += static_cast<double>(l_g.item());
            sum_total += static_cast<double>(total.item());
            ++batches;
        }

        TrainLogRow row;
        row.epoch = epoch;
        row.phase = "pretrain";
        row.l_g = sum_g / static_cast<double>(batches);
        row.l_total = sum_total / static_cast<double>(batches);
        row.hash_generator = g.hash();
        log.rows.push_back(row);
    }

    // held-out reconstruction error, deterministic path (z = mu)
    const std::size_t v0 = val_n > 0 ? train_n : 0;
    const std::size_t vn = val_n > 0 ? val_n : n;
    double val_sum = 0.0;
    for (std::size_t start = v0; start < v0 + vn; start += cfg.batch_size) {
        const std::size_t stop = std::min(v0 + vn, start + cfg.batch_size);
        std::vector<std::size_t> slice(stop - start);
        for (std::size_t i = 0; i < slice.size(); ++i) slice[i] = start + i;
        auto xb = gather_rows(images, slice);
        const auto f = g.forward(xb, nullptr);
        val_sum +=
            static_cast<double>(ad::mse(xb, f.x_prime).item()) * static_cast<double>(slice.size());
    }
    log.validation_mse = val_sum / static_cast<double>(vn);
    if (log.validation_mse > cfg.val_threshold) {
        log.validation_warn = true;
        log.warnings.push_back("validation reconstruction mse " + fmt_real(log.validation_mse) +
                               " misses the target " + fmt_real(cfg.val_threshold));
    }
    return log;
}

namespace {

// One classifier epoch over {positives -> 1, negatives -> 0}; both pools are
// cycled through shuffled orders so each batch stays balanced.
template <typename T>
std::pair<double, double> classifier_epoch(nn::Classifier<T>& c, ad::Optimizer<T>& opt,
                                           const Tensor<T>& positives, const Tensor<T>& negatives,
                                           std::size_t batch_size, Rng& rng) {
    const std::size_t np = positives.dim(0), nq = negatives.dim(0);
    const auto pos_order = shuffled_indices(np, rng);
    const auto neg_order = shuffled_indices(nq, rng);
    const std::size_t half = std::max<std::size_t>(1, batch_size / 2);
    const std::size_t rounds = (std::max(np, nq) + half - 1) / half;

    double loss_sum = 0.0;
    std::size_t correct = 0, seen = 0;
    for (std::size_t r = 0; r < rounds; ++r) {
        std::vector<std::size_t> pos_idx(half), neg_idx(half);
        for (std::size_t i = 0; i < half; ++i) {
            pos_idx[i] = pos_order[(r * half + i) % np];
            neg_idx[i] = neg_order[(r * half + i) % nq];
        }
        auto xp = gather_rows(positives, pos_idx);
        auto xn = gather_rows(negatives, neg_idx);
        Shape s = xp.shape();
        s[0] = 2 * half;
        auto xb = Tensor<T>::zeros(s);
        std::copy_n(xp.data().begin(), xp.numel(), xb.data().begin());
        std::copy_n(xn.data().begin(), xn.numel(), xb.data().begin() + xp.numel());
        auto yb = Tensor<T>::zeros({2 * half, 1});
        for (std::size_t i = 0; i < half; ++i) yb.data()[i] = T(1);

        ad::TapeScope<T> scope;
        auto probs = c.prob(xb);
        auto loss = ad::bce(probs, yb);
        scope.backward(loss);
        opt.step();

        loss_sum += static_cast<double>(loss.item());
        for (std::size_t i = 0; i < 2 * half; ++i) {
            const bool pred = probs.data()[i] > T(0.5);
            const bool truth = yb.data()[i] > T(0.5);
            if (pred == truth) ++correct;
            ++seen;
        }
    }
    return {loss_sum / static_cast<double>(rounds),
            static_cast<double>(correct) / static_cast<double>(seen)};
}

// Adversarial epochs run the deterministic path z = mu, which never touches
// the log-variance head; the generator optimizer therefore covers only the
// parameters that path can reach.
template <typename T>
std::vector<Tensor<T>> deterministic_path_params(const nn::Generator<T>& g) {
    auto out = g.encoder().parameters();
    const auto mu = g.mu_head().parameters();
    const auto dec = g.decoder().parameters();
    out.insert(out.end(), mu.begin(), mu.end());
    out.insert(out.end(), dec.begin(), dec.end());
    return out;
}

// Forward-only generator pass over a sample of `inputs` (no tape, leaf out).
template <typename T>
Tensor<T> generate_pool(const nn::Generator<T>& g, const Tensor<T>& inputs,
                        std::size_t count, Rng& rng) {
    const auto order = shuffled_indices(inputs.dim(0), rng);
    std::vector<std::size_t> idx(count);
    for (std::size_t i = 0; i < count; ++i) idx[i] = order[i % order.size()];
    const auto xb = gather_rows(inputs, idx);
    return g.forward(xb, nullptr).x_prime;
}

}  // namespace

template <typename T>
TrainLog train_classifier(nn::Classifier<T>& c, const Tensor<T>& positives,
                          const Tensor<T>& negatives, const SupervisedConfig& cfg) {
    if (!positives.valid() || positives.dim(0) == 0 || !negatives.valid() ||
        negatives.dim(0) == 0) {
        throw ValidationError("train_classifier: both image pools must be non-empty");
    }
    if (cfg.epochs == 0 || cfg.batch_size == 0 || cfg.lr <= 0.0) {
        throw ConfigError("classifier epochs, batch size, and learning rate must be positive");
    }

    TrainLog log;
    ad::Optimizer<T> opt(ad::OptKind::Adam, static_cast<T>(cfg.lr), c.parameters());
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng rng(derive_seed(cfg.seed, "classifier", epoch));
        const auto [loss, acc] = classifier_epoch(c, opt, positives, negatives, cfg.batch_size, rng);
        TrainLogRow row;
        row.epoch = epoch;
        row.phase = "classifier";
        row.l_c = loss;
        row.l_total = loss;
        row.classifier_acc = acc;
        row.hash_classifier = c.hash();
        log.rows.push_back(row);
    }
    return log;
}

template <typename T>
TrainLog train_predictor(nn::Predictor<T>& p, const Tensor<T>& images, const Tensor<T>& targets,
                         const SupervisedConfig& cfg) {
    if (!images.valid() || images.dim(0) == 0) {
        throw ValidationError("train_predictor: the dataset is empty");
    }
    if (targets.rank() != 2 || targets.dim(0) != images.dim(0) ||
        targets.dim(1) != p.out_dim()) {
        throw DimensionError("predictor targets " + ad::shape_str(targets.shape()) +
                             " do not match [" + std::to_string(images.dim(0)) + "," +
                             std::to_string(p.out_dim()) + "]");
    }
    if (p.frozen()) {
        throw StateError("train_predictor: the predictor is frozen");
    }
    if (cfg.epochs == 0 || cfg.batch_size == 0 || cfg.lr <= 0.0) {
        throw ConfigError("predictor epochs, batch size, and learning rate must be positive");
    }

    TrainLog log;
    ad::Optimizer<T> opt(ad::OptKind::Adam, static_cast<T>(cfg.lr), p.parameters());
    const std::size_t n = images.dim(0);
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng rng(derive_seed(cfg.seed, "predictor", epoch));
        const auto order = shuffled_indices(n, rng);
        double sum = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < n; start += cfg.batch_size) {
            const std::size_t stop = std::min(n, start + cfg.batch_size);
            const std::vector<std::size_t> slice(order.begin() + start, order.begin() + stop);
            auto xb = gather_rows(images, slice);
            auto yb = gather_rows(targets, slice);

            ad::TapeScope<T> scope;
            auto loss = ad::mse(p.predict(xb), yb);
            scope.backward(loss);
            opt.step();
            sum += static_cast<double>(loss.item());
            ++batches;
        }
        TrainLogRow row;
        row.epoch = epoch;
        row.phase = "predictor";
        row.l_p = sum / static_cast<double>(batches);
        row.l_total = row.l_p;
        row.hash_predictor = p.hash();
        log.rows.push_back(row);
    }
    return log;
}

template <typename T>
TrainLog train_cgen_classification(nn::Generator<T>& g, nn::Classifier<T>& c,
                                   const Tensor<T>& inputs, const Tensor<T>& target_images,
                                   const TrainConfig& cfg) {
    validate_train_config(cfg);
    if (cfg.weights.mode != CGenMode::Classification) {
        throw ConfigError("train_cgen_classification needs classification-mode weights");
    }
    if (!inputs.valid() || inputs.dim(0) == 0 || !target_images.valid() ||
        target_images.dim(0) == 0) {
        throw ValidationError("train_cgen_classification: both image pools must be non-empty");
    }

    TrainLog log;
    if (!cfg.generator_pretrained) {
        log.warnings.push_back("generator enters adversarial training without pretraining");
    }
    if (!cfg.classifier_pretrained) {
        log.warnings.push_back("classifier enters adversarial training without pretraining");
    }

    ad::Optimizer<T> opt_g(ad::OptKind::Adam, static_cast<T>(cfg.lr_generator),
                           deterministic_path_params(g));
    ad::Optimizer<T> opt_c(ad::OptKind::Adam, static_cast<T>(cfg.lr_classifier), c.parameters());
    const std::size_t cycle = cfg.gen_per_cls + 1;
    const std::size_t n_in = inputs.dim(0);
    double last_acc = 0.0;

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng rng(derive_seed(cfg.seed, "cgen", epoch));
        TrainLogRow row;
        row.epoch = epoch;

        if (epoch % cycle < cfg.gen_per_cls) {
            // generator epoch: Eq-style weighted loss against the frozen classifier
            c.set_trainable(false);
            g.set_trainable(true);
            const auto order = shuffled_indices(n_in, rng);
            double sum_g = 0.0, sum_c = 0.0, sum_total = 0.0;
            std::size_t batches = 0;
            for (std::size_t start = 0; start < n_in; start += cfg.batch_size) {
                const std::size_t stop = std::min(n_in, start + cfg.batch_size);
                const std::vector<std::size_t> slice(order.begin() + start, order.begin() + stop);
                auto xb = gather_rows(inputs, slice);

                ad::TapeScope<T> scope;
                const auto f = g.forward(xb, nullptr);
                auto terms = cgen_loss_classification(xb, f.x_prime, c, cfg.weights.alpha);
                scope.backward(terms.total);
                opt_g.step();
                sum_g += terms.l_g;
                sum_c += terms.l_c;
                sum_total += terms.l_total;
                ++batches;
            }
            row.phase = "generator";
            row.l_g = sum_g / static_cast<double>(batches);
            row.l_c = sum_c / static_cast<double>(batches);
            row.l_total = sum_total / static_cast<double>(batches);
            row.classifier_acc = last_acc;
        } else {
            // classifier epoch: discriminate real target-class images from
            // generator output, generator frozen
            g.set_trainable(false);
            c.set_trainable(true);
            const auto fakes = generate_pool(g, inputs, n_in, rng);
            const auto [loss, acc] =
                classifier_epoch(c, opt_c, target_images, fakes, cfg.batch_size, rng);
            row.phase = "classifier";
            row.l_c = loss;
            row.l_total = loss;
            row.classifier_acc = acc;
            last_acc = acc;
        }

        row.hash_generator = g.hash();
        row.hash_classifier = c.hash();
        log.rows.push_back(row);
    }

    g.set_trainable(true);
    c.set_trainable(true);
    return log;
}

template <typename T>
TrainLog train_cgen_regression(nn::Generator<T>& g, nn::Classifier<T>& c,
                               const nn::Predictor<T>& predictor, const Tensor<T>& inputs,
                               const Tensor<T>& goals, const Tensor<T>& real_images,
                               const TrainConfig& cfg) {
    validate_train_config(cfg);
    if (cfg.weights.mode != CGenMode::Regression) {
        throw ConfigError("train_cgen_regression needs regression-mode weights");
    }
    if (!predictor.frozen()) {
        throw StateError("the predictor must be frozen during counterfactual training");
    }
    if (!inputs.valid() || inputs.dim(0) == 0 || !real_images.valid() ||
        real_images.dim(0) == 0) {
        throw ValidationError("train_cgen_regression: both image pools must be non-empty");
    }
    if (goals.rank() != 2 || goals.dim(0) != inputs.dim(0) ||
        goals.dim(1) != predictor.out_dim()) {
        throw DimensionError("goal tensor " + ad::shape_str(goals.shape()) + " does not match [" +
                             std::to_string(inputs.dim(0)) + "," +
                             std::to_string(predictor.out_dim()) + "]");
    }

    TrainLog log;
    if (!cfg.generator_pretrained) {
        log.warnings.push_back("generator enters adversarial training without pretraining");
    }
    if (!cfg.classifier_pretrained) {
        log.warnings.push_back("classifier enters adversarial training without pretraining");
    }

    ad::Optimizer<T> opt_g(ad::OptKind::Adam, static_cast<T>(cfg.lr_generator),
                           deterministic_path_params(g));
    ad::Optimizer<T> opt_c(ad::OptKind::Adam, static_cast<T>(cfg.lr_classifier), c.parameters());
    const std::size_t cycle = cfg.gen_per_cls + 1;
    const std::size_t n_in = inputs.dim(0);
    double last_acc = 0.0;

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng rng(derive_seed(cfg.seed, "cgen", epoch));
        TrainLogRow row;
        row.epoch = epoch;

        if (epoch % cycle < cfg.gen_per_cls) {
            c.set_trainable(false);
            g.set_trainable(true);
            const auto order = shuffled_indices(n_in, rng);
            double sum_g = 0.0, sum_c = 0.0, sum_p = 0.0, sum_total = 0.0;
            std::size_t batches = 0;
            for (std::size_t start = 0; start < n_in; start += cfg.batch_size) {
                const std::size_t stop = std::min(n_in, start + cfg.batch_size);
                const std::vector<std::size_t> slice(order.begin() + start, order.begin() + stop);
                auto xb = gather_rows(inputs, slice);
                auto tb = gather_rows(goals, slice);

                ad::TapeScope<T> scope;
                const auto f = g.forward(xb, nullptr);
                auto terms = cgen_loss_regression(xb, f.x_prime, c, predictor, tb, cfg.weights);
                scope.backward(terms.total);
                opt_g.step();
                sum_g += terms.l_g;
                sum_c += terms.l_c;
                sum_p += terms.l_p;
                sum_total += terms.l_total;
                ++batches;
            }
            row.phase = "generator";
            row.l_g = sum_g / static_cast<double>(batches);
            row.l_c = sum_c / static_cast<double>(batches);
            row.l_p = sum_p / static_cast<double>(batches);
            row.l_total = sum_total / static_cast<double>(batches);
            row.classifier_acc = last_acc;
        } else {
            g.set_trainable(false);
            c.set_trainable(true);
            const auto fakes = generate_pool(g, inputs, n_in, rng);
            const auto [loss, acc] =
                classifier_epoch(c, opt_c, real_images, fakes, cfg.batch_size, rng);
            row.phase = "classifier";
            row.l_c = loss;
            row.l_total = loss;
            row.classifier_acc = acc;
            last_acc = acc;
        }

        row.hash_generator = g.hash();
        row.hash_classifier = c.hash();
        row.hash_predictor = predictor.hash();
        log.rows.push_back(row);
    }

    g.set_trainable(true);
    c.set_trainable(true);
    return log;
}

template <typename T>
CounterfactualResult<T> make_counterfactual(const nn::Generator<T>& g, const nn::Classifier<T>& c,
                                            const nn::Predictor<T>* predictor, const Tensor<T>& x,
                                            const Tensor<T>* t_r, const CGenWeights& weights) {
    validate_weights(weights);
    const auto xb = with_batch(x, g.image_shape());
    const auto f = g.forward(xb, nullptr);

    CounterfactualResult<T> res;
    res.original = strip_batch(xb);
    res.counterfactual = strip_batch(f.x_prime);
    res.converged = true;

    if (weights.mode == CGenMode::Classification) {
        const auto terms = cgen_loss_classification(xb, f.x_prime, c, weights.alpha);
        res.l_g = terms.l_g;
        res.l_c = terms.l_c;
        res.l_total = terms.l_total;
    } else {
        if (predictor == nullptr || t_r == nullptr) {
            throw ConfigError("regression counterfactuals need a predictor and a goal");
        }
        Tensor<T> tb = *t_r;
        if (tb.rank() == 1) tb = ad::reshape(tb, {1, tb.numel()});
        const auto terms = cgen_loss_regression(xb, f.x_prime, c, *predictor, tb, weights);
        res.l_g = terms.l_g;
        res.l_c = terms.l_c;
        res.l_p = terms.l_p;
        res.l_total = terms.l_total;
        const auto pred = predictor->predict(f.x_prime);
        res.prediction.assign(pred.data().begin(), pred.data().end());
    }
    res.classifier_prob = static_cast<double>(c.prob(f.x_prime).item());
    return res;
}

template <typename T>
LatentTrace<T> minimize_latent(const Tensor<T>& z0,
                               const std::function<Tensor<T>(const Tensor<T>&)>& loss_fn,
                               std::size_t max_steps, double lr, double rel_tol,
                               std::size_t patience) {
    if (max_steps == 0 || lr <= 0.0 || patience == 0) {
        throw ConfigError("latent search needs positive steps, learning rate, and patience");
    }

    auto z = Tensor<T>::from(z0.shape(), std::vector<T>(z0.data().begin(), z0.data().end()));
    z.set_requires_grad(true).set_name("z");
    ad::Optimizer<T> opt(ad::OptKind::SGD, static_cast<T>(lr), {z});

    LatentTrace<T> trace;
    std::vector<T> best(z.data().begin(), z.data().end());
    double best_loss = std::numeric_limits<double>::infinity();
    std::size_t streak = 0;

    for (std::size_t step = 0; step < max_steps; ++step) {
        ad::TapeScope<T> scope;
        auto loss = loss_fn(z);
        if (!loss.valid() || loss.numel() != 1) {
            throw DimensionError("the latent loss must be a scalar");
        }
        const double l = static_cast<double>(loss.item());
        const double prev_best = best_loss;
        if (l < best_loss) {
            best_loss = l;
            best.assign(z.data().begin(), z.data().end());
        }
        trace.best_by_step.push_back(best_loss);
        scope.backward(loss);
        opt.step();
        trace.variables_per_step = opt.last_step_scalar_count();
        ++trace.iterations;

        if (std::isfinite(prev_best)) {
            const double rel =
                (prev_best - best_loss) / std::max(std::abs(prev_best), 1e-12);
            streak = rel < rel_tol ? streak + 1 : 0;
            if (streak >= patience) {
                trace.converged = true;
                break;
            }
        }
    }

    trace.best_z = Tensor<T>::from(z0.shape(), std::move(best));
    trace.best_loss = best_loss;
    return trace;
}

template <typename T>
CounterfactualResult<T> latent_counterfactual_search(const nn::Generator<T>& g,
                                                     const nn::Classifier<T>& c,
                                                     const nn::Predictor<T>& predictor,
                                                     const Tensor<T>& x, const Tensor<T>& t_r,
                                                     const LatentSearchConfig& cfg) {
    if (!g.variational()) {
        throw UnsupportedError("latent counterfactual search needs a variational generator");
    }
    if (cfg.weights.mode != CGenMode::Regression) {
        throw ConfigError("latent counterfactual search needs regression-mode weights");
    }
    validate_weights(cfg.weights);
    if (!predictor.frozen()) {
        throw StateError("the predictor must be frozen during counterfactual search");
    }

    const auto xb = with_batch(x, g.image_shape());
    Tensor<T> tb = t_r;
    if (tb.rank() == 1) tb = ad::reshape(tb, {1, tb.numel()});
    if (tb.rank() != 2 || tb.dim(0) != 1 || tb.dim(1) != predictor.out_dim()) {
        throw DimensionError("goal tensor " + ad::shape_str(t_r.shape()) +
                             " does not match the predictor output [1," +
                             std::to_string(predictor.out_dim()) + "]");
    }

    // only z moves: freeze every model parameter for the duration
    FreezeGuard<T> freeze_g(g.parameters());
    FreezeGuard<T> freeze_c(c.parameters());
    FreezeGuard<T> freeze_p(predictor.parameters());

    const auto mu = g.forward(xb, nullptr).mu;
    const auto ones = Tensor<T>::full({1, 1}, T(1));
    const auto loss_fn = [&](const Tensor<T>& z) {
        auto xp = g.decode(z);
        auto l_g = ad::mse(xb, xp);
        auto l_c = ad::mse(c.prob(xp), ones);
        auto l_p = ad::mse(predictor.predict(xp), tb);
        return ad::add(ad::add(ad::scale(l_g, static_cast<T>(cfg.weights.alpha)),
                               ad::scale(l_c, static_cast<T>(cfg.weights.beta))),
                       ad::scale(l_p, static_cast<T>(cfg.weights.gamma)));
    };
    const auto trace =
        minimize_latent<T>(mu, loss_fn, cfg.max_steps, cfg.lr, cfg.rel_tol, cfg.patience);

    const auto xp = g.decode(trace.best_z);
    CounterfactualResult<T> res;
    res.original = strip_batch(xb);
    res.counterfactual = strip_batch(xp);
    res.l_g = static_cast<double>(ad::mse(xb, xp).item());
    res.l_c = static_cast<double>(ad::mse(c.prob(xp), ones).item());
    res.l_p = static_cast<double>(ad::mse(predictor.predict(xp), tb).item());
    res.l_total = cfg.weights.alpha * res.l_g + cfg.weights.beta * res.l_c +
                  cfg.weights.gamma * res.l_p;
    res.classifier_prob = static_cast<double>(c.prob(xp).item());
    const auto pred = predictor.predict(xp);
    res.prediction.assign(pred.data().begin(), pred.data().end());
    res.iterations = trace.iterations;
    res.converged = trace.converged;
    res.variables_per_step = trace.variables_per_step;
    return res;
}

template <typename T>
Tensor<T> denoise(const Tensor<T>& x_prime, const nn::Generator<T>& denoiser) {
    const bool batched = x_prime.rank() == denoiser.image_shape().size() + 1;
    const auto xb = batched ? x_prime : with_batch(x_prime, denoiser.image_shape());
    const auto out = denoiser.forward(xb, nullptr).x_prime;
    return batched ? out : strip_batch(out);
}

template <typename T>
DiffReport<T> counterfactual_diff(const Tensor<T>& x, const Tensor<T>& x_prime,
                                  double threshold) {
    if (!ad::same_shape(x.shape(), x_prime.shape())) {
        throw DimensionError("diff inputs disagree: " + ad::shape_str(x.shape()) + " vs " +
                             ad::shape_str(x_prime.shape()));
    }
    if (x.rank() < 2) {
        throw DimensionError("diff inputs must be images, got " + ad::shape_str(x.shape()));
    }
    const std::size_t h = x.dim(x.rank() - 2);
    const std::size_t w = x.dim(x.rank() - 1);
    if (h * w != x.numel()) {
        throw DimensionError("diff explanations support single-channel images only, got " +
                             ad::shape_str(x.shape()));
    }

    DiffReport<T> report;
    report.diff = Tensor<T>::zeros(x.shape());
    report.mask = Tensor<T>::zeros(x.shape());
    for (std::size_t i = 0; i < x.numel(); ++i) {
        const T d = x_prime.data()[i] - x.data()[i];
        report.diff.data()[i] = d;
        if (std::abs(static_cast<double>(d)) > threshold) report.mask.data()[i] = T(1);
    }

    // 4-connected components over the mask
    std::vector<char> seen(h * w, 0);
    for (std::size_t start = 0; start < h * w; ++start) {
        if (seen[start] || report.mask.data()[start] == T(0)) continue;
        DiffRegion region;
        double wsum = 0.0, rsum = 0.0, csum = 0.0, dsum = 0.0;
        std::vector<std::size_t> queue{start};
        seen[start] = 1;
        while (!queue.empty()) {
            const std::size_t p = queue.back();
            queue.pop_back();
            const std::size_t r = p / w, cc = p % w;
            const double d = static_cast<double>(report.diff.data()[p]);
            const double weight = std::abs(d);
            wsum += weight;
            rsum += weight * (static_cast<double>(r) + 0.5);
            csum += weight * (static_cast<double>(cc) + 0.5);
            dsum += d;
            ++region.area;

            const std::size_t neighbors[4] = {p >= w ? p - w : p, p + w, p > 0 ? p - 1 : p,
                                              p + 1};
            const bool valid[4] = {p >= w, p + w < h * w, cc > 0, cc + 1 < w};
            for (int k = 0; k < 4; ++k) {
                const std::size_t q = neighbors[k];
                if (!valid[k] || seen[q] || report.mask.data()[q] == T(0)) continue;
                seen[q] = 1;
                queue.push_back(q);
            }
        }
        region.row = rsum / wsum;
        region.col = csum / wsum;
        region.mean_diff = dsum / static_cast<double>(region.area);
        report.regions.push_back(region);
    }
    std::sort(report.regions.begin(), report.regions.end(),
              [](const DiffRegion& a, const DiffRegion& b) {
                  if (a.area != b.area) return a.area > b.area;
                  if (a.row != b.row) return a.row < b.row;
                  return a.col < b.col;
              });
    return report;
}

template LossTerms<float> cgen_loss_classification<float>(const Tensor<float>&,
                                                          const Tensor<float>&,
                                                          const nn::Classifier<float>&, double);
template LossTerms<double> cgen_loss_classification<double>(const Tensor<double>&,
                                                            const Tensor<double>&,
                                                            const nn::Classifier<double>&, double);
template LossTerms<float> cgen_loss_regression<float>(const Tensor<float>&, const Tensor<float>&,
                                                      const nn::Classifier<float>&,
                                                      const nn::Predictor<float>&,
                                                      const Tensor<float>&, const CGenWeights&);
template LossTerms<double> cgen_loss_regression<double>(const Tensor<double>&,
                                                        const Tensor<double>&,
                                                        const nn::Classifier<double>&,
                                                        const nn::Predictor<double>&,
                                                        const Tensor<double>&, const CGenWeights&);
template TrainLog pretrain_generator<float>(nn::Generator<float>&, const Tensor<float>&,
                                            const PretrainConfig&);
template TrainLog pretrain_generator<double>(nn::Generator<double>&, const Tensor<double>&,
                                             const PretrainConfig&);
template TrainLog train_classifier<float>(nn::Classifier<float>&, const Tensor<float>&,
                                          const Tensor<float>&, const SupervisedConfig&);
template TrainLog train_classifier<double>(nn::Classifier<double>&, const Tensor<double>&,
                                           const Tensor<double>&, const SupervisedConfig&);
template TrainLog train_predictor<float>(nn::Predictor<float>&, const Tensor<float>&,
                                         const Tensor<float>&, const SupervisedConfig&);
template TrainLog train_predictor<double>(nn::Predictor<double>&, const Tensor<double>&,
                                          const Tensor<double>&, const SupervisedConfig&);
template TrainLog train_cgen_classification<float>(nn::Generator<float>&, nn::Classifier<float>&,
                                                   const Tensor<float>&, const Tensor<float>&,
                                                   const TrainConfig&);
template TrainLog train_cgen_classification<double>(nn::Generator<double>&,
                                                    nn::Classifier<double>&,
                                                    const Tensor<double>&, const Tensor<double>&,
                                                    const TrainConfig&);
template TrainLog train_cgen_regression<float>(nn::Generator<float>&, nn::Classifier<float>&,
                                               const nn::Predictor<float>&, const Tensor<float>&,
                                               const Tensor<float>&, const Tensor<float>&,
                                               const TrainConfig&);
template TrainLog train_cgen_regression<double>(nn::Generator<double>&, nn::Classifier<double>&,
                                                const nn::Predictor<double>&,
                                                const Tensor<double>&, const Tensor<double>&,
                                                const Tensor<double>&, const TrainConfig&);
template CounterfactualResult<float> make_counterfactual<float>(
    const nn::Generator<float>&, const nn::Classifier<float>&, const nn::Predictor<float>*,
    const Tensor<float>&, const Tensor<float>*, const CGenWeights&);
template CounterfactualResult<double> make_counterfactual<double>(
    const nn::Generator<double>&, const nn::Classifier<double>&, const nn::Predictor<double>*,
    const Tensor<double>&, const Tensor<double>*, const CGenWeights&);
template LatentTrace<float> minimize_latent<float>(
    const Tensor<float>&, const std::function<Tensor<float>(const Tensor<float>&)>&, std::size_t,
    double, double, std::size_t);
template LatentTrace<double> minimize_latent<double>(
    const Tensor<double>&, const std::function<Tensor<double>(const Tensor<double>&)>&,
    std::size_t, double, double, std::size_t);
template CounterfactualResult<float> latent_counterfactual_search<float>(
    const nn::Generator<float>&, const nn::Classifier<float>&, const nn::Predictor<float>&,
    const Tensor<float>&, const Tensor<float>&, const LatentSearchConfig&);
template CounterfactualResult<double> latent_counterfactual_search<double>(
    const nn::Generator<double>&, const nn::Classifier<double>&, const nn::Predictor<double>&,
    const Tensor<double>&, const Tensor<double>&, const LatentSearchConfig&);
template Tensor<float> denoise<float>(const Tensor<float>&, const nn::Generator<float>&);
template Tensor<double> denoise<double>(const Tensor<double>&, const nn::Generator<double>&);
template DiffReport<float> counterfactual_diff<float>(const Tensor<float>&, const Tensor<float>&,
                                                      double);
template DiffReport<double> counterfactual_diff<double>(const Tensor<double>&,
                                                        const Tensor<double>&, double);

}  // namespace cgen
