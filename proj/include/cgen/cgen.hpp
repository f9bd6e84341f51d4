#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "cgen/nn.hpp"
#include "cgen/rng.hpp"

namespace cgen {

// Counterfactual generation: loss assembly, adversarial trainer (generator
// vs. data-membership classifier), per-instance latent-space search, the
// denoising post-pass, and diff-based explanations.

enum class CGenMode { Classification, Regression };

// Loss mixture. Classification combines reconstruction and class loss as
// (1-alpha, alpha); regression weights all three terms independently
// (non-negative, no sum constraint).
struct CGenWeights {
    CGenMode mode = CGenMode::Classification;
    double alpha = 0.8;
    double beta = 0.0;   // regression only
    double gamma = 0.0;  // regression only
};

// ConfigError on out-of-range weights or beta/gamma set in classification
// mode.
void validate_weights(const CGenWeights& weights);

// Scalar loss node on the active tape plus plain component values.
template <typename T>
struct LossTerms {
    ad::Tensor<T> total;
    double l_g = 0, l_c = 0, l_p = 0, l_total = 0;
};

// (1-alpha)*mse(x, x') + alpha*mse(C(x'), 1); differentiable through x'.
template <typename T>
LossTerms<T> cgen_loss_classification(const ad::Tensor<T>& x, const ad::Tensor<T>& x_prime,
                                      const nn::Classifier<T>& classifier, double alpha);

// alpha*mse(x, x') + beta*mse(C(x'), 1) + gamma*mse(P(x'), t_r); the
// classifier probability reads "belongs to the training data". The predictor
// must be frozen (StateError otherwise); t_r is [B, m].
template <typename T>
LossTerms<T> cgen_loss_regression(const ad::Tensor<T>& x, const ad::Tensor<T>& x_prime,
                                  const nn::Classifier<T>& classifier,
                                  const nn::Predictor<T>& predictor, const ad::Tensor<T>& t_r,
                                  const CGenWeights& weights);

// One log line per epoch. The hash fields snapshot the models after the
// epoch so freeze discipline is checkable from the log alone; they are not
// part of the CSV schema.
struct TrainLogRow {
    std::size_t epoch = 0;
    std::string phase;  // "pretrain" | "generator" | "classifier"
    double l_g = 0, l_c = 0, l_p = 0, l_total = 0;
    double classifier_acc = 0;
    std::uint64_t hash_generator = 0;
    std::uint64_t hash_classifier = 0;
    std::uint64_t hash_predictor = 0;
};

struct TrainLog {
    std::vector<TrainLogRow> rows;
    std::vector<std::string> warnings;
    double validation_mse = 0;    // pretraining: held-out reconstruction error
    bool validation_warn = false; // set when validation_mse misses the target
};

// CSV with the fixed header epoch,l_g,l_c,l_p,l_total,classifier_acc.
void write_training_csv(const std::string& path, const TrainLog& log);

struct PretrainConfig {
    std::size_t epochs = 30;
    std::size_t batch_size = 16;
    double lr = 1e-3;
    std::uint64_t seed = 0;
    double val_fraction = 0.1;    // held-out tail of the dataset
    double val_threshold = 0.05;  // reconstruction mse above this sets the warning
    double kl_weight = 1e-3;      // KL coefficient for variational generators
};

// Reconstruction (+ KL when variational) pretraining on [n, C, H, W] images.
// Empty datasets are a validation error.
template <typename T>
TrainLog pretrain_generator(nn::Generator<T>& g, const ad::Tensor<T>& images,
                            const PretrainConfig& cfg);

// Generic supervised helpers shared by the pipelines: binary classifier on
// positive/negative image pools (BCE) and control predictor on per-image
// target vectors (mse).
struct SupervisedConfig {
    std::size_t epochs = 20;
    std::size_t batch_size = 16;
    double lr = 1e-3;
    std::uint64_t seed = 0;
};

template <typename T>
TrainLog train_classifier(nn::Classifier<T>& c, const ad::Tensor<T>& positives,
                          const ad::Tensor<T>& negatives, const SupervisedConfig& cfg);

template <typename T>
TrainLog train_predictor(nn::Predictor<T>& p, const ad::Tensor<T>& images,
                         const ad::Tensor<T>& targets, const SupervisedConfig& cfg);

struct TrainConfig {
    std::size_t epochs = 20;      // total alternation epochs
    std::size_t batch_size = 16;
    double lr_generator = 1e-3;
    double lr_classifier = 1e-3;
    std::uint64_t seed = 0;
    CGenWeights weights;
    std::size_t gen_per_cls = 1;  // generator epochs per classifier epoch
    // Pipeline flags: recorded as log warnings when false (not fatal).
    bool generator_pretrained = true;
    bool classifier_pretrained = true;
};

// ConfigError on non-positive counts or learning rates.
void validate_train_config(const TrainConfig& cfg);

// Adversarial alternation, classification flavor: generator epochs minimize
// the weighted class loss against the frozen classifier on `inputs` (the
// class to flip); classifier epochs fit BCE on {target_images -> 1,
// generated -> 0} with the generator frozen.
template <typename T>
TrainLog train_cgen_classification(nn::Generator<T>& g, nn::Classifier<T>& c,
                                   const ad::Tensor<T>& inputs,
                                   const ad::Tensor<T>& target_images, const TrainConfig& cfg);

// Regression flavor: generator epochs minimize the three-term loss with
// per-sample goals ([n, m], matched to `inputs`); classifier epochs fit
// membership BCE on {real_images -> 1, generated -> 0}. The predictor stays
// frozen throughout.
template <typename T>
TrainLog train_cgen_regression(nn::Generator<T>& g, nn::Classifier<T>& c,
                               const nn::Predictor<T>& predictor, const ad::Tensor<T>& inputs,
                               const ad::Tensor<T>& goals, const ad::Tensor<T>& real_images,
                               const TrainConfig& cfg);

template <typename T>
struct CounterfactualResult {
    ad::Tensor<T> original;        // [C, H, W]
    ad::Tensor<T> counterfactual;  // [C, H, W]
    double l_g = 0, l_c = 0, l_p = 0, l_total = 0;
    double classifier_prob = 0;
    std::vector<double> prediction;  // predictor output on x' (regression only)
    std::size_t iterations = 0;
    bool converged = false;
    // Scalars moved per optimization step (the latent search moves exactly
    // latent_dim of them; 0 for plain generator passes).
    std::size_t variables_per_step = 0;
};

// Single forward counterfactual x' = G(x) with its loss bookkeeping;
// `predictor`/`t_r` are null in classification mode.
template <typename T>
CounterfactualResult<T> make_counterfactual(const nn::Generator<T>& g,
                                            const nn::Classifier<T>& c,
                                            const nn::Predictor<T>* predictor,
                                            const ad::Tensor<T>& x, const ad::Tensor<T>* t_r,
                                            const CGenWeights& weights);

// Plain SGD over the latent vector on a caller-built scalar loss. Tracks the
// best-so-far iterate; stops once the relative improvement of the best loss
// stays under rel_tol for `patience` consecutive steps.
template <typename T>
struct LatentTrace {
    ad::Tensor<T> best_z;
    double best_loss = 0;
    std::vector<double> best_by_step;  // best-so-far after each step
    std::size_t iterations = 0;
    bool converged = false;
    std::size_t variables_per_step = 0;
};

template <typename T>
LatentTrace<T> minimize_latent(const ad::Tensor<T>& z0,
                               const std::function<ad::Tensor<T>(const ad::Tensor<T>&)>& loss_fn,
                               std::size_t max_steps, double lr, double rel_tol,
                               std::size_t patience);

struct LatentSearchConfig {
    std::size_t max_steps = 500;
    double lr = 0.05;
    double rel_tol = 1e-6;
    std::size_t patience = 10;
    CGenWeights weights;  // regression mode
};

// Per-instance counterfactual search over z only (models frozen): z starts
// at the encoder mean of x, the loss is the regression mixture with
// l_g = mse(x, decode(z)). Requires a variational generator.
template <typename T>
CounterfactualResult<T> latent_counterfactual_search(const nn::Generator<T>& g,
                                                     const nn::Classifier<T>& c,
                                                     const nn::Predictor<T>& predictor,
                                                     const ad::Tensor<T>& x,
                                                     const ad::Tensor<T>& t_r,
                                                     const LatentSearchConfig& cfg);

// Deterministic reconstruction pass through an autoencoder trained on real
// environment images; suppresses generator speckle before diffing.
template <typename T>
ad::Tensor<T> denoise(const ad::Tensor<T>& x_prime, const nn::Generator<T>& denoiser);

struct DiffRegion {
    double row = 0, col = 0;  // |diff|-weighted centroid, pixel-center coords
    std::size_t area = 0;     // pixels above threshold
    double mean_diff = 0;     // signed mean difference inside the region
};

template <typename T>
struct DiffReport {
    ad::Tensor<T> diff;  // x' - x, signed, same shape as the inputs
    ad::Tensor<T> mask;  // 1 where |diff| > threshold
    std::vector<DiffRegion> regions;  // 4-connected components, largest first
};

// Signed difference plus changed-region explanations for single-channel
// images ([H,W], [1,H,W], or [1,1,H,W]).
template <typename T>
DiffReport<T> counterfactual_diff(const ad::Tensor<T>& x, const ad::Tensor<T>& x_prime,
                                  double threshold = 0.1);

}  // namespace cgen
