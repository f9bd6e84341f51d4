#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "cgen/cgen.hpp"
#include "cgen/nav.hpp"
#include "cgen/nn.hpp"

namespace cgen {

// ---------------------------------------------------------------------------
// Noise-gain probe: the classical robustness baseline. Inject unit-variance
// Gaussian pixel noise mu with a growing gain eta and report the smallest
// gain whose squared prediction shift reaches epsilon.
// ---------------------------------------------------------------------------

struct NoiseProbeConfig {
    double epsilon = 0.1;   // squared-shift threshold
    double eta_step = 0.01; // gain schedule: eta_step, 2*eta_step, ... eta_max
    double eta_max = 2.0;
    std::size_t trials = 20;
    std::uint64_t seed = 0;
};

void validate_probe_config(const NoiseProbeConfig& cfg);

struct ProbeResult {
    double eta_star = 0;           // median over trials
    std::vector<double> per_trial; // eta* of each trial walk
};

// The trial's noise field: unit-variance Gaussian per pixel, held fixed for
// the whole gain walk.
template <typename T>
ad::Tensor<T> probe_noise(const ad::Shape& shape, std::uint64_t seed, std::size_t trial);

// Generic probe over any batched prediction map [B, ...] -> [B, m]. The noisy
// input is clamped to [0,1] before prediction. `noise` overrides the Gaussian
// draws with caller-supplied fields (trial t uses noise[t % size]), which
// makes closed-form probes expressible.
template <typename T>
ProbeResult noise_probe_fn(const std::function<ad::Tensor<T>(const ad::Tensor<T>&)>& predict,
                           const ad::Tensor<T>& x, const NoiseProbeConfig& cfg,
                           const std::vector<ad::Tensor<T>>* noise = nullptr);

template <typename T>
ProbeResult noise_probe(const nn::Predictor<T>& predictor, const ad::Tensor<T>& x,
                        const NoiseProbeConfig& cfg);

// ---------------------------------------------------------------------------
// Controller family: three nav controllers with identical architecture,
// budget, and init, trained on demonstrations of decreasing complexity.
// ---------------------------------------------------------------------------

struct ControllerFamilyConfig {
    std::size_t scenes = 60;     // training scenes per complexity
    std::size_t val_scenes = 12; // empty-scene validation pool for controller c
    std::uint64_t data_seed = 1;
    std::uint64_t model_seed = 1;
    std::size_t epochs = 30;
    std::size_t batch_size = 8;
    double lr = 1e-3;
    std::size_t base_width = 4;
    double val_threshold = 0.05; // controller c must at least track empty scenes
};

struct ControllerFamilyResult {
    nn::Predictor<float> a; // trained on full scenes (cones + barriers)
    nn::Predictor<float> b; // cones only
    nn::Predictor<float> c; // empty scenes
    TrainLog log_a, log_b, log_c;
    double val_mse_c = 0; // controller c on held-out empty scenes
    std::vector<std::string> warnings;
};

ControllerFamilyResult train_controller_family(const ControllerFamilyConfig& cfg);

// ---------------------------------------------------------------------------
// Counterfactual robustness comparison over a scenario x goal grid.
// ---------------------------------------------------------------------------

struct NamedController {
    std::string name;
    const nn::Predictor<float>* predictor = nullptr;
};

struct CompareConfig {
    std::size_t scenarios = 10;
    std::size_t min_barrier_scenes = 3; // quota so the barrier claim is testable
    std::vector<double> goals_deg = {-45, -30, -15, 0, 15, 30, 45};
    std::uint64_t scene_seed = 5;
    LatentSearchConfig search; // regression-mode weights
    NoiseProbeConfig probe;
};

struct RobustnessCell {
    std::string controller;
    std::size_t scenario_id = 0;
    double goal_deg = 0;
    double l_g = 0, l_c = 0, l_p = 0, l_total = 0;
    double eta_star = 0; // controller x scenario probe median
    bool failed = false;
    std::string fail_reason;
};

struct ControllerSummary {
    std::string name;
    double mean_l_total = 0; // over successful cells
    double mean_l_g = 0, mean_l_c = 0, mean_l_p = 0;
    double median_eta = 0;
    std::vector<double> eta_per_scenario;
    std::size_t failed_cells = 0;
};

struct RobustnessReport {
    std::vector<RobustnessCell> cells;        // controller-major, then scenario, then goal
    std::vector<ControllerSummary> summaries; // one per controller, input order
    std::vector<env::NavScene> scenarios;
    std::vector<bool> scenario_has_barrier;
    std::vector<double> goals_deg;
    bool ordering_ok = false;  // mean l_total non-decreasing across controllers
    bool barrier_ok = false;   // on barrier scenes, controller 2 loses to controller 1
    bool noise_similar = false; // eta medians within a factor of 2
    std::vector<std::string> warnings;
};

// Runs the full grid: per cell a latent counterfactual search against the
// shared generator/classifier pair, plus a per-(controller, scenario) noise
// probe with shared noise draws. Search failures are recorded in the cell,
// never dropped. The controllers are frozen and byte-identical afterwards.
// An explicit scene list replaces seeded sampling (cfg.scenarios is ignored
// and an unmet barrier quota only warns — the scenes are the caller's).
RobustnessReport robustness_compare(const nn::Generator<float>& g,
                                    const nn::Classifier<float>& c,
                                    const std::vector<NamedController>& controllers,
                                    const CompareConfig& cfg,
                                    const std::vector<env::NavScene>* scenes = nullptr);

// Long-format CSV: controller,scenario_id,goal_deg,l_g,l_c,l_p,l_total,eta_star.
// Failed cells carry nan losses.
void write_robustness_csv(const std::string& path, const RobustnessReport& report);

struct HeatmapInfo {
    std::string controller;
    double min_l = 0, max_l = 0; // normalization constants of the PGM
    std::string pgm_path;
    std::string matrix_path;
    bool gaps = false; // failed cells rendered as zero-intensity markers
};

// Per-controller scenario x goal heat images (min-max normalized l_total,
// 8x8 pixel cells) plus exact-valued matrix CSVs, written as
// <prefix>_<controller>.pgm / <prefix>_<controller>_matrix.csv.
std::vector<HeatmapInfo> emit_heatmaps(const RobustnessReport& report,
                                       const std::string& prefix);

// Structured text summary: per-controller means, eta medians, the three
// verdicts, heatmap normalization constants, and any warnings.
void write_robustness_summary(const std::string& path, const RobustnessReport& report,
                              const std::vector<HeatmapInfo>& heatmaps = {});

}  // namespace cgen
