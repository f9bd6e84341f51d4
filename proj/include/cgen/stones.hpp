#pragma once

#include <cstdint>
#include <vector>

#include "cgen/rng.hpp"
#include "cgen/tensor.hpp"

namespace cgen::env {

// Stepping-stones lane: an effector starts at coordinate 0 and hops across
// objects in order; a hop is legal iff the gap is at most delta. The scene
// renders to a 32x32 image with ordinary objects drawn at mid intensity and
// the target in a bright band.

inline constexpr std::size_t kStonesSize = 32;
inline constexpr double kStonesDelta = 0.25;

struct StonesScene {
    std::vector<double> objects;   // strictly increasing lane coordinates in [0,1]
    double target = 1.0;           // > last object, or equal to an object's position
    double delta = kStonesDelta;   // reach threshold (lane units)
};

// Ordering and range problems are validation errors.
void validate_stones_scene(const StonesScene& scene);

// 0 when the target is reached, otherwise the size of the first illegal gap
// (the distance from the last reachable position to the next object).
double stones_oracle(const StonesScene& scene);

// Deterministic render; jitter_px shifts everything horizontally by a
// sub-pixel amount (used by dataset augmentation).
ad::Tensor<float> render_stones(const StonesScene& scene, double jitter_px = 0.0);

// Scene sampling used by datasets and the counterfactual experiments; the
// reachable flag decides whether every gap is legal or exactly one is not.
StonesScene sample_stones_scene(Rng& rng, bool reachable);

struct StonesDataset {
    ad::Tensor<float> images;     // [n,1,32,32]
    ad::Tensor<float> residuals;  // [n,1]
    std::vector<StonesScene> scenes;
};

// ~50% reachable scenes with 2-6 objects; augment adds sub-pixel jitter and
// noise sigma 0.02 to the images (labels are computed on the clean scene).
StonesDataset gen_stones_dataset(std::size_t n, std::uint64_t seed, bool augment);

// Inverse of render_stones via blob extraction: thresholded connected
// components on the lane band, intensity-weighted centroids, brightest blob
// as the target. Works on generated (imperfect) images as well.
struct ExtractedStones {
    StonesScene scene;
    bool has_target = false;
    std::size_t blob_count = 0;
};

ExtractedStones extract_stones_scene(const ad::Tensor<float>& image,
                                     double delta = kStonesDelta);

}  // namespace cgen::env
