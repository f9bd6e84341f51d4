#pragma once

#include <cstdint>
#include <vector>

#include "cgen/rng.hpp"
#include "cgen/tensor.hpp"

namespace cgen::env {

// 32x32 grayscale ring images: class 0 draws a single ring, class 1 a double
// (concentric) ring. Geometry is jittered per sample but rings never shrink
// below a 3 px radius, so the class stays recoverable by construction.

inline constexpr std::size_t kShapesSize = 32;

struct ShapesSample {
    ad::Tensor<float> image;  // [1,32,32], values in [0,1]
    int class_id = 0;         // 0: single ring, 1: double ring
    double cx = 0, cy = 0;    // center (px)
    double radius = 0;        // outer ring radius (px)
    double stroke = 0;        // ring stroke width (px)
    double noise_sigma = 0;   // additive noise level
};

ShapesSample make_shapes_sample(Rng& rng, int class_id);

// Balanced classes (sample i has class i mod 2), deterministic under seed.
std::vector<ShapesSample> gen_shapes_dataset(std::size_t n, std::uint64_t seed);

// Count of pixels above `threshold` — the learnability heuristic input (a
// double ring has roughly 1.6x the stroke pixels of a single ring).
std::size_t bright_pixel_count(const ad::Tensor<float>& image, float threshold);

}  // namespace cgen::env
