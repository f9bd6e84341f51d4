#include "cgen/shapes.hpp"

#include <algorithm>
#include <cmath>

namespace cgen::env {

using ad::Tensor;

namespace {

// Max-blends an anti-aliased ring band |dist - radius| <= stroke/2 with a
// linear falloff of one pixel at the band edges.
void blend_ring(const Tensor<float>& img, double cx, double cy, double radius, double stroke,
                float intensity) {
    auto px = img.data();
    for (std::size_t i = 0; i < kShapesSize; ++i) {
        for (std::size_t j = 0; j < kShapesSize; ++j) {
            const double dx = (static_cast<double>(j) + 0.5) - cx;
            const double dy = (static_cast<double>(i) + 0.5) - cy;
            const double d = std::sqrt(dx * dx + dy * dy);
            const double cover = std::clamp(stroke / 2.0 + 0.5 - std::abs(d - radius), 0.0, 1.0);
            float& p = px[i * kShapesSize + j];
            p = std::max(p, static_cast<float>(intensity * cover));
        }
    }
}

}  // namespace

ShapesSample make_shapes_sample(Rng& rng, int class_id) {
    ShapesSample s;
    s.class_id = class_id;
    s.cx = 16.0 + rng.uniform(-2.5, 2.5);
    s.cy = 16.0 + rng.uniform(-2.5, 2.5);
    // jitter ranges keep the classes separable by total bright area: the
    // widest single ring stays below the thinnest double ring
    s.radius = rng.uniform(9.0, 11.0);
    s.stroke = rng.uniform(1.6, 2.0);
    s.noise_sigma = rng.uniform(0.0, 0.05);

    s.image = Tensor<float>::zeros({1, kShapesSize, kShapesSize});
    blend_ring(s.image, s.cx, s.cy, s.radius, s.stroke, 1.0f);
    if (class_id == 1) {
        // concentric inner ring; radius - 4 >= 4 keeps it comfortably above
        // the 3 px degeneracy floor
        blend_ring(s.image, s.cx, s.cy, s.radius - 4.0, s.stroke, 1.0f);
    }
    if (s.noise_sigma > 0.0) {
        for (auto& v : s.image.data()) {
            v = std::clamp(v + static_cast<float>(rng.normal(0.0, s.noise_sigma)), 0.0f, 1.0f);
        }
    }
    return s;
}

std::vector<ShapesSample> gen_shapes_dataset(std::size_t n, std::uint64_t seed) {
    std::vector<ShapesSample> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        Rng rng(derive_seed(seed, "shapes", i));
        out.push_back(make_shapes_sample(rng, static_cast<int>(i % 2)));
    }
    return out;
}

std::size_t bright_pixel_count(const Tensor<float>& image, float threshold) {
    std::size_t count = 0;
    for (float v : image.data()) {
        if (v > threshold) ++count;
    }
    return count;
}

}  // namespace cgen::env
