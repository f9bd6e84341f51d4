#include "cgen/stones.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "cgen/errors.hpp"

namespace cgen::env {

using ad::Tensor;

namespace {

// Lane coordinate c in [0,1] maps to pixel-center x = 1 + 30c.
constexpr double kLaneLeftPx = 1.0;
constexpr double kLaneSpanPx = 30.0;
constexpr double kLaneRowPx = 16.0;     // vertical center of the lane band
constexpr double kHalfSidePx = 1.0;     // squares are 2 px wide
constexpr float kObjectIntensity = 0.5f;
constexpr float kTargetIntensity = 0.95f;

double lane_to_px(double c) { return kLaneLeftPx + kLaneSpanPx * c; }
double px_to_lane(double x) { return (x - kLaneLeftPx) / kLaneSpanPx; }

// Exact coverage of an axis-aligned square against each pixel, max-blended.
void blend_square(const Tensor<float>& img, double cx, double cy, float intensity) {
    auto px = img.data();
    const auto overlap = [](double lo, double hi, double a, double b) {
        return std::max(0.0, std::min(hi, b) - std::max(lo, a));
    };
    for (std::size_t i = 0; i < kStonesSize; ++i) {
        const double oy = overlap(cy - kHalfSidePx, cy + kHalfSidePx, static_cast<double>(i),
                                  static_cast<double>(i) + 1.0);
        if (oy <= 0.0) continue;
        for (std::size_t j = 0; j < kStonesSize; ++j) {
            const double ox = overlap(cx - kHalfSidePx, cx + kHalfSidePx, static_cast<double>(j),
                                      static_cast<double>(j) + 1.0);
            if (ox <= 0.0) continue;
            float& p = px[i * kStonesSize + j];
            p = std::max(p, static_cast<float>(intensity * ox * oy));
        }
    }
}

}  // namespace

void validate_stones_scene(const StonesScene& scene) {
    if (scene.delta <= 0.0) {
        throw ValidationError("stones scene: delta must be positive");
    }
    double prev = -1.0;
    bool target_on_object = false;
    for (double o : scene.objects) {
        if (o < 0.0 || o > 1.0) {
            throw ValidationError("stones scene: object at " + std::to_string(o) +
                                  " outside [0,1]");
        }
        if (o <= prev) {
            throw ValidationError("stones scene: object positions must be strictly increasing");
        }
        if (o == scene.target) target_on_object = true;
        prev = o;
    }
    if (scene.target < 0.0 || scene.target > 1.0) {
        throw ValidationError("stones scene: target outside [0,1]");
    }
    if (scene.target <= prev && !target_on_object) {
        throw ValidationError(
            "stones scene: target must exceed the last object or sit on an object");
    }
}

double stones_oracle(const StonesScene& scene) {
    double pos = 0.0;
    for (double obj : scene.objects) {
        if (pos >= scene.target) return 0.0;
        if (obj > scene.target) break;
        const double gap = obj - pos;
        if (gap > scene.delta) return gap;
        pos = obj;
    }
    if (pos >= scene.target) return 0.0;
    const double gap = scene.target - pos;
    return gap <= scene.delta ? 0.0 : gap;
}

Tensor<float> render_stones(const StonesScene& scene, double jitter_px) {
    auto img = Tensor<float>::zeros({1, kStonesSize, kStonesSize});
    for (double o : scene.objects) {
        blend_square(img, lane_to_px(o) + jitter_px, kLaneRowPx, kObjectIntensity);
    }
    blend_square(img, lane_to_px(scene.target) + jitter_px, kLaneRowPx, kTargetIntensity);
    return img;
}

StonesScene sample_stones_scene(Rng& rng, bool reachable) {
    // Gap-first construction. Legal gaps live in [0.13, 0.9*delta]; an
    // illegal gap in [1.15*delta, 1.44*delta]. The lower bound keeps blobs
    // separable in the render; the total is capped at 0.96 lane units.
    StonesScene scene;
    scene.delta = kStonesDelta;
    const double legal_max = 0.9 * scene.delta;
    std::vector<double> gaps;
    if (reachable) {
        const auto k = static_cast<std::size_t>(rng.uniform_int(2, 6));
        const double hi = std::min(legal_max, 0.96 / static_cast<double>(k + 1));
        for (std::size_t g = 0; g <= k; ++g) gaps.push_back(rng.uniform(0.13, hi));
    } else {
        const auto k = static_cast<std::size_t>(rng.uniform_int(2, 4));
        const double bad = rng.uniform(1.15 * scene.delta, 1.44 * scene.delta);
        const double hi = std::min(legal_max, (0.96 - bad) / static_cast<double>(k));
        const auto bad_at = static_cast<std::size_t>(rng.uniform_int(0, static_cast<long long>(k)));
        for (std::size_t g = 0; g <= k; ++g) {
            gaps.push_back(g == bad_at ? bad : rng.uniform(0.13, hi));
        }
    }
    double pos = 0.0;
    for (std::size_t g = 0; g < gaps.size(); ++g) {
        pos += gaps[g];
        if (g + 1 < gaps.size()) {
            scene.objects.push_back(pos);
        } else {
            scene.target = pos;
        }
    }
    validate_stones_scene(scene);
    return scene;
}

StonesDataset gen_stones_dataset(std::size_t n, std::uint64_t seed, bool augment) {
    StonesDataset ds;
    ds.images = Tensor<float>::zeros({n, 1, kStonesSize, kStonesSize});
    ds.residuals = Tensor<float>::zeros({n, 1});
    ds.scenes.reserve(n);
    const std::size_t pixels = kStonesSize * kStonesSize;
    for (std::size_t i = 0; i < n; ++i) {
        Rng rng(derive_seed(seed, "stones", i));
        const StonesScene scene = sample_stones_scene(rng, rng.bernoulli(0.5));
        const double jitter = augment ? rng.uniform(-0.5, 0.5) : 0.0;
        auto img = render_stones(scene, jitter);
        if (augment) {
            for (auto& v : img.data()) {
                v = std::clamp(v + static_cast<float>(rng.normal(0.0, 0.02)), 0.0f, 1.0f);
            }
        }
        std::copy_n(img.data().begin(), pixels, ds.images.data().begin() + i * pixels);
        ds.residuals.data()[i] = static_cast<float>(stones_oracle(scene));
        ds.scenes.push_back(scene);
    }
    return ds;
}

ExtractedStones extract_stones_scene(const Tensor<float>& image, double delta) {
    if (image.rank() != 3 || image.dim(0) != 1 || image.dim(1) != kStonesSize ||
        image.dim(2) != kStonesSize) {
        throw DimensionError("extract_stones_scene expects [1,32,32], got " +
                             ad::shape_str(image.shape()));
    }
    constexpr float kMaskThreshold = 0.25f;
    constexpr double kMinMass = 0.8;
    constexpr float kTargetPeak = 0.75f;
    const auto px = image.data();
    const auto at = [&](std::size_t i, std::size_t j) { return px[i * kStonesSize + j]; };

    struct Blob {
        double mass = 0, x = 0, y = 0;
        float peak = 0;
    };
    std::vector<Blob> blobs;
    std::vector<char> seen(kStonesSize * kStonesSize, 0);
    std::vector<std::pair<std::size_t, std::size_t>> stack;
    for (std::size_t i = 0; i < kStonesSize; ++i) {
        for (std::size_t j = 0; j < kStonesSize; ++j) {
            if (seen[i * kStonesSize + j] || at(i, j) < kMaskThreshold) continue;
            Blob b;
            stack.assign(1, {i, j});
            seen[i * kStonesSize + j] = 1;
            while (!stack.empty()) {
                const auto [r, c] = stack.back();
                stack.pop_back();
                const float v = at(r, c);
                b.mass += v;
                b.x += v * (static_cast<double>(c) + 0.5);
                b.y += v * (static_cast<double>(r) + 0.5);
                b.peak = std::max(b.peak, v);
                const std::size_t rs[4] = {r - 1, r + 1, r, r};
                const std::size_t cs[4] = {c, c, c - 1, c + 1};
                for (int k = 0; k < 4; ++k) {
                    if (rs[k] >= kStonesSize || cs[k] >= kStonesSize) continue;
                    if (seen[rs[k] * kStonesSize + cs[k]] ||
                        at(rs[k], cs[k]) < kMaskThreshold) {
                        continue;
                    }
                    seen[rs[k] * kStonesSize + cs[k]] = 1;
                    stack.emplace_back(rs[k], cs[k]);
                }
            }
            b.x /= b.mass;
            b.y /= b.mass;
            // keep solid blobs centered on the lane band
            if (b.mass >= kMinMass && b.y >= 12.0 && b.y <= 20.0) blobs.push_back(b);
        }
    }

    ExtractedStones out;
    out.blob_count = blobs.size();
    out.scene.delta = delta;

    const Blob* target = nullptr;
    for (const Blob& b : blobs) {
        if (b.peak < kTargetPeak) continue;
        if (!target || b.peak > target->peak || (b.peak == target->peak && b.x > target->x)) {
            target = &b;
        }
    }
    if (!target) return out;

    out.has_target = true;
    out.scene.target = std::clamp(px_to_lane(target->x), 0.0, 1.0);
    for (const Blob& b : blobs) {
        if (&b == target) continue;
        const double c = std::clamp(px_to_lane(b.x), 0.0, 1.0);
        if (c < out.scene.target) out.scene.objects.push_back(c);
    }
    std::sort(out.scene.objects.begin(), out.scene.objects.end());
    // enforce strict increase (coincident centroids collapse to one object)
    out.scene.objects.erase(
        std::unique(out.scene.objects.begin(), out.scene.objects.end()),
        out.scene.objects.end());
    return out;
}

}  // namespace cgen::env
