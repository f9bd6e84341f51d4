#include "cgen/nav.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "cgen/errors.hpp"

namespace cgen::env {

using ad::Tensor;

namespace {

constexpr double kDt = 1.0 / 16.0;           // simulation step (s)
constexpr double kWaypointRadius = 0.05;     // waypoint switch distance
constexpr double kConeRepulsion = 0.1;       // cone repulsion radius
constexpr double kBarrierInfluence = 0.18;   // wall-following engage distance
constexpr double kBarrierHalfLength = 0.25;
constexpr double kBarrierHalfWidth = 0.05;
constexpr double kConeDrawRadius = 0.06;
constexpr double kStuckWindow = 20.0;        // no-progress window (s)
constexpr double kStuckProgress = 0.1;       // required best-distance gain

struct Vec {
    double x = 0, y = 0;
};

Vec operator+(Vec a, Vec b) { return {a.x + b.x, a.y + b.y}; }
Vec operator-(Vec a, Vec b) { return {a.x - b.x, a.y - b.y}; }
Vec operator*(Vec a, double s) { return {a.x * s, a.y * s}; }
double dot(Vec a, Vec b) { return a.x * b.x + a.y * b.y; }
double norm(Vec a) { return std::sqrt(dot(a, a)); }

Vec normalized(Vec a) {
    const double n = norm(a);
    return n > 0.0 ? Vec{a.x / n, a.y / n} : Vec{0.0, 1.0};
}

// Steering direction: attraction to the waypoint plus obstacle terms. Cones
// repel radially with a fixed tangential bias that breaks head-on symmetry;
// barriers push out along their normal and redirect motion along the wall.
Vec plan_direction(Vec pos, Vec waypoint, const std::vector<Obstacle>& obstacles) {
    const Vec des = normalized(waypoint - pos);
    Vec dir = des;
    for (const Obstacle& o : obstacles) {
        if (o.kind == ObstacleKind::Cone) {
            const Vec d = pos - Vec{o.x, o.y};
            const double r = norm(d);
            if (r <= 0.0 || r >= kConeRepulsion) continue;
            const double w = (kConeRepulsion - r) / kConeRepulsion;
            const Vec n = d * (1.0 / r);
            Vec tangent{-n.y, n.x};
            if (dot(tangent, des) < 0.0) tangent = tangent * -1.0;
            dir = dir + (n + tangent * 0.8) * (3.0 * w);
        } else {
            const Vec u{std::cos(o.angle), std::sin(o.angle)};
            const Vec d = pos - Vec{o.x, o.y};
            const double t = std::clamp(dot(d, u), -kBarrierHalfLength, kBarrierHalfLength);
            const Vec q = Vec{o.x, o.y} + u * t;
            const Vec dn = pos - q;
            const double r = norm(dn);
            if (r <= 0.0 || r >= kBarrierInfluence) continue;
            const double w = (kBarrierInfluence - r) / kBarrierInfluence;
            const Vec n = dn * (1.0 / r);
            const Vec slide = dot(u, des) < 0.0 ? u * -1.0 : u;
            // the normal term outweighs the slide so two walls meeting at a
            // corner push back instead of funneling the robot through it
            dir = dir + (n * 2.0 + slide * 1.2) * (2.5 * w);
        }
    }
    return normalized(dir);
}

}  // namespace

const std::array<std::array<double, 2>, 4>& nav_circuit() {
    static const std::array<std::array<double, 2>, 4> corners{
        {{-0.75, 0.75}, {0.75, 0.75}, {0.75, -0.75}, {-0.75, -0.75}}};
    return corners;
}

DemoLabel scripted_mpc_demo(const NavScene& scene, double horizon_s) {
    if (horizon_s < 5.0) {
        throw ConfigError("scripted_mpc_demo horizon must cover the 5 s label window");
    }
    if (scene.waypoint >= 4) {
        throw ValidationError("nav scene: waypoint index must be in [0,3]");
    }

    const Vec start{scene.x, scene.y};
    const Vec right{std::cos(scene.heading), -std::sin(scene.heading)};
    const Vec forward{std::sin(scene.heading), std::cos(scene.heading)};

    Vec pos = start;
    std::size_t wp = scene.waypoint;
    const auto steps = static_cast<std::size_t>(std::llround(horizon_s / kDt));
    const auto window_steps = static_cast<std::size_t>(
        std::llround(std::min(kStuckWindow, horizon_s) / kDt));

    DemoLabel label;
    std::vector<double> best_dist(steps + 1);
    bool switched = false;

    auto waypoint_pos = [&]() {
        return Vec{nav_circuit()[wp][0], nav_circuit()[wp][1]};
    };
    best_dist[0] = norm(waypoint_pos() - pos);

    for (std::size_t s = 0; s < steps; ++s) {
        if (norm(waypoint_pos() - pos) < kWaypointRadius) {
            wp = (wp + 1) % 4;
            switched = true;
        }
        const Vec dir = plan_direction(pos, waypoint_pos(), scene.obstacles);
        pos = pos + dir * (kNavSpeed * kDt);
        best_dist[s + 1] = std::min(best_dist[s], norm(waypoint_pos() - pos));

        if ((s + 1) % 16 == 0 && (s + 1) / 16 <= 5) {
            const Vec d = pos - start;
            double lx = dot(d, right), ly = dot(d, forward);
            const std::size_t k = (s + 1) / 16 - 1;
            if (std::abs(lx) > kNavViewHalfExtent || std::abs(ly) > kNavViewHalfExtent) {
                lx = std::clamp(lx, -kNavViewHalfExtent, kNavViewHalfExtent);
                ly = std::clamp(ly, -kNavViewHalfExtent, kNavViewHalfExtent);
                label.clamped = true;
            }
            label.xy[2 * k] = lx;
            label.xy[2 * k + 1] = ly;
        }
    }

    if (!switched &&
        best_dist[steps - window_steps] - best_dist[steps] < kStuckProgress) {
        throw DemonstrationFailure("scripted demo made no waypoint progress");
    }
    return label;
}

Tensor<float> render_nav(const NavScene& scene) {
    auto img = Tensor<float>::zeros({1, kNavSize, kNavSize});
    const double scale = static_cast<double>(kNavSize) / (2.0 * kNavViewHalfExtent);
    const double half_px = static_cast<double>(kNavSize) / 2.0;
    const Vec pos{scene.x, scene.y};
    const Vec right{std::cos(scene.heading), -std::sin(scene.heading)};
    const Vec forward{std::sin(scene.heading), std::cos(scene.heading)};

    auto sample = [&](double px, double py) -> float {
        const double rx = (px - half_px) / scale;
        const double ry = (half_px - py) / scale;
        const Vec p = pos + right * rx + forward * ry;

        // base floor, darker outside the platform
        const double edge = std::max(std::abs(p.x), std::abs(p.y));
        float v = edge <= kNavPlatformHalf ? 0.35f : 0.15f;
        if (std::abs(edge - kNavPlatformHalf) <= 0.03) v = 0.05f;  // dark border band

        for (const Obstacle& o : scene.obstacles) {
            if (o.kind == ObstacleKind::Barrier) {
                const Vec u{std::cos(o.angle), std::sin(o.angle)};
                const Vec d = p - Vec{o.x, o.y};
                const double along = dot(d, u);
                const double across = std::abs(d.x * -u.y + d.y * u.x);
                if (std::abs(along) <= kBarrierHalfLength && across <= kBarrierHalfWidth) {
                    v = std::max(v, 0.6f);
                }
            }
        }
        for (const Obstacle& o : scene.obstacles) {
            if (o.kind == ObstacleKind::Cone) {
                const Vec d = p - Vec{o.x, o.y};
                if (dot(d, d) <= kConeDrawRadius * kConeDrawRadius) v = std::max(v, 0.95f);
            }
        }
        return v;
    };

    auto px = img.data();
    for (std::size_t i = 0; i < kNavSize; ++i) {
        for (std::size_t j = 0; j < kNavSize; ++j) {
            float acc = 0.0f;  // 2x2 subsamples
            for (int sy = 0; sy < 2; ++sy) {
                for (int sx = 0; sx < 2; ++sx) {
                    acc += sample(static_cast<double>(j) + 0.25 + 0.5 * sx,
                                  static_cast<double>(i) + 0.25 + 0.5 * sy);
                }
            }
            px[i * kNavSize + j] = acc / 4.0f;
        }
    }
    return img;
}

std::array<double, 10> goal_from_angle(double angle_deg) {
    if (!(angle_deg >= -45.0 && angle_deg <= 45.0)) {
        throw ValidationError("goal angle " + std::to_string(angle_deg) +
                              " outside [-45, 45] degrees");
    }
    const double a = angle_deg * std::acos(-1.0) / 180.0;
    std::array<double, 10> out{};
    for (std::size_t k = 1; k <= 5; ++k) {
        out[2 * (k - 1)] = static_cast<double>(k) * kNavSpeed * std::sin(a);
        out[2 * k - 1] = static_cast<double>(k) * kNavSpeed * std::cos(a);
    }
    return out;
}

NavScene sample_nav_scene(Rng& rng, Complexity complexity) {
    NavScene scene;
    scene.complexity = complexity;

    const auto leg = static_cast<std::size_t>(rng.uniform_int(0, 3));
    const auto& a = nav_circuit()[leg];
    const auto& b = nav_circuit()[(leg + 1) % 4];
    const double f = rng.uniform(0.0, 0.35);
    const Vec ab{b[0] - a[0], b[1] - a[1]};
    const Vec perp = normalized({-ab.y, ab.x});
    const double lateral = rng.uniform(-0.05, 0.05);
    scene.x = a[0] + ab.x * f + perp.x * lateral;
    scene.y = a[1] + ab.y * f + perp.y * lateral;
    scene.waypoint = (leg + 1) % 4;

    const Vec to_wp{b[0] - scene.x, b[1] - scene.y};
    scene.heading = std::atan2(to_wp.x, to_wp.y) + rng.uniform(-0.26, 0.26);

    std::size_t cones = 0, barriers = 0;
    if (complexity == Complexity::Full) {
        cones = static_cast<std::size_t>(rng.uniform_int(0, 3));
        barriers = static_cast<std::size_t>(rng.uniform_int(0, 2));
    } else if (complexity == Complexity::ConesOnly) {
        cones = static_cast<std::size_t>(rng.uniform_int(0, 4));
    }

    const Vec fwd{std::sin(scene.heading), std::cos(scene.heading)};
    const Vec rgt{std::cos(scene.heading), -std::sin(scene.heading)};
    for (std::size_t n = 0; n < cones + barriers; ++n) {
        Obstacle o;
        o.kind = n < cones ? ObstacleKind::Cone : ObstacleKind::Barrier;
        for (int attempt = 0; attempt < 20; ++attempt) {
            const double ahead = rng.uniform(0.25, 0.9);
            const double side = rng.uniform(-0.35, 0.35);
            o.x = scene.x + fwd.x * ahead + rgt.x * side;
            o.y = scene.y + fwd.y * ahead + rgt.y * side;
            o.angle = rng.uniform(0.0, std::acos(-1.0));
            if (std::abs(o.x) > 0.9 || std::abs(o.y) > 0.9) continue;
            const double dx = o.x - scene.x, dy = o.y - scene.y;
            if (std::sqrt(dx * dx + dy * dy) < 0.15) continue;
            bool crowded = false;
            for (const Obstacle& other : scene.obstacles) {
                const double ox = o.x - other.x, oy = o.y - other.y;
                if (std::sqrt(ox * ox + oy * oy) < 0.12) crowded = true;
            }
            if (crowded) continue;
            scene.obstacles.push_back(o);
            break;
        }
    }
    return scene;
}

NavDataset gen_nav_dataset(Complexity complexity, std::size_t n, std::uint64_t seed) {
    NavDataset ds;
    ds.images = Tensor<float>::zeros({n, 1, kNavSize, kNavSize});
    ds.labels = Tensor<float>::zeros({n, 10});
    ds.scenes.reserve(n);
    const std::size_t pixels = kNavSize * kNavSize;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t attempt = 0;; ++attempt) {
            if (attempt == 16) {
                throw DemonstrationFailure("nav scene " + std::to_string(i) +
                                           ": no demonstrable scene after 16 attempts");
            }
            Rng rng(derive_seed(seed, "nav", i + n * attempt));
            NavScene scene = sample_nav_scene(rng, complexity);
            DemoLabel label;
            try {
                label = scripted_mpc_demo(scene);
            } catch (const DemonstrationFailure&) {
                continue;  // stuck scene: resample
            }
            const auto img = render_nav(scene);
            std::copy_n(img.data().begin(), pixels, ds.images.data().begin() + i * pixels);
            for (std::size_t k = 0; k < 10; ++k) {
                ds.labels.data()[i * 10 + k] = static_cast<float>(label.xy[k]);
            }
            ds.scenes.push_back(std::move(scene));
            break;
        }
    }
    return ds;
}

const char* complexity_name(Complexity c) {
    switch (c) {
        case Complexity::Full: return "full";
        case Complexity::ConesOnly: return "cones_only";
        case Complexity::Empty: return "empty";
    }
    return "full";
}

Complexity parse_complexity(const std::string& name) {
    if (name == "full") return Complexity::Full;
    if (name == "cones_only") return Complexity::ConesOnly;
    if (name == "empty") return Complexity::Empty;
    throw ConfigError("unknown complexity '" + name + "' (allowed: full, cones_only, empty)");
}

}  // namespace cgen::env
