#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "cgen/rng.hpp"
#include "cgen/tensor.hpp"

namespace cgen::env {

// Top-view navigation micro-world: a robot drives a clockwise circuit of the
// four platform corners at constant speed, steering around cones with radial
// repulsion and around barriers by wall-following. The camera is a 64x64
// robot-centered, heading-aligned top view; demonstration labels are the
// robot's positions at t+1..t+5 s in that frame (x right, y forward).

inline constexpr std::size_t kNavSize = 64;
inline constexpr double kNavSpeed = 0.2;          // units / s
inline constexpr double kNavViewHalfExtent = 1.6; // world units from center to image edge
inline constexpr double kNavPlatformHalf = 1.0;   // platform wall coordinate

enum class Complexity { Full, ConesOnly, Empty };

enum class ObstacleKind { Cone, Barrier };

struct Obstacle {
    ObstacleKind kind = ObstacleKind::Cone;
    double x = 0, y = 0;
    double angle = 0;  // barrier long-axis direction (radians); unused for cones
};

struct NavScene {
    double x = 0, y = 0;      // robot position
    double heading = 0;       // radians; 0 points along +y, positive turns clockwise
    std::size_t waypoint = 0; // index of the circuit corner currently targeted
    std::vector<Obstacle> obstacles;
    Complexity complexity = Complexity::Empty;
};

// The clockwise corner circuit.
const std::array<std::array<double, 2>, 4>& nav_circuit();

struct DemoLabel {
    std::array<double, 10> xy{};  // (x1,y1)..(x5,y5), robot frame at t=0
    bool clamped = false;         // any position clamped to the view border
};

// Deterministic scripted demonstrator; horizon is in seconds. A run that
// makes no waypoint progress over a trailing 20 s window (or the whole
// window when shorter) is a demonstration failure.
DemoLabel scripted_mpc_demo(const NavScene& scene, double horizon_s = 5.0);

// [1,64,64] robot-centered render: bright cone discs, mid-intensity barrier
// bars, dark platform border.
ad::Tensor<float> render_nav(const NavScene& scene);

// Straight-line constant-speed goal label: position k = k*v*(sin a, cos a).
// The angle is degrees from image-vertical in [-45, 45].
std::array<double, 10> goal_from_angle(double angle_deg);

struct NavDataset {
    ad::Tensor<float> images;  // [n,1,64,64]
    ad::Tensor<float> labels;  // [n,10]
    std::vector<NavScene> scenes;
};

NavScene sample_nav_scene(Rng& rng, Complexity complexity);

// Scenes along the circuit with obstacles filtered by complexity; stuck
// scenes are resampled.
NavDataset gen_nav_dataset(Complexity complexity, std::size_t n, std::uint64_t seed);

const char* complexity_name(Complexity c);
Complexity parse_complexity(const std::string& name);  // unknown -> config error

}  // namespace cgen::env
