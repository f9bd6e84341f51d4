#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "cgen/config.hpp"
#include "cgen/nav.hpp"
#include "cgen/tensor.hpp"

namespace cgen::cli {

// Command-line driver behind the cgen binary. Commands:
//
//   gen-data         --env {shapes|stones|nav} --count N --seed S --out DIR
//   pretrain         CONFIG [--set section.key=value ...]
//   train-predictor  CONFIG [--set section.key=value ...]
//   train-cgen       CONFIG [--set section.key=value ...]
//   counterfactual   --model DIR --input IMG --goal SPEC --out DIR [--latent]
//   robustness       --model DIR --controllers A.ck B.ck ... --scenarios DIR
//                    --goals LIST --out DIR
//
// Exit codes: 0 ok, 2 config error, 3 I/O or file-format error, 4 missing
// pipeline prerequisite (the message names the missing artifact). Every run
// writes the fully resolved configuration next to its outputs.
//
// args excludes the program name; diagnostics go to err, reports to out.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// Name of the resolved-config file written into every output directory.
inline constexpr const char* kResolvedConfigName = "config.resolved.ini";

// A dataset directory as written by gen-data: PGM images, a manifest, and a
// labels CSV. Labels hold whatever the environment defines per image (class
// id, residual, or a demonstration vector).
struct LoadedDataset {
    std::string env;  // shapes | stones | nav
    ad::Tensor<float> images;                 // [n, 1, H, W]
    std::vector<std::vector<double>> labels;  // one row per image
    std::vector<std::string> files;           // image filenames, manifest order
};

// A missing manifest means the stage ran before gen-data (missing
// prerequisite); a present but malformed one is a format error.
LoadedDataset load_dataset(const std::string& dir);

// Nav scene sets ride along nav datasets so the robustness command can replay
// the exact scenes. Doubles are written at full precision; a parsed scene
// re-renders to the identical image.
void write_nav_scenes(const std::vector<env::NavScene>& scenes, const std::string& path);
std::vector<env::NavScene> read_nav_scenes(const std::string& path);

// Counterfactual difference image: 0.5 + (x' - x) / 2, so identical pixels
// write as mid-gray 128 and deviations darken or brighten around it.
void write_diff_pgm(const ad::Tensor<float>& x, const ad::Tensor<float>& x_prime,
                    const std::string& path);

}  // namespace cgen::cli
