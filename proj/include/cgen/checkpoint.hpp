#pragma once

#include <string>
#include <utility>
#include <vector>

#include "cgen/nn.hpp"

namespace cgen::nn {

// CGEN checkpoint container: magic "CGEN", u32 little-endian version (=1),
// u64 little-endian header length, a structured text header (model kind,
// layer specs, tensor names/shapes/offsets), then concatenated raw
// little-endian f32 tensor payloads. Offsets are payload-relative, strictly
// increasing and non-overlapping, and the payload length must equal the sum
// of the tensor byte lengths. Round-trips are bit-exact.

struct NamedTensor {
    std::string name;
    Tensor<float> tensor;
};

struct CheckpointData {
    std::string kind;  // generator | classifier | predictor
    std::vector<std::pair<std::string, std::string>> meta;   // [model] extras, ordered
    std::vector<std::pair<std::string, std::string>> specs;  // net name -> layer specs
    std::vector<NamedTensor> tensors;                        // payload order
};

void write_checkpoint(const CheckpointData& data, const std::string& path);
CheckpointData read_checkpoint(const std::string& path);

// Peeks at the model kind without materializing a model.
std::string checkpoint_kind(const std::string& path);

void save_checkpoint(const Generator<float>& g, const std::string& path);
void save_checkpoint(const Classifier<float>& c, const std::string& path);
void save_checkpoint(const Predictor<float>& p, const std::string& path);

Generator<float> load_generator(const std::string& path);
Classifier<float> load_classifier(const std::string& path);
Predictor<float> load_predictor(const std::string& path);

}  // namespace cgen::nn
