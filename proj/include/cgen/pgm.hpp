#pragma once

#include <string>

#include "cgen/tensor.hpp"

namespace cgen::io {

// Binary PGM (P5, maxval 255) with pixel p encoding the real value p/255.
// Writing clamps to [0,1] and rounds to the nearest level, so a write->read
// round trip moves a pixel by at most 1/510.

// img is [H,W] or [1,H,W] with values in [0,1].
void write_pgm(const std::string& path, const ad::Tensor<float>& img);

// Returns a [1,H,W] tensor. Malformed headers or short payloads are format
// errors; an unreadable file is an I/O error. maxval must be 255.
ad::Tensor<float> read_pgm(const std::string& path);

}  // namespace cgen::io
