#pragma once

#include <string>

#include "rectdiff/tensor.hpp"

namespace rectdiff {

// Binary portable graymap (P5, 8-bit). Pixel values are mapped linearly
// between [-1,1] and 0..255; out-of-range inputs are clamped.
void write_pgm(const std::string& path, const Tensor& image);

// Returns the image as [1,H,W] in [-1,1].
Tensor read_pgm(const std::string& path);

}  // namespace rectdiff
