#pragma once

#include <string>

#include "derain/tensor.hpp"

namespace derain {

// Decodes an 8/16-bit PNG to float in [0,1]. Palette images are expanded,
// 16-bit depth is reduced to 8, alpha is dropped. Result has 1 or 3 channels.
Tensor<float> read_png(const std::string& path);

// Encodes a (h,w,1) or (h,w,3) float image; values are clamped to [0,1] and
// rounded to 8 bits.
void write_png(const std::string& path, const Tensor<float>& img);

}  // namespace derain
