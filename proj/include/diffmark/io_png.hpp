#pragma once

#include <string>

#include "diffmark/tensor.hpp"

namespace diffmark {

// 8-bit PNG writer for 1-channel (grayscale) or 3-channel (RGB) images.
// Pixel values are expected in [0,1]; out-of-range values are clamped.
void write_png(const std::string& path, const Image& image);

// Reads an 8- or 16-bit non-interlaced PNG (grayscale, gray+alpha, RGB or
// RGBA; palette unsupported) into an Image scaled to [0,1]. Alpha is dropped.
Image read_png(const std::string& path);

}  // namespace diffmark
