#pragma once

#include <string>

#include "patchpose/transform.hpp"

namespace patchpose {

// Loads an 8-bit PNG or JPEG (detected by magic bytes) as RGB in [0,1].
// Grayscale and alpha inputs are converted to plain RGB.
SourceImage load_image(const std::string& path);

// Writes 8-bit RGB. Values are clamped to [0,1] and rounded to the nearest
// 1/255 step.
void save_png(const SourceImage& img, const std::string& path);
void save_jpeg(const SourceImage& img, const std::string& path, int quality = 95);

}  // namespace patchpose
