#pragma once

#include <array>
#include <cstdint>
#include <utility>
#include <vector>

namespace patchpose {

// Small RGB tensor, values in [0,1], stored C x H x W row-major.
struct Patch {
  int channels = 3;
  int height = 0;
  int width = 0;
  std::vector<float> values;

  static Patch zeros(int height, int width, int channels = 3);

  float at(int c, int y, int x) const { return values[(c * height + y) * width + x]; }
  float& at(int c, int y, int x) { return values[(c * height + y) * width + x]; }
  size_t size() const { return values.size(); }
};

// RGB raster, values in [0,1], interleaved rows (r,g,b per pixel).
struct SourceImage {
  int width = 0;
  int height = 0;
  std::vector<float> rgb;

  static SourceImage filled(int width, int height, float r, float g, float b);

  float at(int y, int x, int c) const { return rgb[(y * width + x) * 3 + c]; }
  float& at(int y, int x, int c) { return rgb[(y * width + x) * 3 + c]; }
};

// 3x3 real matrix, row-major.
struct Homography {
  std::array<std::array<double, 3>, 3> a{};

  static Homography identity();
  // s * R(theta) embedded with the given lower-right entry.
  static Homography similarity(double scale, double angle, double a33 = 1.0);

  double det() const;
};

// Extracts a crop x crop patch about (cx, cy) after the similarity transform
// (scale_factor, angle), then downsamples crop -> out by area averaging.
// Sampling is inverse-mapped bilinear: positive angle rotates counter-clockwise
// in image coordinates (y down). Throws std::out_of_range when the footprint
// escapes the image.
Patch warp_extract(const SourceImage& img, double cx, double cy, double scale_factor,
                   double angle, int crop = 64, int out = 32);

// Relative (scale_factor, angle in [0, 2pi)) encoded by a similarity-like
// homography: scale from the first-column norm over A33, angle from the
// two-argument arctangent of (A21/A33, A11/A33).
std::pair<double, double> pose_from_homography(const Homography& A);

// Bilinear sample with coordinates clamped to the image rectangle.
float sample_bilinear_clamped(const SourceImage& img, double x, double y, int c);

}  // namespace patchpose
