#include "patchpose/transform.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "patchpose/histogram.hpp"

namespace patchpose {

Patch Patch::zeros(int height, int width, int channels) {
  Patch p;
  p.channels = channels;
  p.height = height;
  p.width = width;
  p.values.assign(static_cast<size_t>(channels) * height * width, 0.0f);
  return p;
}

SourceImage SourceImage::filled(int width, int height, float r, float g, float b) {
  SourceImage img;
  img.width = width;
  img.height = height;
  img.rgb.resize(static_cast<size_t>(width) * height * 3);
  for (int i = 0; i < width * height; ++i) {
    img.rgb[i * 3 + 0] = r;
    img.rgb[i * 3 + 1] = g;
    img.rgb[i * 3 + 2] = b;
  }
  return img;
}

Homography Homography::identity() {
  Homography h;
  h.a[0][0] = h.a[1][1] = h.a[2][2] = 1.0;
  return h;
}

Homography Homography::similarity(double scale, double angle, double a33) {
  Homography h;
  const double c = std::cos(angle), s = std::sin(angle);
  h.a[0][0] = scale * c * a33;
  h.a[0][1] = -scale * s * a33;
  h.a[1][0] = scale * s * a33;
  h.a[1][1] = scale * c * a33;
  h.a[2][2] = a33;
  return h;
}

double Homography::det() const {
  const auto& m = a;
  return m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
         m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
         m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
}

namespace {

// Bilinear sample at (x, y); the caller guarantees 0 <= x <= w-1, 0 <= y <= h-1.
inline void sample_bilinear(const SourceImage& img, double x, double y, float* out3) {
  const int x0 = static_cast<int>(x);
  const int y0 = static_cast<int>(y);
  const int x1 = x0 + 1 < img.width ? x0 + 1 : x0;
  const int y1 = y0 + 1 < img.height ? y0 + 1 : y0;
  const double fx = x - x0, fy = y - y0;
  const double w00 = (1.0 - fx) * (1.0 - fy);
  const double w10 = fx * (1.0 - fy);
  const double w01 = (1.0 - fx) * fy;
  const double w11 = fx * fy;
  const float* p00 = &img.rgb[(static_cast<size_t>(y0) * img.width + x0) * 3];
  const float* p10 = &img.rgb[(static_cast<size_t>(y0) * img.width + x1) * 3];
  const float* p01 = &img.rgb[(static_cast<size_t>(y1) * img.width + x0) * 3];
  const float* p11 = &img.rgb[(static_cast<size_t>(y1) * img.width + x1) * 3];
  for (int c = 0; c < 3; ++c)
    out3[c] = static_cast<float>(w00 * p00[c] + w10 * p10[c] + w01 * p01[c] + w11 * p11[c]);
}

}  // namespace

float sample_bilinear_clamped(const SourceImage& img, double x, double y, int c) {
  x = std::min(std::max(x, 0.0), static_cast<double>(img.width - 1));
  y = std::min(std::max(y, 0.0), static_cast<double>(img.height - 1));
  float rgb[3];
  sample_bilinear(img, x, y, rgb);
  return rgb[c];
}

Patch warp_extract(const SourceImage& img, double cx, double cy, double scale_factor,
                   double angle, int crop, int out) {
  if (crop <= 0 || out <= 0 || crop % out != 0)
    throw std::invalid_argument("warp_extract: crop must be a positive multiple of out");
  if (scale_factor <= 0.0)
    throw std::invalid_argument("warp_extract: scale_factor must be positive");

  // Inverse map: out pixel offset -> source offset via (1/s) * R(-angle).
  const double inv_s = 1.0 / scale_factor;
  const double c = std::cos(angle), s = std::sin(angle);
  const double m00 = inv_s * c, m01 = inv_s * s;
  const double m10 = -inv_s * s, m11 = inv_s * c;
  const double half = (crop - 1) / 2.0;

  Patch cropped = Patch::zeros(crop, crop);
  const double max_x = img.width - 1.0;
  const double max_y = img.height - 1.0;
  for (int v = 0; v < crop; ++v) {
    for (int u = 0; u < crop; ++u) {
      const double du = u - half;
      const double dv = v - half;
      const double sx = cx + m00 * du + m01 * dv;
      const double sy = cy + m10 * du + m11 * dv;
      if (sx < 0.0 || sx > max_x || sy < 0.0 || sy > max_y)
        throw std::out_of_range("warp_extract: crop footprint escapes the image at (" +
                                std::to_string(sx) + ", " + std::to_string(sy) + ")");
      float rgb[3];
      sample_bilinear(img, sx, sy, rgb);
      for (int ch = 0; ch < 3; ++ch) cropped.at(ch, v, u) = rgb[ch];
    }
  }
  if (out == crop) return cropped;

  // Area-average downsample by an integer factor.
  const int f = crop / out;
  const double inv_area = 1.0 / (f * f);
  Patch result = Patch::zeros(out, out);
  for (int ch = 0; ch < 3; ++ch) {
    for (int y = 0; y < out; ++y) {
      for (int x = 0; x < out; ++x) {
        double acc = 0.0;
        for (int dy = 0; dy < f; ++dy)
          for (int dx = 0; dx < f; ++dx) acc += cropped.at(ch, y * f + dy, x * f + dx);
        result.at(ch, y, x) = static_cast<float>(acc * inv_area);
      }
    }
  }
  return result;
}

std::pair<double, double> pose_from_homography(const Homography& A) {
  const double a33 = A.a[2][2];
  if (a33 == 0.0)
    throw std::invalid_argument("pose_from_homography: A33 must be nonzero");
  const double a11 = A.a[0][0] / a33;
  const double a21 = A.a[1][0] / a33;
  if (a11 == 0.0 && a21 == 0.0)
    throw std::invalid_argument("pose_from_homography: degenerate matrix (A11 = A21 = 0)");
  const double scale = std::hypot(a11, a21);
  double angle = std::atan2(a21, a11);
  if (angle < 0.0) angle += kTwoPi;
  if (angle >= kTwoPi) angle = 0.0;
  return {scale, angle};
}

}  // namespace patchpose
