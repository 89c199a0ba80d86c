/**
 * @file nms.hpp
 * @brief Orientation-aware non-maximal suppression for soft edge maps.
 *
 * Orientation is estimated from Gaussian-smoothed gradients of the edge map
 * itself: theta = atan2(gy, gx) + pi/2 (mod pi), the orientation of the edge
 * rather than of the gradient. Suppression keeps a pixel iff its value is >=
 * both values bilinearly sampled one unit step along the edge normal in each
 * direction. Keeping on ties preserves plateau ridges.
 */
#pragma once

#include <contourkit/errors.hpp>
#include <contourkit/image.hpp>

#include <cmath>
#include <numbers>
#include <vector>

namespace ck {

struct OrientationField {
  int height = 0;
  int width = 0;
  std::vector<float> theta;  // per-pixel edge orientation in [0, pi)

  OrientationField() = default;
  OrientationField(int h, int w)
      : height(h), width(w), theta(static_cast<std::size_t>(h) * w, 0.0f) {}

  float at(int y, int x) const { return theta[static_cast<std::size_t>(y) * width + x]; }
  float& at(int y, int x) { return theta[static_cast<std::size_t>(y) * width + x]; }
};

namespace detail {

/// Separable Gaussian smoothing, kernel truncated at 3 sigma and
/// renormalized; borders replicate so constant maps stay constant.
inline ImagePlane gaussian_smooth(const ImagePlane& map, double sigma) {
  if (sigma <= 0.0) return map;
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> kernel(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[i + radius] = std::exp(-0.5 * (i * i) / (sigma * sigma));
    sum += kernel[i + radius];
  }
  for (auto& k : kernel) k /= sum;

  auto clamp = [](int v, int hi) { return v < 0 ? 0 : (v >= hi ? hi - 1 : v); };
  ImagePlane horiz(map.height, map.width, 1);
  for (int y = 0; y < map.height; ++y)
    for (int x = 0; x < map.width; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i)
        acc += kernel[i + radius] * map.at(y, clamp(x + i, map.width));
      horiz.at(y, x) = static_cast<float>(acc);
    }
  ImagePlane out(map.height, map.width, 1);
  for (int y = 0; y < map.height; ++y)
    for (int x = 0; x < map.width; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i)
        acc += kernel[i + radius] * horiz.at(clamp(y + i, map.height), x);
      out.at(y, x) = static_cast<float>(acc);
    }
  return out;
}

}  // namespace detail

/// Estimates per-pixel edge orientation from central-difference gradients of
/// the sigma-smoothed map. Zero-gradient pixels get theta = 0.
inline OrientationField estimate_orientation(const ImagePlane& edge_map, double sigma) {
  if (edge_map.channels != 1) throw ContractError("estimate_orientation wants 1 channel");
  const ImagePlane smooth = detail::gaussian_smooth(edge_map, sigma);
  constexpr double kPi = std::numbers::pi;

  OrientationField field(edge_map.height, edge_map.width);
  auto clamp = [](int v, int hi) { return v < 0 ? 0 : (v >= hi ? hi - 1 : v); };
  for (int y = 0; y < edge_map.height; ++y) {
    for (int x = 0; x < edge_map.width; ++x) {
      const double gx = 0.5 * (smooth.at(y, clamp(x + 1, edge_map.width)) -
                               smooth.at(y, clamp(x - 1, edge_map.width)));
      const double gy = 0.5 * (smooth.at(clamp(y + 1, edge_map.height), x) -
                               smooth.at(clamp(y - 1, edge_map.height), x));
      if (gx == 0.0 && gy == 0.0) {
        field.at(y, x) = 0.0f;
        continue;
      }
      double theta = std::atan2(gy, gx) + kPi / 2.0;
      theta = std::fmod(theta, kPi);
      if (theta < 0.0) theta += kPi;
      field.at(y, x) = static_cast<float>(theta);
    }
  }
  return field;
}

/// Keeps a pixel iff its value >= both bilinear samples one unit step along
/// the edge normal (out-of-bounds samples read as 0); otherwise zero.
inline ImagePlane suppress(const ImagePlane& edge_map, const OrientationField& orientation) {
  if (edge_map.channels != 1) throw ContractError("suppress wants 1 channel");
  if (edge_map.height != orientation.height || edge_map.width != orientation.width)
    throw ContractError("suppress dims mismatch");

  ImagePlane out(edge_map.height, edge_map.width, 1, 0.0f);
  for (int y = 0; y < edge_map.height; ++y) {
    for (int x = 0; x < edge_map.width; ++x) {
      const float v = edge_map.at(y, x);
      if (v <= 0.0f) continue;
      const double normal = orientation.at(y, x) - std::numbers::pi / 2.0;  // gradient direction
      const double dx = std::cos(normal);
      const double dy = std::sin(normal);
      const double ahead = bilinear_at(edge_map, y + dy, x + dx);
      const double behind = bilinear_at(edge_map, y - dy, x - dx);
      if (v >= ahead && v >= behind) out.at(y, x) = v;
    }
  }
  return out;
}

}  // namespace ck
