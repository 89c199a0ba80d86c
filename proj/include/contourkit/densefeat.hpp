/**
 * @file densefeat.hpp
 * @brief Multiscale dense feature extraction.
 *
 * The image is resampled to a set of scales, the scaled copies are stitched
 * into one plane separated by zero-filled gutters, the net runs once over
 * that plane, and the per-tap activation maps are unstitched back into
 * per-scale descriptor maps. Rescaling every map to the image size and
 * concatenating along the descriptor axis (tap-major, scale-minor) yields a
 * feature vector at every pixel.
 *
 * Tile offsets are aligned to the least common multiple of the tap strides
 * so placements divide exactly at every tap resolution. A gutter at least as
 * wide as the receptive-field radius keeps tiles from contaminating each
 * other; interiors then match an independent per-scale forward pass.
 */
#pragma once

#include <contourkit/errors.hpp>
#include <contourkit/image.hpp>
#include <contourkit/net.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

namespace ck {

// =============================================================================
// Pyramid
// =============================================================================

/// Scale s produces a round(s*H) x round(s*W) bilinear resampling.
inline std::vector<ImagePlane> build_pyramid(const ImagePlane& image,
                                             const std::vector<double>& scales) {
  std::vector<ImagePlane> planes;
  planes.reserve(scales.size());
  for (const double s : scales) {
    if (!(s > 0.0)) throw ContractError("pyramid scale must be > 0");
    const int h = static_cast<int>(std::llround(s * image.height));
    const int w = static_cast<int>(std::llround(s * image.width));
    if (h < 1 || w < 1)
      throw ContractError("pyramid scale " + std::to_string(s) + " yields degenerate dims");
    planes.push_back(resize_bilinear(image, h, w));
  }
  return planes;
}

// =============================================================================
// Stitch / unstitch
// =============================================================================

struct TilePlacement {
  int row = 0;
  int col = 0;
  int height = 0;
  int width = 0;
};

struct PyramidLayout {
  std::vector<TilePlacement> tiles;  // indexed by input plane order
  int gutter = 0;
  int align = 1;
  int stitched_h = 0;
  int stitched_w = 0;
};

namespace detail {

inline int align_up(int v, int align) { return (v + align - 1) / align * align; }

}  // namespace detail

/// Packs planes onto shelves: tiles go left-to-right in descending height
/// order, opening a new shelf when the next tile would exceed the target
/// width. Gutter pixels of zero separate tiles; offsets (and the stitched
/// dims) are rounded up to multiples of `align`.
inline std::pair<ImagePlane, PyramidLayout> stitch(const std::vector<ImagePlane>& planes,
                                                   int gutter, int align = 1) {
  if (planes.empty()) throw ContractError("stitch requires at least one plane");
  if (gutter < 0 || align < 1) throw ContractError("stitch gutter must be >= 0 and align >= 1");
  const int channels = planes[0].channels;
  for (const auto& p : planes)
    if (p.channels != channels) throw ContractError("stitch planes must share channel count");

  // target width: wide enough for the widest tile, aiming for a roughly
  // square packing overall
  double area = 0.0;
  int widest = 0;
  for (const auto& p : planes) {
    area += static_cast<double>(p.height + gutter) * (p.width + gutter);
    widest = std::max(widest, p.width);
  }
  const int target_w =
      std::max(widest, static_cast<int>(std::ceil(std::sqrt(std::max(1.0, area)))));

  std::vector<std::size_t> order(planes.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return planes[a].height > planes[b].height;
  });

  PyramidLayout layout;
  layout.tiles.resize(planes.size());
  layout.gutter = gutter;
  layout.align = align;

  int cur_row = 0;
  int cur_col = 0;
  int shelf_height = 0;
  int used_h = 0;
  int used_w = 0;
  for (const std::size_t idx : order) {
    const ImagePlane& p = planes[idx];
    if (cur_col > 0 && cur_col + p.width > target_w) {
      cur_row = detail::align_up(cur_row + shelf_height + gutter, align);
      cur_col = 0;
      shelf_height = 0;
    }
    layout.tiles[idx] = {cur_row, cur_col, p.height, p.width};
    used_h = std::max(used_h, cur_row + p.height);
    used_w = std::max(used_w, cur_col + p.width);
    shelf_height = std::max(shelf_height, p.height);
    cur_col = detail::align_up(cur_col + p.width + gutter, align);
  }
  layout.stitched_h = detail::align_up(used_h, align);
  layout.stitched_w = detail::align_up(used_w, align);

  ImagePlane stitched(layout.stitched_h, layout.stitched_w, channels, 0.0f);
  for (std::size_t i = 0; i < planes.size(); ++i) {
    const ImagePlane& p = planes[i];
    const TilePlacement& t = layout.tiles[i];
    for (int y = 0; y < p.height; ++y) {
      const std::size_t src = p.index(y, 0, 0);
      const std::size_t dst = stitched.index(t.row + y, t.col, 0);
      std::copy_n(p.data.begin() + src, static_cast<std::size_t>(p.width) * channels,
                  stitched.data.begin() + dst);
    }
  }
  return {std::move(stitched), layout};
}

/// Crops each tile back out of a descriptor plane computed at `tap_stride`.
/// The tile at image-resolution offset (r, c) and extent (h, w) becomes the
/// crop at (r/stride, c/stride) with extent ceil(h/stride) x ceil(w/stride).
inline std::vector<ImagePlane> unstitch(const ImagePlane& feature_plane,
                                        const PyramidLayout& layout, int tap_stride) {
  if (tap_stride < 1) throw ContractError("tap_stride must be >= 1");
  auto ceil_div = [tap_stride](int v) { return (v + tap_stride - 1) / tap_stride; };
  if (feature_plane.height != ceil_div(layout.stitched_h) ||
      feature_plane.width != ceil_div(layout.stitched_w))
    throw ContractError("feature plane dims do not match layout at stride " +
                        std::to_string(tap_stride));

  std::vector<ImagePlane> tiles;
  tiles.reserve(layout.tiles.size());
  for (const TilePlacement& t : layout.tiles) {
    if (t.row % tap_stride != 0 || t.col % tap_stride != 0)
      throw ContractError("tile offset is not a multiple of the tap stride; stitch with a "
                          "compatible align");
    const int r = t.row / tap_stride;
    const int c = t.col / tap_stride;
    const int h = ceil_div(t.height);
    const int w = ceil_div(t.width);
    if (r + h > feature_plane.height || c + w > feature_plane.width)
      throw ContractError("tile crop exceeds feature plane; layout/stride inconsistency");
    ImagePlane tile(h, w, feature_plane.channels);
    for (int y = 0; y < h; ++y) {
      const std::size_t src = feature_plane.index(r + y, c, 0);
      std::copy_n(feature_plane.data.begin() + src,
                  static_cast<std::size_t>(w) * feature_plane.channels,
                  tile.data.begin() + tile.index(y, 0, 0));
    }
    tiles.push_back(std::move(tile));
  }
  return tiles;
}

/// Default gutter: the receptive-field radius rounded up to the coarsest
/// tap stride, so descriptors in one tile never see another tile.
inline int default_gutter(const NetSpec& net) {
  return detail::align_up(net.receptive_field_radius(), net.tap_stride_lcm());
}

// =============================================================================
// Per-pixel feature assembly
// =============================================================================

struct PixelFeatureField {
  int height = 0;
  int width = 0;
  int dim = 0;
  std::vector<float> data;  // (row, column, feature) row-major

  PixelFeatureField() = default;
  PixelFeatureField(int h, int w, int d)
      : height(h), width(w), dim(d), data(static_cast<std::size_t>(h) * w * d, 0.0f) {}

  std::size_t index(int y, int x) const {
    return (static_cast<std::size_t>(y) * width + x) * dim;
  }
  const float* at(int y, int x) const { return data.data() + index(y, x); }
  float* at(int y, int x) { return data.data() + index(y, x); }
};

/// Extracts a D-dimensional descriptor per pixel. channel_mean (length =
/// image channels) is subtracted before the pyramid is built. Descriptor
/// order is tap-major, scale-minor: all scales of the first selected tap,
/// then all scales of the second, and so on.
inline PixelFeatureField per_pixel_features(const ImagePlane& image, const NetSpec& net,
                                            const WeightBundle& weights,
                                            const std::vector<std::string>& tap_names,
                                            const std::vector<double>& scales,
                                            const std::vector<float>& channel_mean) {
  if (tap_names.empty()) throw ContractError("per_pixel_features needs at least one tap");
  if (scales.empty()) throw ContractError("per_pixel_features needs at least one scale");
  if (channel_mean.size() != static_cast<std::size_t>(image.channels))
    throw ContractError("channel_mean length must equal image channels");

  ImagePlane centered = image;
  for (int y = 0; y < centered.height; ++y)
    for (int x = 0; x < centered.width; ++x)
      for (int c = 0; c < centered.channels; ++c) centered.at(y, x, c) -= channel_mean[c];

  const auto pyramid = build_pyramid(centered, scales);
  const auto [stitched, layout] = stitch(pyramid, default_gutter(net), net.tap_stride_lcm());
  const auto acts = forward_taps(stitched, net, weights);

  int dim = 0;
  for (const auto& name : tap_names) dim += net.tap_channels(name);
  dim *= static_cast<int>(scales.size());

  PixelFeatureField field(image.height, image.width, dim);
  int offset = 0;
  for (const auto& name : tap_names) {
    const TapActivation* act = nullptr;
    for (const auto& a : acts)
      if (a.name == name) act = &a;
    if (!act) throw ContractError("tap '" + name + "' not present in net");
    const auto tiles = unstitch(act->map, layout, act->stride);
    for (std::size_t s = 0; s < scales.size(); ++s) {
      const ImagePlane rescaled = resize_bilinear(tiles[s], image.height, image.width);
      const int ch = rescaled.channels;
      for (int y = 0; y < image.height; ++y)
        for (int x = 0; x < image.width; ++x)
          std::copy_n(&rescaled.data[rescaled.index(y, x, 0)], ch, field.at(y, x) + offset);
      offset += ch;
    }
  }
  return field;
}

}  // namespace ck
