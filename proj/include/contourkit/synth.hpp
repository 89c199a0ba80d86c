/**
 * @file synth.hpp
 * @brief Seeded synthetic contour dataset: anti-aliased shapes on textured
 *        backgrounds, with exact rasterized outlines as annotator maps.
 *
 * Every image holds 1-3 non-overlapping ellipses/convex polygons over a
 * low-frequency textured background. Ground truth is the dense rasterized
 * outline of every shape; each image gets 1-3 simulated annotators, the
 * first exact and the rest rigidly jittered by up to one pixel. Everything
 * derives from one root seed, per image, so regeneration is byte-identical.
 */
#pragma once

#include <contourkit/errors.hpp>
#include <contourkit/image.hpp>
#include <contourkit/rng.hpp>

#include <array>
#include <cmath>
#include <filesystem>
#include <numbers>
#include <string>
#include <vector>

namespace ck {

namespace detail {

struct SynthShape {
  bool is_ellipse = true;
  double cy = 0.0, cx = 0.0;
  double a = 1.0, b = 1.0, phi = 0.0;                  // ellipse
  std::vector<std::pair<double, double>> vertices;     // convex polygon (y, x)
  std::array<float, 3> color{0.5f, 0.5f, 0.5f};
  double bound_radius = 0.0;

  bool contains(double y, double x) const {
    if (is_ellipse) {
      const double dy = y - cy;
      const double dx = x - cx;
      const double u = dx * std::cos(phi) + dy * std::sin(phi);
      const double v = -dx * std::sin(phi) + dy * std::cos(phi);
      return (u * u) / (a * a) + (v * v) / (b * b) <= 1.0;
    }
    // convex polygon, vertices in consistent winding order
    const std::size_t n = vertices.size();
    for (std::size_t i = 0; i < n; ++i) {
      const auto& [y0, x0] = vertices[i];
      const auto& [y1, x1] = vertices[(i + 1) % n];
      const double cross = (x1 - x0) * (y - y0) - (y1 - y0) * (x - x0);
      if (cross < 0.0) return false;
    }
    return true;
  }

  double perimeter() const {
    if (is_ellipse) {
      // Ramanujan's approximation
      return std::numbers::pi * (3.0 * (a + b) - std::sqrt((3.0 * a + b) * (a + 3.0 * b)));
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < vertices.size(); ++i) {
      const auto& [y0, x0] = vertices[i];
      const auto& [y1, x1] = vertices[(i + 1) % vertices.size()];
      sum += std::hypot(y1 - y0, x1 - x0);
    }
    return sum;
  }

  /// Dense boundary samples, spacing ~0.2 px.
  void trace(std::vector<std::pair<double, double>>& points) const {
    if (is_ellipse) {
      const int n = std::max(64, static_cast<int>(std::ceil(perimeter() / 0.2)));
      for (int i = 0; i < n; ++i) {
        const double t = 2.0 * std::numbers::pi * i / n;
        const double u = a * std::cos(t);
        const double v = b * std::sin(t);
        points.push_back({cy + u * std::sin(phi) + v * std::cos(phi),
                          cx + u * std::cos(phi) - v * std::sin(phi)});
      }
      return;
    }
    for (std::size_t i = 0; i < vertices.size(); ++i) {
      const auto& [y0, x0] = vertices[i];
      const auto& [y1, x1] = vertices[(i + 1) % vertices.size()];
      const int n = std::max(2, static_cast<int>(std::ceil(std::hypot(y1 - y0, x1 - x0) / 0.2)));
      for (int k = 0; k < n; ++k) {
        const double t = static_cast<double>(k) / n;
        points.push_back({y0 + t * (y1 - y0), x0 + t * (x1 - x0)});
      }
    }
  }
};

inline double luma(const std::array<float, 3>& c) {
  return 0.299 * c[0] + 0.587 * c[1] + 0.114 * c[2];
}

}  // namespace detail

struct SynthImage {
  ImagePlane image;                    // size x size x 3 in [0, 1]
  std::vector<ImagePlane> annotators;  // 1-3 binary outline maps
  double analytic_perimeter = 0.0;     // sum of shape perimeters
};

/// Renders one synthetic image and its annotator maps from `rng`.
inline SynthImage synth_image(int size, Rng rng) {
  if (size < 16) throw ContractError("synthetic images need size >= 16");
  constexpr double kPi = std::numbers::pi;

  // textured background: slow color wave plus fine noise
  std::array<float, 3> base;
  std::array<double, 3> phase;
  for (int c = 0; c < 3; ++c) {
    base[c] = static_cast<float>(rng.next_in(0.3, 0.7));
    phase[c] = rng.next_in(0.0, 2.0 * kPi);
  }
  const double fy = rng.next_in(0.5, 2.0);
  const double fx = rng.next_in(0.5, 2.0);

  ImagePlane image(size, size, 3);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x)
      for (int c = 0; c < 3; ++c) {
        const double wave =
            0.06 * std::sin(2.0 * kPi * (fy * y + fx * x) / size + phase[c]);
        const double noise = 0.03 * (rng.next_unit() - 0.5);
        image.at(y, x, c) = static_cast<float>(std::clamp(base[c] + wave + noise, 0.0, 1.0));
      }

  // place 1-3 non-overlapping shapes, margin 5 px from every border
  const int n_shapes = 1 + static_cast<int>(rng.next_below(3));
  std::vector<detail::SynthShape> shapes;
  const double bg_luma = detail::luma(base);
  for (int s = 0; s < n_shapes; ++s) {
    for (int attempt = 0; attempt < 30; ++attempt) {
      detail::SynthShape shape;
      const double r = rng.next_in(size / 8.0, size / 4.0);
      shape.cy = rng.next_in(r + 5.0, size - 6.0 - r);
      shape.cx = rng.next_in(r + 5.0, size - 6.0 - r);
      shape.bound_radius = r;
      shape.is_ellipse = rng.next_below(2) == 0;
      if (shape.is_ellipse) {
        shape.a = r;
        shape.b = rng.next_in(0.6 * r, r);
        shape.phi = rng.next_in(0.0, kPi);
      } else {
        const int k = 3 + static_cast<int>(rng.next_below(4));
        const double rot = rng.next_in(0.0, 2.0 * kPi);
        for (int v = 0; v < k; ++v) {
          const double ang = rot + 2.0 * kPi * v / k + rng.next_in(-0.2, 0.2);
          const double rad = rng.next_in(0.75 * r, r);
          shape.vertices.push_back({shape.cy + rad * std::sin(ang),
                                    shape.cx + rad * std::cos(ang)});
        }
      }
      bool clear = true;
      for (const auto& other : shapes) {
        const double d = std::hypot(other.cy - shape.cy, other.cx - shape.cx);
        if (d < other.bound_radius + shape.bound_radius + 4.0) clear = false;
      }
      if (!clear) continue;

      for (int tries = 0; tries < 20; ++tries) {
        for (int c = 0; c < 3; ++c) shape.color[c] = static_cast<float>(rng.next_unit());
        if (std::abs(detail::luma(shape.color) - bg_luma) >= 0.25) break;
      }
      if (std::abs(detail::luma(shape.color) - bg_luma) < 0.25)
        for (int c = 0; c < 3; ++c)
          shape.color[c] = bg_luma > 0.5 ? 0.05f : 0.95f;
      shapes.push_back(std::move(shape));
      break;
    }
  }

  // anti-aliased fill: 4x4 subsample coverage per pixel
  for (const auto& shape : shapes) {
    const int y_lo = std::max(0, static_cast<int>(shape.cy - shape.bound_radius - 2));
    const int y_hi = std::min(size - 1, static_cast<int>(shape.cy + shape.bound_radius + 2));
    const int x_lo = std::max(0, static_cast<int>(shape.cx - shape.bound_radius - 2));
    const int x_hi = std::min(size - 1, static_cast<int>(shape.cx + shape.bound_radius + 2));
    for (int y = y_lo; y <= y_hi; ++y)
      for (int x = x_lo; x <= x_hi; ++x) {
        int hits = 0;
        for (int sy = 0; sy < 4; ++sy)
          for (int sx = 0; sx < 4; ++sx)
            if (shape.contains(y - 0.5 + (sy + 0.5) / 4.0, x - 0.5 + (sx + 0.5) / 4.0)) ++hits;
        if (hits == 0) continue;
        const float cov = hits / 16.0f;
        for (int c = 0; c < 3; ++c)
          image.at(y, x, c) = (1.0f - cov) * image.at(y, x, c) + cov * shape.color[c];
      }
  }

  // exact rasterized outlines
  ImagePlane outline(size, size, 1, 0.0f);
  double perimeter_sum = 0.0;
  std::vector<std::pair<double, double>> points;
  for (const auto& shape : shapes) {
    perimeter_sum += shape.perimeter();
    points.clear();
    shape.trace(points);
    for (const auto& [py, px] : points) {
      const int iy = static_cast<int>(std::lround(py));
      const int ix = static_cast<int>(std::lround(px));
      if (iy >= 0 && iy < size && ix >= 0 && ix < size) outline.at(iy, ix) = 1.0f;
    }
  }

  SynthImage out;
  out.image = std::move(image);
  out.analytic_perimeter = perimeter_sum;
  const int n_annot = 1 + static_cast<int>(rng.next_below(3));
  for (int k = 0; k < n_annot; ++k) {
    int dy = 0;
    int dx = 0;
    if (k > 0) {
      dy = static_cast<int>(rng.next_below(3)) - 1;
      dx = static_cast<int>(rng.next_below(3)) - 1;
    }
    ImagePlane shifted(size, size, 1, 0.0f);
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) {
        const int sy = y - dy;
        const int sx = x - dx;
        if (sy >= 0 && sy < size && sx >= 0 && sx < size)
          shifted.at(y, x) = outline.at(sy, sx);
      }
    out.annotators.push_back(std::move(shifted));
  }
  return out;
}

// =============================================================================
// Dataset tree
// =============================================================================

struct SynthOptions {
  std::filesystem::path out_dir;
  int n_train = 0;
  int n_val = 0;
  int n_test = 0;
  int image_size = 64;
  uint64_t seed = 1;
};

inline std::string synth_image_id(int index) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "img%03d", index);
  return buf;
}

/// Writes <out>/<split>/images/<id>.ppm and <out>/<split>/gt/<id>/<k>.pgm
/// for splits train/val/test. Deterministic per (seed, split, index).
inline void generate_dataset(const SynthOptions& opts) {
  namespace fs = std::filesystem;
  if (opts.n_train < 0 || opts.n_val < 0 || opts.n_test < 0)
    throw ContractError("split sizes must be >= 0");
  if (opts.image_size < 16) throw ContractError("image_size must be >= 16");

  const Rng root(opts.seed);
  const std::pair<const char*, int> splits[3] = {
      {"train", opts.n_train}, {"val", opts.n_val}, {"test", opts.n_test}};
  for (const auto& [split, count] : splits) {
    if (count == 0) continue;
    const fs::path images_dir = opts.out_dir / split / "images";
    const fs::path gt_dir = opts.out_dir / split / "gt";
    fs::create_directories(images_dir);
    fs::create_directories(gt_dir);
    for (int i = 0; i < count; ++i) {
      const std::string id = synth_image_id(i);
      const SynthImage sample =
          synth_image(opts.image_size, root.fork(split, static_cast<uint64_t>(i)));
      write_ppm(sample.image, images_dir / (id + ".ppm"));
      const fs::path image_gt = gt_dir / id;
      fs::create_directories(image_gt);
      for (std::size_t k = 0; k < sample.annotators.size(); ++k)
        write_pgm(sample.annotators[k], image_gt / (std::to_string(k) + ".pgm"), 255);
    }
  }
}

}  // namespace ck
