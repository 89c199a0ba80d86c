/**
 * @file bench.hpp
 * @brief Boundary-detection benchmark: threshold sweep, thinning, tolerance
 *        matching, and the ODS / OIS / AP summary measures.
 *
 * Per image and threshold, the soft edge map is binarized, thinned to a 1-px
 * skeleton (Zhang-Suen schedule), and matched one-to-one against every
 * annotator map within a Euclidean tolerance radius. Precision counts a
 * detection pixel as correct when it matches at least one annotator; recall
 * accounts each annotator's boundary pixels separately.
 *
 * Counts are integers, so dataset aggregation is exactly order-independent.
 */
#pragma once

#include <contourkit/errors.hpp>
#include <contourkit/image.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <limits>
#include <map>
#include <string>
#include <vector>

namespace ck {

// =============================================================================
// Types
// =============================================================================

/// All annotator boundary maps for one image (binary planes, 1 = boundary).
struct GroundTruth {
  std::string image_id;
  std::vector<ImagePlane> annotators;
};

using GroundTruthSet = std::vector<GroundTruth>;

struct PRPoint {
  double threshold = 0.0;
  long matched_det = 0;
  long total_det = 0;
  long matched_gt = 0;
  long total_gt = 0;
  double precision = 1.0;
  double recall = 0.0;
  double f = 0.0;

  void finish() {
    precision = total_det == 0 ? 1.0 : static_cast<double>(matched_det) / total_det;
    recall = total_gt == 0 ? 1.0 : static_cast<double>(matched_gt) / total_gt;
    f = precision + recall == 0.0 ? 0.0 : 2.0 * precision * recall / (precision + recall);
  }
};

/// One image's counts across the threshold grid.
struct ImagePrTable {
  std::string image_id;
  std::vector<PRPoint> points;  // same threshold order as the grid
};

struct BenchReport {
  std::vector<PRPoint> pr_curve;  // dataset-aggregated per threshold
  double ods = 0.0;
  double ods_threshold = 0.0;
  double ois = 0.0;
  double ap = 0.0;
  std::vector<ImagePrTable> per_image;
};

/// The default grid: k / (count + 1) for k = 1..count (99 levels at 99).
inline std::vector<double> threshold_grid(int count = 99) {
  if (count < 1) throw ContractError("threshold count must be >= 1");
  std::vector<double> grid(count);
  for (int k = 1; k <= count; ++k) grid[k - 1] = static_cast<double>(k) / (count + 1);
  return grid;
}

// =============================================================================
// Thinning
// =============================================================================

namespace detail {

/// One Zhang-Suen subiteration; returns true if any pixel was deleted.
inline bool zhang_suen_pass(std::vector<uint8_t>& img, int h, int w, bool second) {
  auto px = [&](int y, int x) -> uint8_t {
    return (y < 0 || y >= h || x < 0 || x >= w) ? 0 : img[static_cast<std::size_t>(y) * w + x];
  };
  std::vector<std::size_t> kill;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!px(y, x)) continue;
      const uint8_t p2 = px(y - 1, x), p3 = px(y - 1, x + 1), p4 = px(y, x + 1),
                    p5 = px(y + 1, x + 1), p6 = px(y + 1, x), p7 = px(y + 1, x - 1),
                    p8 = px(y, x - 1), p9 = px(y - 1, x - 1);
      const int b = p2 + p3 + p4 + p5 + p6 + p7 + p8 + p9;
      if (b < 2 || b > 6) continue;
      const uint8_t seq[9] = {p2, p3, p4, p5, p6, p7, p8, p9, p2};
      int a = 0;
      for (int i = 0; i < 8; ++i)
        if (!seq[i] && seq[i + 1]) ++a;
      if (a != 1) continue;
      if (!second) {
        if (p2 * p4 * p6 != 0 || p4 * p6 * p8 != 0) continue;
      } else {
        if (p2 * p4 * p8 != 0 || p2 * p6 * p8 != 0) continue;
      }
      kill.push_back(static_cast<std::size_t>(y) * w + x);
    }
  }
  for (const std::size_t i : kill) img[i] = 0;
  return !kill.empty();
}

}  // namespace detail

/// Iterative Zhang-Suen thinning of a binary plane to a 1-px skeleton.
inline ImagePlane thin_binary(const ImagePlane& binary) {
  if (binary.channels != 1) throw ContractError("thin_binary wants 1 channel");
  std::vector<uint8_t> img(binary.size());
  for (std::size_t i = 0; i < binary.size(); ++i) img[i] = binary.data[i] > 0.0f ? 1 : 0;
  bool changed = true;
  while (changed) {
    changed = detail::zhang_suen_pass(img, binary.height, binary.width, false);
    changed |= detail::zhang_suen_pass(img, binary.height, binary.width, true);
  }
  ImagePlane out(binary.height, binary.width, 1, 0.0f);
  for (std::size_t i = 0; i < binary.size(); ++i) out.data[i] = img[i] ? 1.0f : 0.0f;
  return out;
}

/// Binarize at v >= t, then thin.
inline ImagePlane threshold_and_thin(const ImagePlane& edge_map, double t) {
  if (edge_map.channels != 1) throw ContractError("threshold_and_thin wants 1 channel");
  if (t < 0.0 || t > 1.0) throw ContractError("threshold must lie in [0, 1]");
  ImagePlane binary(edge_map.height, edge_map.width, 1, 0.0f);
  for (std::size_t i = 0; i < edge_map.size(); ++i)
    binary.data[i] = edge_map.data[i] >= static_cast<float>(t) ? 1.0f : 0.0f;
  return thin_binary(binary);
}

// =============================================================================
// Correspondence
// =============================================================================

struct PixelList {
  std::vector<int> ys;
  std::vector<int> xs;

  std::size_t count() const { return ys.size(); }
};

inline PixelList nonzero_pixels(const ImagePlane& binary) {
  PixelList list;
  for (int y = 0; y < binary.height; ++y)
    for (int x = 0; x < binary.width; ++x)
      if (binary.at(y, x) > 0.0f) {
        list.ys.push_back(y);
        list.xs.push_back(x);
      }
  return list;
}

struct Correspondence {
  int matched = 0;
  std::vector<char> det_matched;  // per det pixel
  std::vector<char> gt_matched;   // per gt pixel
};

enum class Matcher { greedy, exact };

namespace detail {

struct CandidateEdge {
  double dist2;
  int det;
  int gt;
};

inline std::vector<CandidateEdge> feasible_edges(const PixelList& det, const PixelList& gt,
                                                 double max_dist) {
  std::vector<CandidateEdge> edges;
  const double cap2 = max_dist * max_dist;
  for (std::size_t i = 0; i < det.count(); ++i)
    for (std::size_t j = 0; j < gt.count(); ++j) {
      const double dy = det.ys[i] - gt.ys[j];
      const double dx = det.xs[i] - gt.xs[j];
      const double d2 = dy * dy + dx * dx;
      if (d2 <= cap2) edges.push_back({d2, static_cast<int>(i), static_cast<int>(j)});
    }
  return edges;
}

/// Greedy distance-ordered matching: shortest feasible pair first.
inline Correspondence correspond_greedy(const PixelList& det, const PixelList& gt,
                                        double max_dist) {
  auto edges = feasible_edges(det, gt, max_dist);
  std::sort(edges.begin(), edges.end(), [](const CandidateEdge& a, const CandidateEdge& b) {
    if (a.dist2 != b.dist2) return a.dist2 < b.dist2;
    if (a.det != b.det) return a.det < b.det;
    return a.gt < b.gt;
  });
  Correspondence out;
  out.det_matched.assign(det.count(), 0);
  out.gt_matched.assign(gt.count(), 0);
  for (const auto& e : edges) {
    if (out.det_matched[e.det] || out.gt_matched[e.gt]) continue;
    out.det_matched[e.det] = 1;
    out.gt_matched[e.gt] = 1;
    ++out.matched;
  }
  return out;
}

/// Exact min-cost max-cardinality assignment by successive shortest
/// augmenting paths (SPFA over the residual graph). Maximizes the match
/// count; among maximum matchings, minimizes total distance.
inline Correspondence correspond_exact(const PixelList& det, const PixelList& gt,
                                       double max_dist) {
  const int nd = static_cast<int>(det.count());
  const int ng = static_cast<int>(gt.count());
  const auto edges = feasible_edges(det, gt, max_dist);
  std::vector<std::vector<std::pair<int, double>>> adj(nd);  // det -> (gt, dist)
  for (const auto& e : edges) adj[e.det].push_back({e.gt, std::sqrt(e.dist2)});

  std::vector<int> match_of_gt(ng, -1);
  std::vector<int> match_of_det(nd, -1);
  constexpr double kInf = std::numeric_limits<double>::infinity();

  while (true) {
    // multi-source SPFA from every unmatched det pixel
    std::vector<double> dist(nd, kInf);
    std::vector<double> dist_gt(ng, kInf);
    std::vector<int> via_det(ng, -1);  // predecessor det on the path into gt
    std::deque<int> queue;
    std::vector<char> queued(nd, 0);
    for (int i = 0; i < nd; ++i)
      if (match_of_det[i] < 0) {
        dist[i] = 0.0;
        queue.push_back(i);
        queued[i] = 1;
      }
    while (!queue.empty()) {
      const int i = queue.front();
      queue.pop_front();
      queued[i] = 0;
      for (const auto& [j, d] : adj[i]) {
        if (match_of_det[i] == j) continue;  // forward over non-matching edges only
        const double nd_gt = dist[i] + d;
        if (nd_gt + 1e-12 < dist_gt[j]) {
          dist_gt[j] = nd_gt;
          via_det[j] = i;
          const int back = match_of_gt[j];  // residual edge gt -> its matched det
          if (back >= 0) {
            const double nd_det = nd_gt - 0.0;  // cost of matched edge is refunded below
            // walking back releases the matched edge: subtract its cost
            double released = 0.0;
            for (const auto& [jj, dd] : adj[back])
              if (jj == j) {
                released = dd;
                break;
              }
            if (nd_det - released + 1e-12 < dist[back]) {
              dist[back] = nd_det - released;
              if (!queued[back]) {
                queue.push_back(back);
                queued[back] = 1;
              }
            }
          }
        }
      }
    }

    // pick the reachable unmatched gt pixel with the smallest path cost
    int best_gt = -1;
    double best_cost = kInf;
    for (int j = 0; j < ng; ++j)
      if (match_of_gt[j] < 0 && dist_gt[j] < best_cost) {
        best_cost = dist_gt[j];
        best_gt = j;
      }
    if (best_gt < 0) break;

    // augment along predecessor pointers
    int j = best_gt;
    while (j >= 0) {
      const int i = via_det[j];
      const int next_j = match_of_det[i];
      match_of_gt[j] = i;
      match_of_det[i] = j;
      j = next_j;
    }
  }

  Correspondence out;
  out.det_matched.assign(nd, 0);
  out.gt_matched.assign(ng, 0);
  for (int i = 0; i < nd; ++i)
    if (match_of_det[i] >= 0) {
      out.det_matched[i] = 1;
      out.gt_matched[match_of_det[i]] = 1;
      ++out.matched;
    }
  return out;
}

}  // namespace detail

/// One-to-one matching between detection and ground-truth pixels with
/// Euclidean distance <= max_dist.
inline Correspondence correspond(const PixelList& det, const PixelList& gt, double max_dist,
                                 Matcher matcher = Matcher::greedy) {
  return matcher == Matcher::greedy ? detail::correspond_greedy(det, gt, max_dist)
                                    : detail::correspond_exact(det, gt, max_dist);
}

inline Correspondence correspond(const ImagePlane& det, const ImagePlane& gt, double max_dist,
                                 Matcher matcher = Matcher::greedy) {
  if (!det.same_dims(gt)) throw ContractError("correspond dims mismatch");
  return correspond(nonzero_pixels(det), nonzero_pixels(gt), max_dist, matcher);
}

/// Matching tolerance in pixels for a given image size.
inline double match_tolerance(int height, int width, double tol_fraction = 0.0075) {
  return tol_fraction * std::sqrt(static_cast<double>(height) * height +
                                  static_cast<double>(width) * width);
}

// =============================================================================
// Per-image evaluation and dataset summary
// =============================================================================

/// Sweeps the threshold grid over one soft edge map. Per threshold the map
/// is thinned, then matched against every annotator map separately:
/// matched_det counts det pixels matched to >= 1 annotator, matched_gt sums
/// per-annotator matched counts, total_gt sums annotator boundary pixels.
inline ImagePrTable evaluate_image(const ImagePlane& edge_map,
                                   const std::vector<ImagePlane>& annotators,
                                   const std::vector<double>& thresholds, double max_dist,
                                   Matcher matcher = Matcher::greedy,
                                   const std::string& image_id = "") {
  if (annotators.empty()) throw ContractError("evaluate_image needs >= 1 annotator");
  for (const auto& gt : annotators)
    if (gt.height != edge_map.height || gt.width != edge_map.width)
      throw ContractError("annotator dims do not match edge map");

  std::vector<PixelList> gt_pixels;
  gt_pixels.reserve(annotators.size());
  long total_gt = 0;
  for (const auto& gt : annotators) {
    gt_pixels.push_back(nonzero_pixels(gt));
    total_gt += static_cast<long>(gt_pixels.back().count());
  }

  ImagePrTable table;
  table.image_id = image_id;
  table.points.reserve(thresholds.size());
  for (const double t : thresholds) {
    const ImagePlane det = threshold_and_thin(edge_map, t);
    const PixelList det_pixels = nonzero_pixels(det);

    PRPoint point;
    point.threshold = t;
    point.total_det = static_cast<long>(det_pixels.count());
    point.total_gt = total_gt;
    std::vector<char> det_any(det_pixels.count(), 0);
    for (const auto& gt : gt_pixels) {
      const Correspondence m = correspond(det_pixels, gt, max_dist, matcher);
      point.matched_gt += m.matched;
      for (std::size_t i = 0; i < det_any.size(); ++i) det_any[i] |= m.det_matched[i];
    }
    for (const char flag : det_any) point.matched_det += flag;
    point.finish();
    table.points.push_back(point);
  }
  return table;
}

/// Aggregates per-image tables into the dataset PR curve and the three
/// summary measures. ODS fixes one threshold for the whole dataset; OIS
/// lets each image use its own best threshold; AP averages interpolated
/// precision at recalls 0.01..1.00 (0 beyond the maximum achieved recall).
inline BenchReport summarize(const std::vector<ImagePrTable>& per_image) {
  if (per_image.empty()) throw ContractError("summarize needs >= 1 image");
  const std::size_t n_thresholds = per_image[0].points.size();
  for (const auto& table : per_image)
    if (table.points.size() != n_thresholds)
      throw ContractError("per-image tables disagree on threshold grid");

  BenchReport report;
  report.per_image = per_image;

  // dataset PR per threshold from summed integer counts
  report.pr_curve.assign(n_thresholds, PRPoint{});
  for (std::size_t k = 0; k < n_thresholds; ++k) {
    PRPoint& point = report.pr_curve[k];
    point.threshold = per_image[0].points[k].threshold;
    for (const auto& table : per_image) {
      point.matched_det += table.points[k].matched_det;
      point.total_det += table.points[k].total_det;
      point.matched_gt += table.points[k].matched_gt;
      point.total_gt += table.points[k].total_gt;
    }
    point.finish();
  }

  // ODS: best dataset F over the grid (lowest threshold wins ties)
  std::size_t best_k = 0;
  for (std::size_t k = 1; k < n_thresholds; ++k)
    if (report.pr_curve[k].f > report.pr_curve[best_k].f) best_k = k;
  report.ods = report.pr_curve[best_k].f;
  report.ods_threshold = report.pr_curve[best_k].threshold;

  // OIS: sum counts at each image's own best-F threshold
  PRPoint ois_point;
  for (const auto& table : per_image) {
    std::size_t img_best = 0;
    double best_f = -1.0;
    for (std::size_t k = 0; k < n_thresholds; ++k) {
      PRPoint p = table.points[k];
      p.finish();
      if (p.f > best_f) {
        best_f = p.f;
        img_best = k;
      }
    }
    ois_point.matched_det += table.points[img_best].matched_det;
    ois_point.total_det += table.points[img_best].total_det;
    ois_point.matched_gt += table.points[img_best].matched_gt;
    ois_point.total_gt += table.points[img_best].total_gt;
  }
  ois_point.finish();
  report.ois = ois_point.f;

  // AP: 100-point interpolated precision, zero-filled past max recall
  double ap_sum = 0.0;
  for (int level = 1; level <= 100; ++level) {
    const double r = level / 100.0;
    double best_p = 0.0;
    bool reachable = false;
    for (const auto& point : report.pr_curve)
      if (point.recall >= r - 1e-12) {
        reachable = true;
        best_p = std::max(best_p, point.precision);
      }
    ap_sum += reachable ? best_p : 0.0;
  }
  report.ap = ap_sum / 100.0;
  return report;
}

// =============================================================================
// Report emitters
// =============================================================================

namespace detail {

inline std::string fixed6(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

/// Paper-style 3-decimal cell: leading zero stripped (".741").
inline std::string table_cell(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  std::string s = buf;
  if (s.size() > 1 && s[0] == '0') s.erase(0, 1);
  return s;
}

}  // namespace detail

inline std::string emit_pr_tsv(const BenchReport& report) {
  std::string out = "threshold\tprecision\trecall\tf\n";
  for (const auto& p : report.pr_curve)
    out += detail::fixed6(p.threshold) + "\t" + detail::fixed6(p.precision) + "\t" +
           detail::fixed6(p.recall) + "\t" + detail::fixed6(p.f) + "\n";
  return out;
}

inline std::string emit_summary_tsv(const BenchReport& report) {
  return "ods\tods_threshold\tois\tap\n" + detail::fixed6(report.ods) + "\t" +
         detail::fixed6(report.ods_threshold) + "\t" + detail::fixed6(report.ois) + "\t" +
         detail::fixed6(report.ap) + "\n";
}

/// Columns are detector variants, rows are ODS / OIS / AP.
inline std::string emit_layer_table(const std::vector<std::string>& columns,
                                    const std::vector<double>& ods_row,
                                    const std::vector<double>& ois_row,
                                    const std::vector<double>& ap_row) {
  if (columns.size() != ods_row.size() || columns.size() != ois_row.size() ||
      columns.size() != ap_row.size())
    throw ContractError("table rows must match column count");
  std::string out;
  for (const auto& c : columns) out += "\t" + c;
  out += "\n";
  const char* row_names[3] = {"ODS", "OIS", "AP"};
  const std::vector<double>* rows[3] = {&ods_row, &ois_row, &ap_row};
  for (int r = 0; r < 3; ++r) {
    out += row_names[r];
    for (const double v : *rows[r]) out += "\t" + detail::table_cell(v);
    out += "\n";
  }
  return out;
}

}  // namespace ck
