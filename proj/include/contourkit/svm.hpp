/**
 * @file svm.hpp
 * @brief Binary linear SVM edge classifier over per-pixel features.
 *
 * Training minimizes (lambda/2)|w|^2 + mean hinge loss by seeded stochastic
 * subgradient descent with step 1/(lambda t) (bias unregularized), returning
 * the trajectory-averaged iterate. Features are standardized by the stored
 * per-dimension mean/scale; raw scores map to [0, 1] through an affine map
 * pinned at the 1st/99th percentile of training scores.
 *
 * Detection scores an image at the original and double resolution and
 * averages the two edge maps.
 */
#pragma once

#include <contourkit/densefeat.hpp>
#include <contourkit/errors.hpp>
#include <contourkit/image.hpp>
#include <contourkit/net.hpp>
#include <contourkit/rng.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

namespace ck {

// =============================================================================
// Types
// =============================================================================

struct SvmModel {
  std::vector<double> w;
  double b = 0.0;
  double lambda = 0.0;
  std::vector<double> feature_mean;
  std::vector<double> feature_scale;  // strictly positive
  double score_lo = 0.0;
  double score_hi = 1.0;

  // pipeline context stored alongside the classifier
  std::vector<std::string> taps;
  std::vector<float> channel_mean;
  std::vector<double> scales;

  int dim() const { return static_cast<int>(w.size()); }

  /// Raw decision value for one standardized-on-the-fly feature vector.
  double raw_score(const float* x) const {
    double s = b;
    for (std::size_t d = 0; d < w.size(); ++d)
      s += w[d] * ((x[d] - feature_mean[d]) / feature_scale[d]);
    return s;
  }

  double mapped_score(double raw) const {
    const double v = (raw - score_lo) / (score_hi - score_lo);
    return std::min(1.0, std::max(0.0, v));
  }
};

struct SampleRef {
  std::string image_id;
  int y = 0;
  int x = 0;
};

struct TrainSet {
  int dim = 0;
  std::vector<float> samples;      // n x dim, row-major
  std::vector<int> labels;         // +1 / -1
  std::vector<SampleRef> provenance;

  std::size_t count() const { return labels.size(); }
  const float* sample(std::size_t i) const { return samples.data() + i * dim; }

  void append(const TrainSet& other) {
    if (dim == 0) dim = other.dim;
    if (dim != other.dim) throw ContractError("cannot merge train sets of different dim");
    samples.insert(samples.end(), other.samples.begin(), other.samples.end());
    labels.insert(labels.end(), other.labels.begin(), other.labels.end());
    provenance.insert(provenance.end(), other.provenance.begin(), other.provenance.end());
  }
};

// =============================================================================
// Pixel sampling
// =============================================================================

/// Selects labeled training pixels from one image. Positives are pixels
/// where at least half of the annotators mark a boundary; negatives are
/// drawn uniformly from pixels farther than 2 px from every annotator
/// boundary. Returns nullopt when the image has no positive pixel.
inline std::optional<TrainSet> sample_pixels(const PixelFeatureField& field,
                                             const std::vector<ImagePlane>& annotators,
                                             int pos_cap, double neg_ratio, uint64_t seed,
                                             const std::string& image_id = "") {
  if (annotators.empty()) throw ContractError("sample_pixels needs >= 1 annotator");
  for (const auto& gt : annotators)
    if (gt.height != field.height || gt.width != field.width || gt.channels != 1)
      throw ContractError("annotator dims do not match feature field");
  if (pos_cap < 1 || neg_ratio < 0.0) throw ContractError("bad sampling parameters");

  const int h = field.height;
  const int w = field.width;

  // consensus positives and the union boundary map
  std::vector<char> boundary(static_cast<std::size_t>(h) * w, 0);
  std::vector<std::pair<int, int>> positives;
  const double need = annotators.size() / 2.0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      int votes = 0;
      for (const auto& gt : annotators) votes += gt.at(y, x) > 0.5f ? 1 : 0;
      if (votes > 0) boundary[static_cast<std::size_t>(y) * w + x] = 1;
      if (votes >= need) positives.push_back({y, x});
    }
  if (positives.empty()) return std::nullopt;

  // exclusion zone: within distance 2 of any annotator boundary pixel
  std::vector<char> excluded(boundary);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (!boundary[static_cast<std::size_t>(y) * w + x]) continue;
      for (int dy = -2; dy <= 2; ++dy)
        for (int dx = -2; dx <= 2; ++dx) {
          if (dy * dy + dx * dx > 4) continue;
          const int ny = y + dy;
          const int nx = x + dx;
          if (ny >= 0 && ny < h && nx >= 0 && nx < w)
            excluded[static_cast<std::size_t>(ny) * w + nx] = 1;
        }
    }
  std::vector<std::pair<int, int>> eligible_neg;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (!excluded[static_cast<std::size_t>(y) * w + x]) eligible_neg.push_back({y, x});

  // seeded prefix shuffles pick the subsets deterministically
  auto pick = [](std::vector<std::pair<int, int>>& pool, std::size_t want, Rng rng) {
    want = std::min(want, pool.size());
    for (std::size_t i = 0; i < want; ++i) {
      const std::size_t j = i + rng.next_below(pool.size() - i);
      std::swap(pool[i], pool[j]);
    }
    pool.resize(want);
    std::sort(pool.begin(), pool.end());
  };
  Rng root(seed);
  pick(positives, static_cast<std::size_t>(pos_cap), root.fork("pos"));
  pick(eligible_neg,
       static_cast<std::size_t>(std::llround(neg_ratio * static_cast<double>(positives.size()))),
       root.fork("neg"));

  TrainSet out;
  out.dim = field.dim;
  auto push = [&](const std::vector<std::pair<int, int>>& pixels, int label) {
    for (const auto& [y, x] : pixels) {
      const float* f = field.at(y, x);
      out.samples.insert(out.samples.end(), f, f + field.dim);
      out.labels.push_back(label);
      out.provenance.push_back({image_id, y, x});
    }
  };
  push(positives, +1);
  push(eligible_neg, -1);
  return out;
}

// =============================================================================
// Training
// =============================================================================

/// Objective value (lambda/2)|w|^2 + mean hinge on standardized samples.
inline double svm_objective(const SvmModel& model, const TrainSet& train) {
  double norm2 = 0.0;
  for (const double v : model.w) norm2 += v * v;
  double hinge = 0.0;
  for (std::size_t i = 0; i < train.count(); ++i)
    hinge += std::max(0.0, 1.0 - train.labels[i] * model.raw_score(train.sample(i)));
  return 0.5 * model.lambda * norm2 + hinge / static_cast<double>(train.count());
}

struct TrainResult {
  SvmModel model;
  std::vector<double> epoch_objectives;  // objective of the averaged iterate
};

inline TrainResult train_svm(const TrainSet& train, double lambda, int epochs, uint64_t seed) {
  const std::size_t n = train.count();
  if (n < 2) throw ContractError("train_svm needs >= 2 samples");
  if (lambda <= 0.0 || epochs < 1) throw ContractError("bad lambda/epochs");
  bool has_pos = false;
  bool has_neg = false;
  for (const int y : train.labels) (y > 0 ? has_pos : has_neg) = true;
  if (!has_pos || !has_neg) throw ContractError("train_svm needs both classes present");

  const int dim = train.dim;
  SvmModel model;
  model.lambda = lambda;
  model.feature_mean.assign(dim, 0.0);
  model.feature_scale.assign(dim, 1.0);
  for (std::size_t i = 0; i < n; ++i)
    for (int d = 0; d < dim; ++d) model.feature_mean[d] += train.sample(i)[d];
  for (double& m : model.feature_mean) m /= static_cast<double>(n);
  std::vector<double> var(dim, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (int d = 0; d < dim; ++d) {
      const double c = train.sample(i)[d] - model.feature_mean[d];
      var[d] += c * c;
    }
  for (int d = 0; d < dim; ++d) {
    const double sd = std::sqrt(var[d] / static_cast<double>(n));
    model.feature_scale[d] = sd > 1e-12 ? sd : 1.0;
  }

  // standardized copy, SGD runs over this
  std::vector<double> xs(n * static_cast<std::size_t>(dim));
  for (std::size_t i = 0; i < n; ++i)
    for (int d = 0; d < dim; ++d)
      xs[i * dim + d] =
          (train.sample(i)[d] - model.feature_mean[d]) / model.feature_scale[d];

  std::vector<double> w(dim, 0.0);
  double b = 0.0;
  // iterate averaging with weight t; early noisy iterates barely count
  std::vector<double> w_sum(dim, 0.0);
  double b_sum = 0.0;
  double weight_sum = 0.0;
  long steps = 0;
  // schedule offset keeps the first steps <= 1/(lambda+1); without it the
  // unregularized bias takes a 1/lambda jump on step one and the average
  // needs ~1/lambda epochs to recover
  const double t0 = std::ceil(1.0 / lambda);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng shuffle_rng = Rng(seed).fork("sgd");

  TrainResult result;
  auto averaged = [&]() {
    SvmModel avg = model;
    avg.w.assign(dim, 0.0);
    for (int d = 0; d < dim; ++d) avg.w[d] = w_sum[d] / weight_sum;
    avg.b = b_sum / weight_sum;
    return avg;
  };

  for (int epoch = 0; epoch < epochs; ++epoch) {
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t j = i + shuffle_rng.next_below(n - i);
      std::swap(order[i], order[j]);
    }
    for (const std::size_t i : order) {
      ++steps;
      const double eta = 1.0 / (lambda * (static_cast<double>(steps) + t0));
      const double* x = &xs[i * dim];
      double margin = b;
      for (int d = 0; d < dim; ++d) margin += w[d] * x[d];
      margin *= train.labels[i];
      const double keep = 1.0 - eta * lambda;
      if (margin < 1.0) {
        const double push = eta * train.labels[i];
        for (int d = 0; d < dim; ++d) w[d] = keep * w[d] + push * x[d];
        b += push;
      } else {
        for (int d = 0; d < dim; ++d) w[d] *= keep;
      }
      const double weight = static_cast<double>(steps);
      for (int d = 0; d < dim; ++d) w_sum[d] += weight * w[d];
      b_sum += weight * b;
      weight_sum += weight;
    }
    const SvmModel avg = averaged();
    // objective of the averaged iterate, on the already-standardized data
    double norm2 = 0.0;
    for (const double v : avg.w) norm2 += v * v;
    double hinge = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double s = avg.b;
      for (int d = 0; d < dim; ++d) s += avg.w[d] * xs[i * dim + d];
      hinge += std::max(0.0, 1.0 - train.labels[i] * s);
    }
    result.epoch_objectives.push_back(0.5 * lambda * norm2 + hinge / static_cast<double>(n));
  }

  SvmModel final_model = averaged();

  // score normalization anchors: 1st/99th percentile of training scores
  std::vector<double> scores(n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = final_model.b;
    for (int d = 0; d < dim; ++d) s += final_model.w[d] * xs[i * dim + d];
    scores[i] = s;
  }
  std::sort(scores.begin(), scores.end());
  auto percentile = [&](double p) {
    const double idx = p * static_cast<double>(n - 1);
    const std::size_t lo = static_cast<std::size_t>(idx);
    const std::size_t hi = std::min(lo + 1, n - 1);
    const double frac = idx - static_cast<double>(lo);
    return scores[lo] + frac * (scores[hi] - scores[lo]);
  };
  final_model.score_lo = percentile(0.01);
  final_model.score_hi = percentile(0.99);
  if (!(final_model.score_hi > final_model.score_lo)) {
    final_model.score_lo = scores.front();
    final_model.score_hi = scores.back();
    if (!(final_model.score_hi > final_model.score_lo))
      final_model.score_hi = final_model.score_lo + 1.0;
  }

  result.model = std::move(final_model);
  return result;
}

// =============================================================================
// Scoring and detection
// =============================================================================

/// Maps every pixel's feature vector to a clamped [0, 1] edge strength.
inline ImagePlane score_field(const PixelFeatureField& field, const SvmModel& model) {
  if (field.dim != model.dim())
    throw ContractError("feature dim " + std::to_string(field.dim) + " does not match model dim " +
                        std::to_string(model.dim()));
  ImagePlane out(field.height, field.width, 1);
  for (int y = 0; y < field.height; ++y)
    for (int x = 0; x < field.width; ++x)
      out.at(y, x) = static_cast<float>(model.mapped_score(model.raw_score(field.at(y, x))));
  return out;
}

/// Dual-resolution detection skeleton: scores the image at 1x and 2x via
/// `scorer`, downsamples the 2x map back, and averages. Exposed separately
/// so the averaging policy is testable with stub scorers.
template <typename Scorer>
ImagePlane detect_with(const ImagePlane& image, Scorer&& scorer) {
  const ImagePlane map1 = scorer(image);
  if (map1.height != image.height || map1.width != image.width || map1.channels != 1)
    throw ContractError("scorer must return a single-channel map at input dims");
  const ImagePlane doubled = resize_bilinear(image, image.height * 2, image.width * 2);
  const ImagePlane map2 = scorer(doubled);
  if (map2.height != doubled.height || map2.width != doubled.width || map2.channels != 1)
    throw ContractError("scorer must return a single-channel map at input dims");
  const ImagePlane map2_down = resize_bilinear(map2, image.height, image.width);

  ImagePlane out(image.height, image.width, 1);
  for (std::size_t i = 0; i < out.size(); ++i)
    out.data[i] = 0.5f * map1.data[i] + 0.5f * map2_down.data[i];
  return out;
}

/// Full detector: per-pixel features -> SVM scores at both resolutions,
/// averaged into one edge map at the original resolution.
inline ImagePlane detect(const ImagePlane& image, const NetSpec& net, const WeightBundle& weights,
                         const SvmModel& model) {
  if (model.taps.empty()) throw ContractError("model has no tap selection");
  int dim = 0;
  for (const auto& name : model.taps) dim += net.tap_channels(name);
  dim *= static_cast<int>(model.scales.size());
  if (dim != model.dim())
    throw ContractError("model dim does not match net taps; was the model trained on this net?");
  return detect_with(image, [&](const ImagePlane& at_res) {
    const PixelFeatureField field =
        per_pixel_features(at_res, net, weights, model.taps, model.scales, model.channel_mean);
    return score_field(field, model);
  });
}

// =============================================================================
// Model persistence (PXW1 records)
// =============================================================================

namespace detail {

inline TensorData vec_record(const std::vector<double>& v) {
  TensorData t;
  t.dims = {static_cast<uint32_t>(v.size())};
  t.values.assign(v.begin(), v.end());
  return t;
}

inline TensorData vecf_record(const std::vector<float>& v) {
  TensorData t;
  t.dims = {static_cast<uint32_t>(v.size())};
  t.values = v;
  return t;
}

}  // namespace detail

inline void save_model(const SvmModel& model, const std::filesystem::path& path) {
  WeightBundle bundle;
  bundle.add("w", detail::vec_record(model.w));
  bundle.add("b", detail::vec_record({model.b}));
  bundle.add("lambda", detail::vec_record({model.lambda}));
  bundle.add("mean", detail::vec_record(model.feature_mean));
  bundle.add("scale", detail::vec_record(model.feature_scale));
  bundle.add("score_lo_hi", detail::vec_record({model.score_lo, model.score_hi}));
  bundle.add("channel_mean", detail::vecf_record(model.channel_mean));
  bundle.add("scales", detail::vec_record(model.scales));
  std::string taps = "taps=";
  for (std::size_t i = 0; i < model.taps.size(); ++i)
    taps += (i ? "," : "") + model.taps[i];
  TensorData empty;
  empty.dims = {0};
  bundle.add(taps, empty);
  bundle.save(path);
}

inline SvmModel load_model(const std::filesystem::path& path) {
  const WeightBundle bundle = WeightBundle::load(path);
  SvmModel model;
  auto vec = [&](const std::string& name) {
    const TensorData& t = bundle.require(name);
    if (t.dims.size() != 1) throw FormatError("model record '" + name + "' must be 1-d");
    return std::vector<double>(t.values.begin(), t.values.end());
  };
  model.w = vec("w");
  model.b = vec("b").at(0);
  model.lambda = vec("lambda").at(0);
  model.feature_mean = vec("mean");
  model.feature_scale = vec("scale");
  const auto lo_hi = vec("score_lo_hi");
  if (lo_hi.size() != 2) throw FormatError("model record 'score_lo_hi' must have 2 entries");
  model.score_lo = lo_hi[0];
  model.score_hi = lo_hi[1];
  model.channel_mean.assign(bundle.require("channel_mean").values.begin(),
                            bundle.require("channel_mean").values.end());
  model.scales = vec("scales");
  for (const auto& [name, tensor] : bundle.records)
    if (name.rfind("taps=", 0) == 0) {
      std::string list = name.substr(5);
      std::size_t pos = 0;
      while (pos <= list.size()) {
        const std::size_t comma = list.find(',', pos);
        const std::string tap = list.substr(pos, comma == std::string::npos ? std::string::npos
                                                                            : comma - pos);
        if (!tap.empty()) model.taps.push_back(tap);
        if (comma == std::string::npos) break;
        pos = comma + 1;
      }
    }

  if (model.w.size() != model.feature_mean.size() || model.w.size() != model.feature_scale.size())
    throw FormatError("model records disagree on dimension");
  if (!(model.score_hi > model.score_lo)) throw FormatError("model score_lo_hi not increasing");
  for (const double s : model.feature_scale)
    if (!(s > 0.0)) throw FormatError("model feature_scale must be strictly positive");
  if (model.taps.empty()) throw FormatError("model has no taps record");
  return model;
}

}  // namespace ck
