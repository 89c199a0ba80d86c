/**
 * @file pipeline.hpp
 * @brief End-to-end orchestration: dataset layout, training, detection,
 *        evaluation, and the per-layer ablation harness.
 *
 * Dataset layout on disk:
 *
 *   <root>/<split>/images/<id>.ppm
 *   <root>/<split>/gt/<id>/<k>.pgm     one binary map per annotator
 *
 * All stages are pure functions of (config, dataset, seed): per-image work
 * is parallelizable but every byte written is independent of the job count.
 */
#pragma once

#include <contourkit/bench.hpp>
#include <contourkit/densefeat.hpp>
#include <contourkit/errors.hpp>
#include <contourkit/image.hpp>
#include <contourkit/net.hpp>
#include <contourkit/nms.hpp>
#include <contourkit/parallel.hpp>
#include <contourkit/rng.hpp>
#include <contourkit/svm.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

namespace ck {

namespace fs = std::filesystem;

// =============================================================================
// Run configuration
// =============================================================================

struct RunConfig {
  fs::path dataset;       // dataset root (train/val/test splits)
  fs::path net_path;      // plain-text net spec
  fs::path weights_path;  // PXW1 bundle
  fs::path model_path;    // SVM model file (output of train, input elsewhere)

  std::vector<std::string> taps;  // empty selects every tap in the net
  std::vector<double> scales{1.0};

  double lambda = 1e-4;
  int epochs = 30;
  int pos_cap = 200;
  double neg_ratio = 2.0;

  double nms_sigma = 2.0;
  bool nms = true;

  double tolerance = 0.0075;  // fraction of the image diagonal
  int thresholds = 99;
  Matcher matcher = Matcher::greedy;

  uint64_t seed = 1;
  int jobs = 1;
};

// =============================================================================
// Dataset access
// =============================================================================

/// Sorted stems of the .ppm files in a directory.
inline std::vector<std::string> list_image_ids(const fs::path& images_dir) {
  if (!fs::is_directory(images_dir))
    throw ContractError("not a directory: " + images_dir.string());
  std::vector<std::string> ids;
  for (const auto& entry : fs::directory_iterator(images_dir))
    if (entry.is_regular_file() && entry.path().extension() == ".ppm")
      ids.push_back(entry.path().stem().string());
  std::sort(ids.begin(), ids.end());
  return ids;
}

/// Annotator maps for one image, binarized at 0.5, sorted by file name.
inline std::vector<ImagePlane> load_annotators(const fs::path& gt_root, const std::string& id) {
  const fs::path dir = gt_root / id;
  if (!fs::is_directory(dir)) throw ContractError("missing ground truth for image " + id);
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".pgm") files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw ContractError("no annotator maps for image " + id);
  std::vector<ImagePlane> maps;
  maps.reserve(files.size());
  for (const auto& file : files) {
    ImagePlane map = read_image(file);
    if (map.channels != 1) throw FormatError(file.string() + ": annotator maps must be P5");
    for (auto& v : map.data) v = v > 0.5f ? 1.0f : 0.0f;
    maps.push_back(std::move(map));
  }
  return maps;
}

inline GroundTruthSet load_ground_truth(const fs::path& gt_root) {
  if (!fs::is_directory(gt_root)) throw ContractError("not a directory: " + gt_root.string());
  std::vector<std::string> ids;
  for (const auto& entry : fs::directory_iterator(gt_root))
    if (entry.is_directory()) ids.push_back(entry.path().filename().string());
  std::sort(ids.begin(), ids.end());
  GroundTruthSet set;
  for (const auto& id : ids) set.push_back({id, load_annotators(gt_root, id)});
  return set;
}

// =============================================================================
// Training
// =============================================================================

struct TrainOutput {
  SvmModel model;
  std::vector<double> epoch_objectives;
  int images_used = 0;
  int images_skipped = 0;
  std::size_t sample_count = 0;
};

/// Core training flow over the train split: dataset channel mean, per-image
/// feature fields and pixel sampling (parallel, merged in id order), one
/// seeded SGD run.
inline TrainOutput train_detector(const RunConfig& config, const NetSpec& net,
                                  const WeightBundle& weights,
                                  const std::vector<std::string>& taps) {
  const fs::path images_dir = config.dataset / "train" / "images";
  const fs::path gt_dir = config.dataset / "train" / "gt";
  const std::vector<std::string> ids = list_image_ids(images_dir);
  if (ids.empty()) throw ContractError("no training images under " + images_dir.string());

  // dataset per-channel mean, folded in id order
  const int channels = net.input_channels;
  std::vector<std::array<double, 2>> sums(ids.size() * channels,
                                          std::array<double, 2>{0.0, 0.0});  // (sum, count)
  parallel_for(ids.size(), config.jobs, [&](std::size_t i) {
    const ImagePlane image = read_image(images_dir / (ids[i] + ".ppm"));
    if (image.channels != channels)
      throw ContractError("image " + ids[i] + " channel count does not match net");
    for (int c = 0; c < channels; ++c) {
      double s = 0.0;
      for (int y = 0; y < image.height; ++y)
        for (int x = 0; x < image.width; ++x) s += image.at(y, x, c);
      sums[i * channels + c] = {s, static_cast<double>(image.height) * image.width};
    }
  });
  std::vector<float> channel_mean(channels, 0.0f);
  for (int c = 0; c < channels; ++c) {
    double s = 0.0;
    double n = 0.0;
    for (std::size_t i = 0; i < ids.size(); ++i) {
      s += sums[i * channels + c][0];
      n += sums[i * channels + c][1];
    }
    channel_mean[c] = static_cast<float>(s / n);
  }

  // per-image feature extraction and pixel sampling
  const Rng root(config.seed);
  std::vector<std::optional<TrainSet>> slots(ids.size());
  parallel_for(ids.size(), config.jobs, [&](std::size_t i) {
    const ImagePlane image = read_image(images_dir / (ids[i] + ".ppm"));
    const PixelFeatureField field =
        per_pixel_features(image, net, weights, taps, config.scales, channel_mean);
    const auto annotators = load_annotators(gt_dir, ids[i]);
    Rng stream = root.fork("sample", static_cast<uint64_t>(i));
    slots[i] = sample_pixels(field, annotators, config.pos_cap, config.neg_ratio,
                             stream.next_u64(), ids[i]);
  });

  TrainOutput out;
  TrainSet merged;
  for (std::size_t i = 0; i < slots.size(); ++i) {
    if (!slots[i].has_value()) {
      ++out.images_skipped;
      continue;
    }
    ++out.images_used;
    merged.append(*slots[i]);
  }
  if (merged.count() < 2)
    throw ContractError("training produced fewer than two samples; is the ground truth empty?");

  TrainResult result = train_svm(merged, config.lambda, config.epochs, config.seed);
  result.model.taps = taps;
  result.model.channel_mean = channel_mean;
  result.model.scales = config.scales;

  out.model = std::move(result.model);
  out.epoch_objectives = std::move(result.epoch_objectives);
  out.sample_count = merged.count();
  return out;
}

/// Full train command: loads net/weights, trains, writes the model file and
/// a per-epoch objective log next to it (<model>.log).
inline TrainOutput train_pipeline(const RunConfig& config) {
  const NetSpec net = NetSpec::load(config.net_path);
  const WeightBundle weights = WeightBundle::load(config.weights_path);
  weights.validate_against(net);
  const std::vector<std::string> taps = config.taps.empty() ? net.tap_names() : config.taps;

  TrainOutput out = train_detector(config, net, weights, taps);
  if (!config.model_path.empty()) {
    if (config.model_path.has_parent_path())
      fs::create_directories(config.model_path.parent_path());
    save_model(out.model, config.model_path);
    std::string log = "epoch\tobjective\n";
    for (std::size_t e = 0; e < out.epoch_objectives.size(); ++e)
      log += std::to_string(e + 1) + "\t" + detail::fixed6(out.epoch_objectives[e]) + "\n";
    detail::write_file_bytes(config.model_path.string() + ".log", log);
  }
  return out;
}

// =============================================================================
// Detection
// =============================================================================

/// Dual-resolution detection plus optional NMS thinning.
inline ImagePlane detect_image(const ImagePlane& image, const NetSpec& net,
                               const WeightBundle& weights, const SvmModel& model,
                               double nms_sigma, bool nms_on) {
  ImagePlane map = detect(image, net, weights, model);
  if (nms_on) map = suppress(map, estimate_orientation(map, nms_sigma));
  return map;
}

/// Detects every image path into <out_dir>/<stem>.pgm (16-bit edge maps).
inline void detect_pipeline(const RunConfig& config, const std::vector<fs::path>& images,
                            const fs::path& out_dir) {
  if (images.empty()) throw ContractError("no images to detect");
  const NetSpec net = NetSpec::load(config.net_path);
  const WeightBundle weights = WeightBundle::load(config.weights_path);
  weights.validate_against(net);
  const SvmModel model = load_model(config.model_path);
  fs::create_directories(out_dir);

  parallel_for(images.size(), config.jobs, [&](std::size_t i) {
    const ImagePlane image = read_image(images[i]);
    const ImagePlane map =
        detect_image(image, net, weights, model, config.nms_sigma, config.nms);
    write_edge_map(map, out_dir / (images[i].stem().string() + ".pgm"));
  });
}

// =============================================================================
// Evaluation
// =============================================================================

/// Evaluates a directory of edge maps against a ground-truth tree and, when
/// out_dir is nonempty, writes pr.tsv and summary.tsv.
inline BenchReport eval_pipeline(const RunConfig& config, const fs::path& det_dir,
                                 const fs::path& gt_dir, const fs::path& out_dir) {
  if (!fs::is_directory(det_dir)) throw ContractError("not a directory: " + det_dir.string());
  std::vector<std::string> ids;
  for (const auto& entry : fs::directory_iterator(det_dir))
    if (entry.is_regular_file() && entry.path().extension() == ".pgm")
      ids.push_back(entry.path().stem().string());
  std::sort(ids.begin(), ids.end());
  if (ids.empty()) throw ContractError("no edge maps under " + det_dir.string());

  const std::vector<double> grid = threshold_grid(config.thresholds);
  std::vector<ImagePrTable> tables(ids.size());
  parallel_for(ids.size(), config.jobs, [&](std::size_t i) {
    const ImagePlane edge = read_image(det_dir / (ids[i] + ".pgm"));
    const auto annotators = load_annotators(gt_dir, ids[i]);
    const double tol = match_tolerance(edge.height, edge.width, config.tolerance);
    tables[i] = evaluate_image(edge, annotators, grid, tol, config.matcher, ids[i]);
  });

  const BenchReport report = summarize(tables);
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    detail::write_file_bytes(out_dir / "pr.tsv", emit_pr_tsv(report));
    detail::write_file_bytes(out_dir / "summary.tsv", emit_summary_tsv(report));
  }
  return report;
}

// =============================================================================
// Ablation harness
// =============================================================================

/// Trains and evaluates one detector per tap plus the all-taps combination,
/// then emits the 3-row summary table (written to <out_dir>/table.tsv).
inline std::string ablate_pipeline(const RunConfig& config, const fs::path& out_dir) {
  const NetSpec net = NetSpec::load(config.net_path);
  const WeightBundle weights = WeightBundle::load(config.weights_path);
  weights.validate_against(net);
  const std::vector<std::string> all_taps = net.tap_names();
  if (all_taps.size() < 2) throw ContractError("ablation needs a multi-tap net");

  std::vector<std::vector<std::string>> selections;
  std::vector<std::string> columns;
  for (const auto& tap : all_taps) {
    selections.push_back({tap});
    columns.push_back(tap);
  }
  selections.push_back(all_taps);
  columns.push_back(all_taps.front() + "-" + all_taps.back().substr(all_taps.back().size() - 1));

  const fs::path test_images = config.dataset / "test" / "images";
  const fs::path test_gt = config.dataset / "test" / "gt";
  const std::vector<std::string> ids = list_image_ids(test_images);
  if (ids.empty()) throw ContractError("no test images under " + test_images.string());
  const std::vector<double> grid = threshold_grid(config.thresholds);

  std::vector<double> ods_row, ois_row, ap_row;
  for (std::size_t col = 0; col < selections.size(); ++col) {
    RunConfig column_config = config;
    column_config.seed = Rng(config.seed).fork("ablate", col).next_u64();
    const TrainOutput trained = train_detector(column_config, net, weights, selections[col]);

    std::vector<ImagePrTable> tables(ids.size());
    parallel_for(ids.size(), config.jobs, [&](std::size_t i) {
      const ImagePlane image = read_image(test_images / (ids[i] + ".ppm"));
      const ImagePlane map =
          detect_image(image, net, weights, trained.model, config.nms_sigma, config.nms);
      const auto annotators = load_annotators(test_gt, ids[i]);
      const double tol = match_tolerance(map.height, map.width, config.tolerance);
      tables[i] = evaluate_image(map, annotators, grid, tol, config.matcher, ids[i]);
    });
    const BenchReport report = summarize(tables);
    ods_row.push_back(report.ods);
    ois_row.push_back(report.ois);
    ap_row.push_back(report.ap);
  }

  const std::string table = emit_layer_table(columns, ods_row, ois_row, ap_row);
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    detail::write_file_bytes(out_dir / "table.tsv", table);
  }
  return table;
}

// =============================================================================
// Feature export
// =============================================================================

/// Extracts per-pixel features for one image and writes them as a PXF1
/// tensor of dims (H, W, D). Uses the model's taps/scales/channel mean when
/// a model path is configured, the net defaults otherwise.
inline void dump_features(const RunConfig& config, const fs::path& image_path,
                          const fs::path& out_path) {
  const NetSpec net = NetSpec::load(config.net_path);
  const WeightBundle weights = WeightBundle::load(config.weights_path);
  weights.validate_against(net);
  const ImagePlane image = read_image(image_path);

  std::vector<std::string> taps = config.taps.empty() ? net.tap_names() : config.taps;
  std::vector<double> scales = config.scales;
  std::vector<float> channel_mean(net.input_channels, 0.0f);
  if (!config.model_path.empty()) {
    const SvmModel model = load_model(config.model_path);
    taps = model.taps;
    scales = model.scales;
    channel_mean = model.channel_mean;
  }

  const PixelFeatureField field =
      per_pixel_features(image, net, weights, taps, scales, channel_mean);
  ImagePlane carrier(field.height, field.width, field.dim);
  carrier.data = field.data;
  write_tensor(carrier, out_path);
}

}  // namespace ck
