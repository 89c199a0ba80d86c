/**
 * @file contourkit.cpp
 * @brief Command-line front end: synth, train, detect, eval, ablate, plus
 *        the make-weights and features utilities.
 *
 * Exit codes: 0 success, 2 contract/usage errors, 3 file-format errors.
 */
#include <contourkit/pipeline.hpp>
#include <contourkit/synth.hpp>

#include <CLI11.hpp>

#include <cstdio>
#include <string>
#include <vector>

namespace {

void add_common_options(CLI::App* cmd, ck::RunConfig& config) {
  cmd->add_option("--net", config.net_path, "net spec file (plain-text layer list)");
  cmd->add_option("--weights", config.weights_path, "PXW1 weight bundle");
  cmd->add_option("--model", config.model_path, "SVM model file");
  cmd->add_option("--taps", config.taps, "tap selection (default: every tap in the net)");
  cmd->add_option("--scales", config.scales, "pyramid scales for feature extraction");
  cmd->add_option("--lambda", config.lambda, "SVM regularization strength")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--epochs", config.epochs, "SGD epochs")->check(CLI::PositiveNumber);
  cmd->add_option("--pos-cap", config.pos_cap, "max positive samples per image")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--neg-ratio", config.neg_ratio, "negatives per positive")
      ->check(CLI::NonNegativeNumber);
  cmd->add_option("--nms-sigma", config.nms_sigma, "orientation smoothing sigma")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--tolerance", config.tolerance,
                  "matching tolerance as a fraction of the image diagonal")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--thresholds", config.thresholds, "threshold count for the PR sweep")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--seed", config.seed, "root seed; every random draw derives from it")
      ->required();
  cmd->add_option("--jobs", config.jobs, "worker threads (output is identical for any value)")
      ->check(CLI::PositiveNumber);
  cmd->add_flag(
      "--exact-matcher",
      [&config](std::int64_t count) {
        if (count > 0) config.matcher = ck::Matcher::exact;
      },
      "use the exact assignment matcher instead of the greedy default");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"contour detection toolkit: per-pixel conv-net features, a "
               "linear SVM edge classifier, and the boundary benchmark"};
  app.require_subcommand(1);
  app.set_config("--config", "",
                 "plain-text key=value config file with one [subcommand] section per command; "
                 "give it before the subcommand, flags override it");

  ck::RunConfig config;

  // ---- synth ----------------------------------------------------------------
  ck::SynthOptions synth;
  auto* cmd_synth = app.add_subcommand("synth", "generate a synthetic contour dataset");
  cmd_synth->configurable();
  cmd_synth->add_option("--out", synth.out_dir, "dataset root to create")->required();
  cmd_synth->add_option("--n-train", synth.n_train, "training images")->required();
  cmd_synth->add_option("--n-test", synth.n_test, "test images")->required();
  cmd_synth->add_option("--n-val", synth.n_val, "validation images (default 0)");
  cmd_synth->add_option("--size", synth.image_size, "square image size (>= 16)")->required();
  cmd_synth->add_option("--seed", synth.seed, "root seed")->required();

  // ---- train ----------------------------------------------------------------
  auto* cmd_train = app.add_subcommand("train", "train the SVM edge classifier");
  cmd_train->configurable();
  cmd_train->add_option("--dataset", config.dataset, "dataset root")->required();
  add_common_options(cmd_train, config);

  // ---- detect ---------------------------------------------------------------
  std::vector<std::string> detect_images;
  std::string detect_out;
  auto* cmd_detect = app.add_subcommand("detect", "write edge maps for images");
  cmd_detect->configurable();
  cmd_detect->add_option("images", detect_images, "input .ppm images")->required();
  cmd_detect->add_option("--out", detect_out, "output directory for edge maps")->required();
  bool no_nms = false;
  cmd_detect->add_flag("--no-nms", no_nms, "skip non-maximal suppression (debug)");
  add_common_options(cmd_detect, config);

  // ---- eval -----------------------------------------------------------------
  std::string eval_det, eval_gt, eval_out;
  auto* cmd_eval = app.add_subcommand("eval", "run the boundary benchmark");
  cmd_eval->configurable();
  cmd_eval->add_option("--det", eval_det, "directory of detected edge maps")->required();
  cmd_eval->add_option("--gt", eval_gt, "ground-truth tree (gt/<id>/<k>.pgm)")->required();
  cmd_eval->add_option("--out", eval_out, "directory for pr.tsv and summary.tsv")->required();
  add_common_options(cmd_eval, config);

  // ---- ablate ---------------------------------------------------------------
  std::string ablate_out;
  auto* cmd_ablate = app.add_subcommand(
      "ablate", "train/evaluate one detector per tap plus the combination");
  cmd_ablate->configurable();
  cmd_ablate->add_option("--dataset", config.dataset, "dataset root")->required();
  cmd_ablate->add_option("--out", ablate_out, "directory for table.tsv")->required();
  add_common_options(cmd_ablate, config);

  // ---- make-weights ---------------------------------------------------------
  std::string weights_kind = "filterbank";
  std::string weights_out;
  auto* cmd_weights = app.add_subcommand("make-weights", "generate a PXW1 weight bundle");
  cmd_weights->add_option("--net", config.net_path, "net spec file")->required();
  cmd_weights->add_option("--out", weights_out, "bundle file to write")->required();
  cmd_weights->add_option("--kind", weights_kind, "filterbank | random")
      ->check(CLI::IsMember({"filterbank", "random"}));
  cmd_weights->add_option("--seed", config.seed, "root seed")->required();

  // ---- features -------------------------------------------------------------
  std::string features_image, features_out;
  auto* cmd_features =
      app.add_subcommand("features", "export per-pixel features as a PXF1 tensor");
  cmd_features->add_option("--image", features_image, "input .ppm image")->required();
  cmd_features->add_option("--out", features_out, "tensor file to write")->required();
  add_common_options(cmd_features, config);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;  // usage problems are contract errors
  }

  try {
    if (cmd_synth->parsed()) {
      ck::generate_dataset(synth);
      std::printf("synth: wrote %d train / %d val / %d test images under %s\n", synth.n_train,
                  synth.n_val, synth.n_test, synth.out_dir.string().c_str());
    } else if (cmd_train->parsed()) {
      const ck::TrainOutput out = ck::train_pipeline(config);
      std::printf("train: %zu samples from %d images (%d skipped), final objective %.6f\n",
                  out.sample_count, out.images_used, out.images_skipped,
                  out.epoch_objectives.back());
      std::printf("train: model written to %s\n", config.model_path.string().c_str());
    } else if (cmd_detect->parsed()) {
      config.nms = !no_nms;
      std::vector<ck::fs::path> paths(detect_images.begin(), detect_images.end());
      ck::detect_pipeline(config, paths, detect_out);
      std::printf("detect: wrote %zu edge maps to %s\n", paths.size(), detect_out.c_str());
    } else if (cmd_eval->parsed()) {
      const ck::BenchReport report = ck::eval_pipeline(config, eval_det, eval_gt, eval_out);
      std::printf("eval: ODS %.4f (t=%.2f)  OIS %.4f  AP %.4f\n", report.ods,
                  report.ods_threshold, report.ois, report.ap);
    } else if (cmd_ablate->parsed()) {
      const std::string table = ck::ablate_pipeline(config, ablate_out);
      std::fputs(table.c_str(), stdout);
    } else if (cmd_weights->parsed()) {
      const ck::NetSpec net = ck::NetSpec::load(config.net_path);
      const ck::WeightBundle bundle = weights_kind == "filterbank"
                                          ? ck::make_filter_bank_weights(net, config.seed)
                                          : ck::make_random_weights(net, config.seed);
      bundle.save(weights_out);
      std::printf("make-weights: wrote %s bundle to %s\n", weights_kind.c_str(),
                  weights_out.c_str());
    } else if (cmd_features->parsed()) {
      ck::dump_features(config, features_image, features_out);
      std::printf("features: wrote %s\n", features_out.c_str());
    }
  } catch (const ck::FormatError& e) {
    std::fprintf(stderr, "format error: %s\n", e.what());
    return 3;
  } catch (const ck::ContractError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
