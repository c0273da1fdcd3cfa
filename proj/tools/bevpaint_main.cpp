#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "bevpaint/commands.hpp"
#include "bevpaint/common.hpp"

using namespace bevpaint;

namespace {

RunConfig load_config_or_default(const std::string& path) {
  if (path.empty()) return RunConfig::from_text("");
  return RunConfig::load(path);
}

}  // namespace

int main(int argc, char** argv) {
  set_worker_count(worker_count_from_env());

  CLI::App app{"bevpaint: appearance + occupancy BEV estimation from surround cameras"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  std::string checkpoint_path;
  std::string rig_path;
  std::string points_path;
  std::string cuboids_path;
  std::vector<std::string> image_paths;
  long long seed_override = -1;
  bool occupancy_only = false;

  auto* datagen = app.add_subcommand("datagen", "generate a synthetic scene dataset");
  datagen->add_option("--config", config_path, "run configuration file");
  datagen->add_option("--out", out_dir, "output dataset directory (overrides paths.out)");
  datagen->add_option("--seed", seed_override, "override datagen seed");

  auto* train = app.add_subcommand("train", "train the dual-head model");
  train->add_option("--config", config_path, "run configuration file")->required();
  train->add_option("--out", out_dir, "output directory (overrides paths.out)");
  train->add_option("--seed", seed_override, "override training seed");
  train->add_flag("--occupancy-only", occupancy_only, "disable the appearance head (ablation arm)");

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on the test split");
  eval->add_option("--config", config_path, "run configuration file")->required();
  eval->add_option("--checkpoint", checkpoint_path, "checkpoint to evaluate")->required();
  eval->add_option("--out", out_dir, "output directory (overrides paths.out)");

  auto* ipm = app.add_subcommand("ipm", "homography warp of camera images onto the ground plane");
  ipm->add_option("--config", config_path, "run configuration file (grid settings)");
  ipm->add_option("--rig", rig_path, "rig JSON file")->required();
  ipm->add_option("--out", out_dir, "output directory")->required();
  ipm->add_option("images", image_paths, "camera images in rig order")->required();

  auto* colorize = app.add_subcommand("colorize", "paint a BEV from a point cloud and cuboids");
  colorize->add_option("--config", config_path, "run configuration file (grid settings)");
  colorize->add_option("--rig", rig_path, "rig JSON file")->required();
  colorize->add_option("--points", points_path, "point cloud text file (x y z per line)")->required();
  colorize->add_option("--cuboids", cuboids_path, "cuboid JSON file (optional)");
  colorize->add_option("--out", out_dir, "output directory")->required();
  colorize->add_option("images", image_paths, "camera images in rig order")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (datagen->parsed()) {
      RunConfig cfg = load_config_or_default(config_path);
      if (seed_override >= 0) cfg.datagen.seed = static_cast<std::uint64_t>(seed_override);
      cmd_datagen(cfg, out_dir);
    } else if (train->parsed()) {
      RunConfig cfg = RunConfig::load(config_path);
      if (!out_dir.empty()) cfg.out_dir = out_dir;
      if (seed_override >= 0) cfg.train.seed = static_cast<std::uint64_t>(seed_override);
      if (occupancy_only) cfg.train.occupancy_only = true;
      const TrainSummary s = cmd_train(cfg);
      std::printf("trained %zu steps, checkpoint: %s\n", s.trace.size(), s.checkpoint_path.c_str());
    } else if (eval->parsed()) {
      RunConfig cfg = RunConfig::load(config_path);
      if (!out_dir.empty()) cfg.out_dir = out_dir;
      const EvalSummary s = cmd_eval(cfg, checkpoint_path);
      for (std::size_t i = 0; i < s.report.class_names.size(); ++i) {
        std::printf("iou %-8s %.4f\n", s.report.class_names[i].c_str(), s.report.iou[i]);
      }
      if (s.report.appearance_l1 >= 0) std::printf("appearance L1 %.4f\n", s.report.appearance_l1);
      std::printf("metrics: %s\n", s.metrics_path.c_str());
    } else if (ipm->parsed()) {
      RunConfig cfg = load_config_or_default(config_path);
      cmd_ipm(rig_path, image_paths, cfg.model.grid, out_dir);
    } else if (colorize->parsed()) {
      RunConfig cfg = load_config_or_default(config_path);
      cmd_colorize(points_path, cuboids_path, image_paths, rig_path, cfg.model.grid, out_dir);
    }
  } catch (const ShapeError& e) {
    std::fprintf(stderr, "shape error: %s\n", e.what());
    return 3;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numeric error: %s\n", e.what());
    return 2;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
