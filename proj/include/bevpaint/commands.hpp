#pragma once

#include <string>
#include <vector>

#include "bevpaint/config.hpp"
#include "bevpaint/losses.hpp"

namespace bevpaint {

// Library entry points behind the CLI subcommands. They throw ConfigError /
// NumericError / ShapeError; the CLI maps those to exit codes 1 / 2 / 3.

// Generates datagen.count scene directories plus manifest.json under
// cfg.out_dir (or `out_override` when non-empty).
void cmd_datagen(const RunConfig& cfg, const std::string& out_override = "");

struct TrainSummary {
  std::vector<StepLosses> trace;
  std::string checkpoint_path;
  std::string log_path;
};

TrainSummary cmd_train(const RunConfig& cfg);

struct EvalSummary {
  MetricsReport report;
  std::string metrics_path;
};

EvalSummary cmd_eval(const RunConfig& cfg, const std::string& checkpoint_path);

// Warps + composites the given camera images onto the ground plane and writes
// <out>/bev_ipm.ppm and <out>/bev_ipm_mask.pgm.
void cmd_ipm(const std::string& rig_path, const std::vector<std::string>& image_paths,
             const BevGridSpec& spec, const std::string& out_dir);

// Full colorization pipeline: point cloud + cuboids + images -> painted BEV.
// Writes bev_appearance.ppm, mask.pgm, and cuboid_colors.json to out_dir.
void cmd_colorize(const std::string& points_path, const std::string& cuboids_path,
                  const std::vector<std::string>& image_paths, const std::string& rig_path,
                  const BevGridSpec& spec, const std::string& out_dir);

}  // namespace bevpaint
