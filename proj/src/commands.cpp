#include "bevpaint/commands.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "bevpaint/checkpoint.hpp"
#include "bevpaint/colorize.hpp"
#include "bevpaint/dataset.hpp"
#include "bevpaint/ipm.hpp"
#include "json.hpp"

namespace fs = std::filesystem;

namespace bevpaint {

namespace {

std::string scene_dir_name(std::int64_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "scene_%05lld", static_cast<long long>(index));
  return buf;
}

// Occupancy overlay for eval panels; later classes paint over earlier ones so
// vehicles stay visible on road.
Image8 occupancy_overlay(const Tensor<float>& probs, double threshold) {
  const std::int64_t S = probs.dim(0), gx = probs.dim(1), gy = probs.dim(2);
  const Rgb8 class_colors[] = {{110, 110, 110}, {220, 60, 50}, {235, 220, 130}};
  auto grid = Tensor<float>::zeros({3, gx, gy});
  const std::int64_t cells = gx * gy;
  for (std::int64_t s = 0; s < std::min<std::int64_t>(S, 3); ++s) {
    // paint order: road, lane, vehicle on top
    const std::int64_t order[] = {0, 2, 1};
    const std::int64_t cls = order[s];
    if (cls >= S) continue;
    const Rgb8 c = class_colors[cls];
    for (std::int64_t i = 0; i < cells; ++i) {
      if (probs.data()[cls * cells + i] > static_cast<float>(threshold)) {
        grid.data()[i] = static_cast<float>(c[0]) / 255.0f;
        grid.data()[cells + i] = static_cast<float>(c[1]) / 255.0f;
        grid.data()[2 * cells + i] = static_cast<float>(c[2]) / 255.0f;
      }
    }
  }
  return bev_tensor_to_image(grid);
}

Image8 hcat(const std::vector<Image8>& imgs, std::int64_t gap = 2) {
  std::int64_t w = 0, h = 0;
  for (const auto& im : imgs) {
    w += im.width;
    h = std::max(h, im.height);
  }
  w += gap * static_cast<std::int64_t>(imgs.size() - 1);
  Image8 out = Image8::filled(w, h, {30, 30, 30});
  std::int64_t x0 = 0;
  for (const auto& im : imgs) {
    for (std::int64_t y = 0; y < im.height; ++y) {
      for (std::int64_t x = 0; x < im.width; ++x) out.set(x0 + x, y, im.at(x, y));
    }
    x0 += im.width + gap;
  }
  return out;
}

}  // namespace

void cmd_datagen(const RunConfig& cfg, const std::string& out_override) {
  const std::string root = out_override.empty() ? cfg.out_dir : out_override;
  if (root.empty()) throw ConfigError("datagen: no output directory configured (paths.out)");
  std::error_code ec;
  fs::create_directories(root, ec);
  if (ec) throw ConfigError("datagen: cannot create output directory " + root + ": " + ec.message());

  const CameraRig rig = cfg.build_rig();
  DatasetManifest manifest;
  manifest.config_hash = cfg.fingerprint();

  Rng seed_rng(cfg.datagen.seed);
  const std::int64_t count = cfg.datagen.count;
  const auto train_count = static_cast<std::int64_t>(std::llround(cfg.datagen.split * static_cast<double>(count)));
  for (std::int64_t i = 0; i < count; ++i) {
    const std::uint64_t scene_seed = seed_rng.next_u64();
    manifest.seeds.push_back(scene_seed);
    const Scene scene = sample_scene(scene_seed, cfg.scene);
    const std::string name = scene_dir_name(i);
    write_scene_dir(root + "/" + name, scene, rig, cfg.model.grid);
    if (i < train_count) {
      manifest.train_entries.push_back(name);
    } else {
      manifest.test_entries.push_back(name);
    }
  }
  save_manifest(manifest, root + "/manifest.json");
}

TrainSummary cmd_train(const RunConfig& cfg) {
  if (cfg.dataset_dir.empty()) throw ConfigError("train: no dataset directory configured (paths.dataset)");
  if (cfg.out_dir.empty()) throw ConfigError("train: no output directory configured (paths.out)");
  if (!fs::exists(cfg.dataset_dir + "/manifest.json")) {
    throw ConfigError("train: dataset manifest not found under " + cfg.dataset_dir);
  }
  fs::create_directories(cfg.out_dir);

  const DatasetManifest manifest = load_manifest(cfg.dataset_dir + "/manifest.json");
  Dataset data(cfg.dataset_dir, manifest.train_entries);

  ModelConfig mc = cfg.model;
  if (cfg.train.occupancy_only) {
    mc.appearance_head_enabled = false;
    mc.lambda_app = 0.0;
  }
  Rng init_rng(cfg.train.seed);
  Model<float> model(mc, data.rig(), init_rng);

  AdamState<float> adam;
  adam.lr = cfg.train.lr;
  adam.reset(model.parameters());

  TrainSummary summary;
  summary.checkpoint_path = cfg.out_dir + "/checkpoint.bevp";
  summary.log_path = cfg.out_dir + "/train_log.jsonl";
  std::ofstream log(summary.log_path);
  if (!log) throw ConfigError("train: cannot write " + summary.log_path);

  // Epochwise shuffling; batches wrap across epoch boundaries.
  Rng order_rng(cfg.train.seed ^ 0x5851f42d4c957f2dull);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = order.size();  // forces a shuffle on first use
  auto next_index = [&]() {
    if (cursor >= order.size()) {
      for (std::size_t i = order.size(); i > 1; --i) {
        const auto j = static_cast<std::size_t>(order_rng.uniform_int(0, static_cast<std::int64_t>(i) - 1));
        std::swap(order[i - 1], order[j]);
      }
      cursor = 0;
    }
    return order[cursor++];
  };

  const auto t0 = std::chrono::steady_clock::now();
  for (std::int64_t step = 0; step < cfg.train.steps; ++step) {
    std::vector<std::size_t> indices;
    indices.reserve(static_cast<std::size_t>(cfg.train.batch_size));
    for (std::int64_t b = 0; b < cfg.train.batch_size; ++b) indices.push_back(next_index());
    const SceneBatch<float> batch = data.make_batch(indices);

    StepLosses losses;
    try {
      losses = model.train_step(batch, adam);
    } catch (const NumericError&) {
      // Leave the last periodic checkpoint in place and report the abort.
      log.flush();
      throw;
    }
    summary.trace.push_back(losses);

    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    nlohmann::json line;
    line["step"] = step;
    line["loss_occ"] = losses.occ;
    line["loss_app"] = losses.app;
    line["loss_total"] = losses.total;
    line["wallclock"] = wall;
    log << line.dump() << "\n";
    log.flush();

    if (cfg.train.checkpoint_every > 0 && (step + 1) % cfg.train.checkpoint_every == 0) {
      save_checkpoint(model.parameters(), summary.checkpoint_path);
    }
  }
  save_checkpoint(model.parameters(), summary.checkpoint_path);
  return summary;
}

EvalSummary cmd_eval(const RunConfig& cfg, const std::string& checkpoint_path) {
  if (cfg.dataset_dir.empty()) throw ConfigError("eval: no dataset directory configured (paths.dataset)");
  if (cfg.out_dir.empty()) throw ConfigError("eval: no output directory configured (paths.out)");
  if (!fs::exists(cfg.dataset_dir + "/manifest.json")) {
    throw ConfigError("eval: dataset manifest not found under " + cfg.dataset_dir);
  }
  fs::create_directories(cfg.out_dir);

  const DatasetManifest manifest = load_manifest(cfg.dataset_dir + "/manifest.json");
  Dataset data(cfg.dataset_dir, manifest.test_entries);

  ModelConfig mc = cfg.model;
  if (cfg.train.occupancy_only) {
    mc.appearance_head_enabled = false;
    mc.lambda_app = 0.0;
  }
  Rng init_rng(cfg.train.seed);
  Model<float> model(mc, data.rig(), init_rng);
  load_checkpoint(model.parameters(), checkpoint_path);

  const std::int64_t cells = mc.grid.cells();
  IouAccumulator iou(static_cast<std::size_t>(mc.num_classes()));
  double l1_sum = 0.0;
  std::int64_t l1_count = 0;
  nlohmann::json centroids = nlohmann::json::object();

  for (std::size_t i = 0; i < data.size(); ++i) {
    const SceneBatch<float> batch = data.make_batch({i});
    const ForwardResult<float> fwd = model.forward(batch);

    auto probs = Tensor<float>::zeros({mc.num_classes(), mc.grid.grid_x, mc.grid.grid_y});
    {
      const float* z = fwd.occ_logits.data();
      for (std::int64_t e = 0; e < probs.numel(); ++e) {
        probs.data()[e] = 1.0f / (1.0f + std::exp(-z[e]));
      }
    }
    iou.add(probs.data(), batch.occupancy_target.data(), cells);

    Tensor<float> pred_app;
    if (mc.appearance_head_enabled) {
      pred_app = Tensor<float>::zeros({3, mc.grid.grid_x, mc.grid.grid_y});
      std::copy(fwd.appearance.data(), fwd.appearance.data() + 3 * cells, pred_app.data());
      const float* a = pred_app.data();
      const float* t = batch.appearance_target.data();
      for (std::int64_t e = 0; e < 3 * cells; ++e) l1_sum += std::abs(static_cast<double>(a[e]) - t[e]);
      l1_count += 3 * cells;
    } else {
      pred_app = Tensor<float>::zeros({3, mc.grid.grid_x, mc.grid.grid_y});
    }

    // Vehicle centroids from the thresholded vehicle plane.
    std::vector<std::uint8_t> veh_mask(static_cast<std::size_t>(cells), 0);
    const std::int64_t veh_class = 1;
    for (std::int64_t e = 0; e < cells; ++e) {
      veh_mask[static_cast<std::size_t>(e)] = probs.data()[veh_class * cells + e] > 0.5f ? 1 : 0;
    }
    nlohmann::json clist = nlohmann::json::array();
    for (const auto& c : vehicle_centroids(veh_mask, mc.grid)) {
      clist.push_back({{"x", c.x}, {"y", c.y}, {"longitudinal_distance", c.longitudinal_distance},
                       {"cells", c.cells}});
    }
    const std::string name = data.entry(i).name;
    centroids[name] = std::move(clist);

    // Panel: occupancy overlay | predicted appearance | ground-truth appearance.
    auto gt_app = Tensor<float>::zeros({3, mc.grid.grid_x, mc.grid.grid_y});
    std::copy(batch.appearance_target.data(), batch.appearance_target.data() + 3 * cells, gt_app.data());
    const Image8 panel = hcat({occupancy_overlay(probs, 0.5), bev_tensor_to_image(pred_app),
                               bev_tensor_to_image(gt_app)});
    save_ppm(panel, cfg.out_dir + "/panel_" + name + ".ppm");
  }

  EvalSummary summary;
  summary.report.class_names = mc.classes;
  summary.report.iou = iou.result();
  summary.report.appearance_l1 = mc.appearance_head_enabled && l1_count > 0
                                     ? l1_sum / static_cast<double>(l1_count)
                                     : -1.0;
  summary.report.sample_count = static_cast<std::int64_t>(data.size());
  summary.report.config_fingerprint = cfg.fingerprint();
  summary.metrics_path = cfg.out_dir + "/metrics.json";
  {
    std::ofstream out(summary.metrics_path);
    if (!out) throw ConfigError("eval: cannot write " + summary.metrics_path);
    out << metrics_report_to_json(summary.report) << "\n";
  }
  {
    std::ofstream out(cfg.out_dir + "/centroids.json");
    if (!out) throw ConfigError("eval: cannot write centroids.json");
    out << centroids.dump(2) << "\n";
  }
  return summary;
}

void cmd_ipm(const std::string& rig_path, const std::vector<std::string>& image_paths,
             const BevGridSpec& spec, const std::string& out_dir) {
  const CameraRig rig = load_rig_json(rig_path);
  if (image_paths.size() != rig.size()) {
    throw ConfigError("ipm: " + std::to_string(image_paths.size()) + " images for a rig of " +
                      std::to_string(rig.size()) + " cameras");
  }
  std::vector<Tensor<float>> images;
  for (const auto& p : image_paths) images.push_back(image_to_tensor(load_ppm(p)));
  const WarpedBev composite = ipm_composite(images, rig, spec);
  fs::create_directories(out_dir);
  save_ppm(bev_tensor_to_image(composite.appearance), out_dir + "/bev_ipm.ppm");
  Gray8 mask;
  mask.width = spec.grid_y;
  mask.height = spec.grid_x;
  mask.pixels.assign(static_cast<std::size_t>(spec.cells()), 0);
  for (std::int64_t i = 0; i < spec.grid_x; ++i) {
    for (std::int64_t j = 0; j < spec.grid_y; ++j) {
      const std::int64_t row = spec.grid_x - 1 - i, col = spec.grid_y - 1 - j;
      mask.pixels[static_cast<std::size_t>(row * spec.grid_y + col)] =
          composite.valid[static_cast<std::size_t>(i * spec.grid_y + j)] ? 255 : 0;
    }
  }
  save_pgm(mask, out_dir + "/bev_ipm_mask.pgm");
}

void cmd_colorize(const std::string& points_path, const std::string& cuboids_path,
                  const std::vector<std::string>& image_paths, const std::string& rig_path,
                  const BevGridSpec& spec, const std::string& out_dir) {
  const CameraRig rig = load_rig_json(rig_path);
  if (image_paths.size() != rig.size()) {
    throw ConfigError("colorize: " + std::to_string(image_paths.size()) + " images for a rig of " +
                      std::to_string(rig.size()) + " cameras");
  }
  std::vector<Image8> images;
  for (const auto& p : image_paths) images.push_back(load_ppm(p));
  const std::vector<Vec3> points = load_point_cloud_txt(points_path);
  std::vector<Cuboid> cuboids;
  if (!cuboids_path.empty()) cuboids = load_cuboids_json(cuboids_path);

  const std::vector<ColoredPoint> colored = colorize_points(points, images, rig);
  nlohmann::json jcolors = nlohmann::json::array();
  for (auto& c : cuboids) {
    c.color = cuboid_color(c, images, rig);
    jcolors.push_back({c.color[0], c.color[1], c.color[2]});
  }
  const PaintedBev painted = paint_bev(colored, cuboids, spec);

  fs::create_directories(out_dir);
  save_ppm(bev_tensor_to_image(painted.appearance), out_dir + "/bev_appearance.ppm");
  Gray8 mask;
  mask.width = spec.grid_y;
  mask.height = spec.grid_x;
  mask.pixels.assign(static_cast<std::size_t>(spec.cells()), 0);
  for (std::int64_t i = 0; i < spec.grid_x; ++i) {
    for (std::int64_t j = 0; j < spec.grid_y; ++j) {
      const std::int64_t row = spec.grid_x - 1 - i, col = spec.grid_y - 1 - j;
      mask.pixels[static_cast<std::size_t>(row * spec.grid_y + col)] =
          painted.valid[static_cast<std::size_t>(i * spec.grid_y + j)] ? 255 : 0;
    }
  }
  save_pgm(mask, out_dir + "/mask.pgm");
  std::ofstream out(out_dir + "/cuboid_colors.json");
  if (!out) throw ConfigError("colorize: cannot write cuboid_colors.json");
  out << jcolors.dump(2) << "\n";
}

}  // namespace bevpaint
