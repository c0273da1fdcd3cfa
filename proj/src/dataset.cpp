#include "bevpaint/dataset.hpp"

#include <filesystem>
#include <fstream>

#include "json.hpp"

namespace fs = std::filesystem;

namespace bevpaint {

void save_manifest(const DatasetManifest& m, const std::string& path) {
  nlohmann::json j;
  j["seeds"] = m.seeds;
  j["config_hash"] = m.config_hash;
  j["train"] = m.train_entries;
  j["test"] = m.test_entries;
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write manifest: " + path);
  out << j.dump(2) << "\n";
}

DatasetManifest load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open manifest: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw ConfigError("manifest " + path + " is not valid JSON: " + e.what());
  }
  DatasetManifest m;
  m.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  m.config_hash = j.value("config_hash", "");
  m.train_entries = j.at("train").get<std::vector<std::string>>();
  m.test_entries = j.at("test").get<std::vector<std::string>>();
  return m;
}

void write_scene_dir(const std::string& dir, const Scene& scene, const CameraRig& rig,
                     const BevGridSpec& spec) {
  fs::create_directories(dir);
  for (std::size_t k = 0; k < rig.size(); ++k) {
    const Image8 img = render_camera_image(scene, rig.cameras[k].intrinsics, rig.cameras[k].extrinsics);
    save_ppm(img, dir + "/cam_" + std::to_string(k) + ".ppm");
  }
  save_rig_json(rig, dir + "/rig.json");
  const BevGroundTruth gt = render_bev_ground_truth(scene, spec);
  save_ppm(bev_tensor_to_image(gt.appearance_tensor()), dir + "/bev_appearance.ppm");
  save_occg(gt.occupancy, kNumClasses, gt.grid_x, gt.grid_y, dir + "/bev_occupancy.occg");
  save_scene_json(scene, dir + "/scene.json");
}

Dataset::Dataset(const std::string& root, const std::vector<std::string>& entry_names) {
  if (entry_names.empty()) throw ConfigError("dataset split is empty: " + root);
  bool have_rig = false;
  for (const auto& name : entry_names) {
    const std::string dir = root + "/" + name;
    if (!fs::exists(dir)) throw ConfigError("dataset entry missing on disk: " + dir);
    if (!have_rig) {
      rig_ = load_rig_json(dir + "/rig.json");
      have_rig = true;
    }
    DatasetEntry e;
    e.name = name;
    for (std::size_t k = 0; k < rig_.size(); ++k) {
      e.images.push_back(image_to_tensor(load_ppm(dir + "/cam_" + std::to_string(k) + ".ppm")));
    }
    std::int64_t classes = 0, gx = 0, gy = 0;
    const auto planes = load_occg(dir + "/bev_occupancy.occg", classes, gx, gy);
    e.occupancy = Tensor<float>::zeros({classes, gx, gy});
    for (std::size_t i = 0; i < planes.size(); ++i) e.occupancy.data()[i] = static_cast<float>(planes[i]);
    e.appearance = bev_image_to_tensor(load_ppm(dir + "/bev_appearance.ppm"));
    entries_.push_back(std::move(e));
  }
}

SceneBatch<float> Dataset::make_batch(const std::vector<std::size_t>& indices) const {
  if (indices.empty()) throw ConfigError("make_batch: empty index list");
  const auto& first = entries_.at(indices[0]);
  const std::int64_t N = static_cast<std::int64_t>(first.images.size());
  const std::int64_t H = first.images[0].dim(1), W = first.images[0].dim(2);
  const std::int64_t S = first.occupancy.dim(0);
  const std::int64_t gx = first.occupancy.dim(1), gy = first.occupancy.dim(2);
  const auto B = static_cast<std::int64_t>(indices.size());

  SceneBatch<float> batch;
  batch.batch = B;
  batch.cameras = N;
  batch.images = Tensor<float>::zeros({B * N, 3, H, W});
  batch.occupancy_target = Tensor<float>::zeros({B, S, gx, gy});
  batch.appearance_target = Tensor<float>::zeros({B, 3, gx, gy});
  for (std::int64_t b = 0; b < B; ++b) {
    const auto& e = entries_.at(indices[static_cast<std::size_t>(b)]);
    for (std::int64_t n = 0; n < N; ++n) {
      std::copy(e.images[static_cast<std::size_t>(n)].data(),
                e.images[static_cast<std::size_t>(n)].data() + 3 * H * W,
                batch.images.data() + (b * N + n) * 3 * H * W);
    }
    std::copy(e.occupancy.data(), e.occupancy.data() + S * gx * gy,
              batch.occupancy_target.data() + b * S * gx * gy);
    std::copy(e.appearance.data(), e.appearance.data() + 3 * gx * gy,
              batch.appearance_target.data() + b * 3 * gx * gy);
  }
  return batch;
}

}  // namespace bevpaint
