#pragma once

#include <string>
#include <vector>

#include "bevpaint/config.hpp"
#include "bevpaint/model.hpp"
#include "bevpaint/scene.hpp"

namespace bevpaint {

// On-disk layout: one directory per scene instance holding cam_{k}.ppm,
// rig.json, bev_appearance.ppm, bev_occupancy.occg, and scene.json, plus a
// top-level manifest.json carrying the seed list, config hash, and split.
struct DatasetManifest {
  std::vector<std::uint64_t> seeds;
  std::string config_hash;
  std::vector<std::string> train_entries;
  std::vector<std::string> test_entries;
};

void save_manifest(const DatasetManifest& m, const std::string& path);
DatasetManifest load_manifest(const std::string& path);

void write_scene_dir(const std::string& dir, const Scene& scene, const CameraRig& rig,
                     const BevGridSpec& spec);

// One fully-loaded scene instance.
struct DatasetEntry {
  std::string name;
  std::vector<Tensor<float>> images;   // N x (3 x H x W)
  Tensor<float> occupancy;             // |S| x X x Y
  Tensor<float> appearance;            // 3 x X x Y
};

class Dataset {
 public:
  // Loads every entry of the requested split into memory.
  Dataset(const std::string& root, const std::vector<std::string>& entry_names);

  std::size_t size() const { return entries_.size(); }
  const DatasetEntry& entry(std::size_t i) const { return entries_[i]; }
  const CameraRig& rig() const { return rig_; }

  // Stacks the given entries into one batch with images at index b*N+n.
  SceneBatch<float> make_batch(const std::vector<std::size_t>& indices) const;

 private:
  std::vector<DatasetEntry> entries_;
  CameraRig rig_;
};

}  // namespace bevpaint
