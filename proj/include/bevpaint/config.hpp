#pragma once

#include <map>
#include <string>

#include "bevpaint/model.hpp"
#include "bevpaint/scene.hpp"

namespace bevpaint {

// Flat UTF-8 key=value file with [section] headers, '#' comments, and no
// escaping. Unknown keys are rejected to catch typos.
class KeyValueFile {
 public:
  static KeyValueFile parse_file(const std::string& path);
  static KeyValueFile parse_text(const std::string& text, const std::string& origin = "<string>");

  bool has(const std::string& key) const { return values_.count(key) > 0; }
  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  const std::map<std::string, std::string>& values() const { return values_; }
  void mark_known(const std::string& key) const;
  void check_unknown_keys() const;

 private:
  std::map<std::string, std::string> values_;
  mutable std::map<std::string, bool> used_;
  std::string origin_;
};

struct RigConfig {
  std::string preset = "surround6";  // surround6 | front3 | pair2 | file
  std::string path;                  // when preset = file
  double pair_fov_deg = 90.0;
  double pitch_down_deg = 5.0;
};

struct DatagenConfig {
  std::int64_t count = 80;
  double split = 0.8;  // train fraction
  std::uint64_t seed = 7;
};

struct TrainConfig {
  std::int64_t steps = 600;
  std::int64_t batch_size = 20;
  double lr = 1e-3;
  std::uint64_t seed = 1;
  std::int64_t checkpoint_every = 200;
  bool occupancy_only = false;
};

// Everything a run needs; defaults reproduce the reference configuration
// (lr 1e-3, batch 20, 80/20 split, 80m grid at 0.4m, depth 4..45 m at 1 m,
// 128x352 images, C=64).
struct RunConfig {
  ModelConfig model;
  RigConfig rig;
  SceneConfig scene;
  DatagenConfig datagen;
  TrainConfig train;
  std::string dataset_dir;
  std::string out_dir;

  static RunConfig load(const std::string& path);
  static RunConfig from_text(const std::string& text);

  CameraRig build_rig() const;
  std::string canonical_text() const;  // serialization used for fingerprints
  std::string fingerprint() const;
  void save(const std::string& path) const;
};

}  // namespace bevpaint
