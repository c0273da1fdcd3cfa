#include "bevpaint/config.hpp"

#include <fstream>
#include <sstream>

namespace bevpaint {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream is(s);
  std::string tok;
  while (std::getline(is, tok, ',')) {
    tok = trim(tok);
    if (!tok.empty()) out.push_back(tok);
  }
  return out;
}

}  // namespace

KeyValueFile KeyValueFile::parse_text(const std::string& text, const std::string& origin) {
  KeyValueFile kv;
  kv.origin_ = origin;
  std::istringstream in(text);
  std::string line;
  std::string section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    if (t.front() == '[') {
      if (t.back() != ']') throw ConfigError(origin + ":" + std::to_string(lineno) + ": malformed section header");
      section = trim(t.substr(1, t.size() - 2));
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected key = value, got: " + t);
    }
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    if (key.empty()) throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key");
    const std::string full = section.empty() ? key : section + "." + key;
    kv.values_[full] = value;
    kv.used_[full] = false;
  }
  return kv;
}

KeyValueFile KeyValueFile::parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_text(text, path);
}

void KeyValueFile::mark_known(const std::string& key) const {
  auto it = used_.find(key);
  if (it != used_.end()) it->second = true;
}

std::string KeyValueFile::get_string(const std::string& key, const std::string& fallback) const {
  mark_known(key);
  auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

double KeyValueFile::get_double(const std::string& key, double fallback) const {
  mark_known(key);
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    std::size_t pos = 0;
    const double v = std::stod(it->second, &pos);
    if (pos != it->second.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw ConfigError(origin_ + ": key '" + key + "' is not a number: " + it->second);
  }
}

std::int64_t KeyValueFile::get_int(const std::string& key, std::int64_t fallback) const {
  mark_known(key);
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    std::size_t pos = 0;
    const long long v = std::stoll(it->second, &pos);
    if (pos != it->second.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw ConfigError(origin_ + ": key '" + key + "' is not an integer: " + it->second);
  }
}

bool KeyValueFile::get_bool(const std::string& key, bool fallback) const {
  mark_known(key);
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  if (it->second == "true" || it->second == "1") return true;
  if (it->second == "false" || it->second == "0") return false;
  throw ConfigError(origin_ + ": key '" + key + "' is not a boolean: " + it->second);
}

void KeyValueFile::check_unknown_keys() const {
  for (const auto& [key, used] : used_) {
    if (!used) throw ConfigError(origin_ + ": unknown config key '" + key + "'");
  }
}

RunConfig RunConfig::from_text(const std::string& text) {
  const KeyValueFile kv = KeyValueFile::parse_text(text);
  RunConfig cfg;

  cfg.model.context_channels = kv.get_int("model.context_channels", 64);
  cfg.model.width = kv.get_int("model.width", 16);
  cfg.model.depth.d_min = kv.get_double("model.depth_min", 4.0);
  cfg.model.depth.d_max = kv.get_double("model.depth_max", 45.0);
  cfg.model.depth.d_step = kv.get_double("model.depth_step", 1.0);
  cfg.model.image_h = kv.get_int("model.image_h", 128);
  cfg.model.image_w = kv.get_int("model.image_w", 352);
  const double ex = kv.get_double("model.extent_x", 80.0);
  const double ey = kv.get_double("model.extent_y", 80.0);
  const double rx = kv.get_double("model.res_x", 0.4);
  const double ry = kv.get_double("model.res_y", 0.4);
  cfg.model.grid = BevGridSpec::from_extent(ex, ey, rx, ry);
  cfg.model.classes = split_csv(kv.get_string("model.classes", "road,vehicle,lane"));
  cfg.model.lambda_occ = kv.get_double("model.lambda_occ", 1.0);
  cfg.model.lambda_app = kv.get_double("model.lambda_app", 1.0);
  cfg.model.validate();

  cfg.rig.preset = kv.get_string("rig.preset", "surround6");
  cfg.rig.path = kv.get_string("rig.path", "");
  cfg.rig.pair_fov_deg = kv.get_double("rig.fov_deg", 90.0);
  cfg.rig.pitch_down_deg = kv.get_double("rig.pitch_down_deg", 5.0);

  cfg.datagen.count = kv.get_int("datagen.count", 80);
  cfg.datagen.split = kv.get_double("datagen.split", 0.8);
  cfg.datagen.seed = static_cast<std::uint64_t>(kv.get_int("datagen.seed", 7));
  if (!(cfg.datagen.split > 0.0 && cfg.datagen.split < 1.0)) {
    throw ConfigError("datagen.split must be in (0, 1)");
  }
  if (cfg.datagen.count < 0) throw ConfigError("datagen.count must be >= 0");

  cfg.scene.extent_x = kv.get_double("scene.extent_x", cfg.model.grid.extent_x);
  cfg.scene.extent_y = kv.get_double("scene.extent_y", cfg.model.grid.extent_y);
  cfg.scene.vehicles_min = static_cast<int>(kv.get_int("scene.vehicles_min", 1));
  cfg.scene.vehicles_max = static_cast<int>(kv.get_int("scene.vehicles_max", 3));
  cfg.scene.vehicle_abs_x_min = kv.get_double("scene.vehicle_abs_x_min", 2.5);
  cfg.scene.vehicle_abs_x_max = kv.get_double("scene.vehicle_abs_x_max", 7.0);
  cfg.scene.cross_road_probability = kv.get_double("scene.cross_road_probability", 0.5);
  cfg.scene.lidar_channels = static_cast<int>(kv.get_int("scene.lidar_channels", 48));
  cfg.scene.lidar_azimuth_steps = static_cast<int>(kv.get_int("scene.lidar_azimuth_steps", 720));
  if (cfg.scene.vehicles_min < 0 || cfg.scene.vehicles_max < cfg.scene.vehicles_min) {
    throw ConfigError("scene.vehicles_min/max must form a non-empty range");
  }

  cfg.train.steps = kv.get_int("train.steps", 600);
  cfg.train.batch_size = kv.get_int("train.batch_size", 20);
  cfg.train.lr = kv.get_double("train.lr", 1e-3);
  cfg.train.seed = static_cast<std::uint64_t>(kv.get_int("train.seed", 1));
  cfg.train.checkpoint_every = kv.get_int("train.checkpoint_every", 200);
  cfg.train.occupancy_only = kv.get_bool("train.occupancy_only", false);
  if (cfg.train.batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (cfg.train.steps < 0) throw ConfigError("train.steps must be >= 0");

  cfg.dataset_dir = kv.get_string("paths.dataset", "");
  cfg.out_dir = kv.get_string("paths.out", "");

  kv.check_unknown_keys();
  return cfg;
}

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return from_text(text);
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

CameraRig RunConfig::build_rig() const {
  if (rig.preset == "surround6") {
    return make_surround6_rig(model.image_w, model.image_h, rig.pitch_down_deg);
  }
  if (rig.preset == "front3") {
    return make_front3_rig(model.image_w, model.image_h, rig.pitch_down_deg);
  }
  if (rig.preset == "pair2") {
    return make_pair_rig(model.image_w, model.image_h, rig.pair_fov_deg, rig.pitch_down_deg);
  }
  if (rig.preset == "file") {
    if (rig.path.empty()) throw ConfigError("rig.preset = file requires rig.path");
    return load_rig_json(rig.path);
  }
  throw ConfigError("unknown rig preset: " + rig.preset);
}

std::string RunConfig::canonical_text() const {
  std::ostringstream os;
  os.precision(17);
  os << "[model]\n";
  os << "classes = ";
  for (std::size_t i = 0; i < model.classes.size(); ++i) os << (i ? "," : "") << model.classes[i];
  os << "\n";
  os << "context_channels = " << model.context_channels << "\n";
  os << "width = " << model.width << "\n";
  os << "depth_min = " << model.depth.d_min << "\n";
  os << "depth_max = " << model.depth.d_max << "\n";
  os << "depth_step = " << model.depth.d_step << "\n";
  os << "image_h = " << model.image_h << "\n";
  os << "image_w = " << model.image_w << "\n";
  os << "extent_x = " << model.grid.extent_x << "\n";
  os << "extent_y = " << model.grid.extent_y << "\n";
  os << "res_x = " << model.grid.res_x << "\n";
  os << "res_y = " << model.grid.res_y << "\n";
  os << "lambda_occ = " << model.lambda_occ << "\n";
  os << "lambda_app = " << model.lambda_app << "\n";
  os << "\n[rig]\n";
  os << "preset = " << rig.preset << "\n";
  if (!rig.path.empty()) os << "path = " << rig.path << "\n";
  os << "fov_deg = " << rig.pair_fov_deg << "\n";
  os << "pitch_down_deg = " << rig.pitch_down_deg << "\n";
  os << "\n[scene]\n";
  os << "extent_x = " << scene.extent_x << "\n";
  os << "extent_y = " << scene.extent_y << "\n";
  os << "vehicles_min = " << scene.vehicles_min << "\n";
  os << "vehicles_max = " << scene.vehicles_max << "\n";
  os << "vehicle_abs_x_min = " << scene.vehicle_abs_x_min << "\n";
  os << "vehicle_abs_x_max = " << scene.vehicle_abs_x_max << "\n";
  os << "cross_road_probability = " << scene.cross_road_probability << "\n";
  os << "lidar_channels = " << scene.lidar_channels << "\n";
  os << "lidar_azimuth_steps = " << scene.lidar_azimuth_steps << "\n";
  os << "\n[datagen]\n";
  os << "count = " << datagen.count << "\n";
  os << "split = " << datagen.split << "\n";
  os << "seed = " << datagen.seed << "\n";
  os << "\n[train]\n";
  os << "steps = " << train.steps << "\n";
  os << "batch_size = " << train.batch_size << "\n";
  os << "lr = " << train.lr << "\n";
  os << "seed = " << train.seed << "\n";
  os << "checkpoint_every = " << train.checkpoint_every << "\n";
  os << "occupancy_only = " << (train.occupancy_only ? "true" : "false") << "\n";
  os << "\n[paths]\n";
  os << "dataset = " << dataset_dir << "\n";
  os << "out = " << out_dir << "\n";
  return os.str();
}

std::string RunConfig::fingerprint() const { return hex64(fnv1a64(canonical_text())); }

void RunConfig::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write config file: " + path);
  out << canonical_text();
}

}  // namespace bevpaint
