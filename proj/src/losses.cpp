#include "bevpaint/losses.hpp"

#include <algorithm>

#include "json.hpp"

namespace bevpaint {

std::vector<VehicleCentroid> vehicle_centroids(const std::vector<std::uint8_t>& mask,
                                               const BevGridSpec& spec) {
  const std::int64_t gx = spec.grid_x, gy = spec.grid_y;
  if (static_cast<std::int64_t>(mask.size()) != gx * gy) {
    throw ShapeError("vehicle_centroids: mask size does not match the grid");
  }
  std::vector<std::uint8_t> seen(mask.size(), 0);
  std::vector<VehicleCentroid> out;
  std::vector<std::int64_t> stack;
  for (std::int64_t start = 0; start < gx * gy; ++start) {
    if (!mask[static_cast<std::size_t>(start)] || seen[static_cast<std::size_t>(start)]) continue;
    stack.assign(1, start);
    seen[static_cast<std::size_t>(start)] = 1;
    double sx = 0, sy = 0;
    std::int64_t count = 0;
    while (!stack.empty()) {
      const std::int64_t cur = stack.back();
      stack.pop_back();
      const std::int64_t i = cur / gy, j = cur % gy;
      sx += spec.cell_center_x(i);
      sy += spec.cell_center_y(j);
      ++count;
      const std::int64_t nbr[4][2] = {{i - 1, j}, {i + 1, j}, {i, j - 1}, {i, j + 1}};
      for (const auto& nb : nbr) {
        if (nb[0] < 0 || nb[0] >= gx || nb[1] < 0 || nb[1] >= gy) continue;
        const std::int64_t ni = nb[0] * gy + nb[1];
        if (mask[static_cast<std::size_t>(ni)] && !seen[static_cast<std::size_t>(ni)]) {
          seen[static_cast<std::size_t>(ni)] = 1;
          stack.push_back(ni);
        }
      }
    }
    VehicleCentroid c;
    c.x = sx / static_cast<double>(count);
    c.y = sy / static_cast<double>(count);
    c.longitudinal_distance = std::abs(c.x);
    c.cells = count;
    out.push_back(c);
  }
  std::sort(out.begin(), out.end(), [](const VehicleCentroid& a, const VehicleCentroid& b) {
    return a.longitudinal_distance < b.longitudinal_distance;
  });
  return out;
}

std::string metrics_report_to_json(const MetricsReport& r) {
  nlohmann::json j;
  nlohmann::json iou = nlohmann::json::object();
  for (std::size_t i = 0; i < r.class_names.size(); ++i) iou[r.class_names[i]] = r.iou[i];
  j["iou"] = std::move(iou);
  if (r.appearance_l1 >= 0.0) {
    j["appearance_l1"] = r.appearance_l1;
  } else {
    j["appearance_l1"] = nullptr;
  }
  j["sample_count"] = r.sample_count;
  j["config_fingerprint"] = r.config_fingerprint;
  j["iou_accumulation"] = "whole-split";
  return j.dump(2);
}

}  // namespace bevpaint
