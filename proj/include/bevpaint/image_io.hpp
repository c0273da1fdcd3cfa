#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "bevpaint/tensor.hpp"

namespace bevpaint {

using Rgb8 = std::array<std::uint8_t, 3>;

// Interleaved 8-bit RGB image, row-major from the top-left.
struct Image8 {
  std::int64_t width = 0;
  std::int64_t height = 0;
  std::vector<std::uint8_t> rgb;  // 3 * width * height

  static Image8 filled(std::int64_t w, std::int64_t h, Rgb8 color) {
    Image8 img;
    img.width = w;
    img.height = h;
    img.rgb.resize(static_cast<std::size_t>(3 * w * h));
    for (std::int64_t i = 0; i < w * h; ++i) {
      img.rgb[static_cast<std::size_t>(3 * i) + 0] = color[0];
      img.rgb[static_cast<std::size_t>(3 * i) + 1] = color[1];
      img.rgb[static_cast<std::size_t>(3 * i) + 2] = color[2];
    }
    return img;
  }

  Rgb8 at(std::int64_t x, std::int64_t y) const {
    const auto o = static_cast<std::size_t>(3 * (y * width + x));
    return {rgb[o], rgb[o + 1], rgb[o + 2]};
  }

  void set(std::int64_t x, std::int64_t y, Rgb8 c) {
    const auto o = static_cast<std::size_t>(3 * (y * width + x));
    rgb[o] = c[0];
    rgb[o + 1] = c[1];
    rgb[o + 2] = c[2];
  }
};

struct Gray8 {
  std::int64_t width = 0;
  std::int64_t height = 0;
  std::vector<std::uint8_t> pixels;
};

void save_ppm(const Image8& img, const std::string& path);
Image8 load_ppm(const std::string& path);
void save_pgm(const Gray8& img, const std::string& path);
Gray8 load_pgm(const std::string& path);

// Image (8-bit, [0,255]) <-> tensor (float planes, [0,1]) conversions.
Tensor<float> image_to_tensor(const Image8& img);            // 3 x H x W
Image8 tensor_to_image(const Tensor<float>& t);              // rounds to 8 bits

// Occupancy grid file: magic "OCCG", then u32 class count, u32 grid_x,
// u32 grid_y (little-endian), then class-major u8 planes with values 0/1.
// Plane layout matches the tensor layout: row-major over (i, j).
void save_occg(const std::vector<std::uint8_t>& planes, std::int64_t classes, std::int64_t grid_x,
               std::int64_t grid_y, const std::string& path);
std::vector<std::uint8_t> load_occg(const std::string& path, std::int64_t& classes, std::int64_t& grid_x,
                                    std::int64_t& grid_y);

// Debug tensor dump: magic "TNSR", u32 ndim, u32 dims[], f32 data (LE).
void save_tnsr(const Tensor<float>& t, const std::string& path);
Tensor<float> load_tnsr(const std::string& path);

// BEV grid <-> raster image. Row 0 of the image is the far +x edge and
// column 0 the far +y (left) edge, so forward points up in saved panels.
// grid is a 3 x grid_x x grid_y float tensor in [0,1].
Image8 bev_tensor_to_image(const Tensor<float>& grid);
Tensor<float> bev_image_to_tensor(const Image8& img);

}  // namespace bevpaint
