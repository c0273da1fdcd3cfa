#include "bevpaint/image_io.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

namespace bevpaint {

namespace {

void write_exact(std::ofstream& out, const void* p, std::size_t n) {
  out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

void read_exact(std::ifstream& in, void* p, std::size_t n, const std::string& path) {
  in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n) throw ConfigError("truncated file: " + path);
}

void write_u32(std::ofstream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff), static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  write_exact(out, b, 4);
}

std::uint32_t read_u32(std::ifstream& in, const std::string& path) {
  unsigned char b[4];
  read_exact(in, b, 4, path);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

// PNM header token reader: skips whitespace and '#' comments.
std::string next_pnm_token(std::ifstream& in, const std::string& path) {
  std::string tok;
  int c;
  while ((c = in.get()) != EOF) {
    if (c == '#') {
      while ((c = in.get()) != EOF && c != '\n') {
      }
      continue;
    }
    if (std::isspace(c)) {
      if (!tok.empty()) return tok;
      continue;
    }
    tok.push_back(static_cast<char>(c));
  }
  if (tok.empty()) throw ConfigError("truncated header in " + path);
  return tok;
}

}  // namespace

void save_ppm(const Image8& img, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write image: " + path);
  out << "P6\n" << img.width << " " << img.height << "\n255\n";
  write_exact(out, img.rgb.data(), img.rgb.size());
  if (!out) throw ConfigError("failed writing image: " + path);
}

Image8 load_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open image: " + path);
  if (next_pnm_token(in, path) != "P6") throw ConfigError(path + " is not a binary PPM (P6)");
  Image8 img;
  img.width = std::stoll(next_pnm_token(in, path));
  img.height = std::stoll(next_pnm_token(in, path));
  const long maxval = std::stol(next_pnm_token(in, path));
  if (maxval != 255) throw ConfigError(path + ": only maxval 255 is supported");
  if (img.width <= 0 || img.height <= 0) throw ConfigError(path + ": bad dimensions");
  img.rgb.resize(static_cast<std::size_t>(3 * img.width * img.height));
  read_exact(in, img.rgb.data(), img.rgb.size(), path);
  return img;
}

void save_pgm(const Gray8& img, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write image: " + path);
  out << "P5\n" << img.width << " " << img.height << "\n255\n";
  write_exact(out, img.pixels.data(), img.pixels.size());
  if (!out) throw ConfigError("failed writing image: " + path);
}

Gray8 load_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open image: " + path);
  if (next_pnm_token(in, path) != "P5") throw ConfigError(path + " is not a binary PGM (P5)");
  Gray8 img;
  img.width = std::stoll(next_pnm_token(in, path));
  img.height = std::stoll(next_pnm_token(in, path));
  const long maxval = std::stol(next_pnm_token(in, path));
  if (maxval != 255) throw ConfigError(path + ": only maxval 255 is supported");
  img.pixels.resize(static_cast<std::size_t>(img.width * img.height));
  read_exact(in, img.pixels.data(), img.pixels.size(), path);
  return img;
}

Tensor<float> image_to_tensor(const Image8& img) {
  auto t = Tensor<float>::zeros({3, img.height, img.width});
  float* p = t.data();
  const std::int64_t plane = img.height * img.width;
  for (std::int64_t y = 0; y < img.height; ++y) {
    for (std::int64_t x = 0; x < img.width; ++x) {
      const auto c = img.at(x, y);
      const std::int64_t o = y * img.width + x;
      p[o] = static_cast<float>(c[0]) / 255.0f;
      p[plane + o] = static_cast<float>(c[1]) / 255.0f;
      p[2 * plane + o] = static_cast<float>(c[2]) / 255.0f;
    }
  }
  return t;
}

namespace {
std::uint8_t to_u8(float v) {
  const float clamped = std::min(std::max(v, 0.0f), 1.0f);
  return static_cast<std::uint8_t>(std::lround(clamped * 255.0f));
}
}  // namespace

Image8 tensor_to_image(const Tensor<float>& t) {
  if (t.ndim() != 3 || t.dim(0) != 3) throw ShapeError("tensor_to_image expects 3xHxW, got " + shape_str(t.shape()));
  Image8 img;
  img.height = t.dim(1);
  img.width = t.dim(2);
  img.rgb.resize(static_cast<std::size_t>(3 * img.width * img.height));
  const float* p = t.data();
  const std::int64_t plane = img.height * img.width;
  for (std::int64_t y = 0; y < img.height; ++y) {
    for (std::int64_t x = 0; x < img.width; ++x) {
      const std::int64_t o = y * img.width + x;
      img.set(x, y, {to_u8(p[o]), to_u8(p[plane + o]), to_u8(p[2 * plane + o])});
    }
  }
  return img;
}

void save_occg(const std::vector<std::uint8_t>& planes, std::int64_t classes, std::int64_t grid_x,
               std::int64_t grid_y, const std::string& path) {
  if (static_cast<std::int64_t>(planes.size()) != classes * grid_x * grid_y) {
    throw ShapeError("occupancy plane buffer does not match " + std::to_string(classes) + "x" +
                     std::to_string(grid_x) + "x" + std::to_string(grid_y));
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write occupancy grid: " + path);
  write_exact(out, "OCCG", 4);
  write_u32(out, static_cast<std::uint32_t>(classes));
  write_u32(out, static_cast<std::uint32_t>(grid_x));
  write_u32(out, static_cast<std::uint32_t>(grid_y));
  write_exact(out, planes.data(), planes.size());
  if (!out) throw ConfigError("failed writing occupancy grid: " + path);
}

std::vector<std::uint8_t> load_occg(const std::string& path, std::int64_t& classes, std::int64_t& grid_x,
                                    std::int64_t& grid_y) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open occupancy grid: " + path);
  char magic[4];
  read_exact(in, magic, 4, path);
  if (std::memcmp(magic, "OCCG", 4) != 0) throw ConfigError(path + " is not an OCCG file");
  classes = read_u32(in, path);
  grid_x = read_u32(in, path);
  grid_y = read_u32(in, path);
  std::vector<std::uint8_t> planes(static_cast<std::size_t>(classes * grid_x * grid_y));
  read_exact(in, planes.data(), planes.size(), path);
  return planes;
}

void save_tnsr(const Tensor<float>& t, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write tensor dump: " + path);
  write_exact(out, "TNSR", 4);
  write_u32(out, static_cast<std::uint32_t>(t.ndim()));
  for (std::size_t i = 0; i < t.ndim(); ++i) write_u32(out, static_cast<std::uint32_t>(t.shape()[i]));
  for (std::int64_t i = 0; i < t.numel(); ++i) {
    std::uint32_t bits;
    const float v = t.data()[i];
    std::memcpy(&bits, &v, 4);
    write_u32(out, bits);
  }
}

Tensor<float> load_tnsr(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open tensor dump: " + path);
  char magic[4];
  read_exact(in, magic, 4, path);
  if (std::memcmp(magic, "TNSR", 4) != 0) throw ConfigError(path + " is not a TNSR file");
  const std::uint32_t ndim = read_u32(in, path);
  Shape shape(ndim);
  for (auto& d : shape) d = read_u32(in, path);
  auto t = Tensor<float>::zeros(shape);
  for (std::int64_t i = 0; i < t.numel(); ++i) {
    const std::uint32_t bits = read_u32(in, path);
    float v;
    std::memcpy(&v, &bits, 4);
    t.data()[i] = v;
  }
  return t;
}

Image8 bev_tensor_to_image(const Tensor<float>& grid) {
  if (grid.ndim() != 3 || grid.dim(0) != 3) {
    throw ShapeError("bev_tensor_to_image expects 3 x grid_x x grid_y, got " + shape_str(grid.shape()));
  }
  const std::int64_t gx = grid.dim(1), gy = grid.dim(2);
  Image8 img;
  img.width = gy;
  img.height = gx;
  img.rgb.resize(static_cast<std::size_t>(3 * gx * gy));
  const float* p = grid.data();
  const std::int64_t plane = gx * gy;
  for (std::int64_t i = 0; i < gx; ++i) {
    for (std::int64_t j = 0; j < gy; ++j) {
      const std::int64_t row = gx - 1 - i;
      const std::int64_t col = gy - 1 - j;
      const std::int64_t o = i * gy + j;
      img.set(col, row, {to_u8(p[o]), to_u8(p[plane + o]), to_u8(p[2 * plane + o])});
    }
  }
  return img;
}

Tensor<float> bev_image_to_tensor(const Image8& img) {
  const std::int64_t gx = img.height, gy = img.width;
  auto t = Tensor<float>::zeros({3, gx, gy});
  float* p = t.data();
  const std::int64_t plane = gx * gy;
  for (std::int64_t i = 0; i < gx; ++i) {
    for (std::int64_t j = 0; j < gy; ++j) {
      const auto c = img.at(gy - 1 - j, gx - 1 - i);
      const std::int64_t o = i * gy + j;
      p[o] = static_cast<float>(c[0]) / 255.0f;
      p[plane + o] = static_cast<float>(c[1]) / 255.0f;
      p[2 * plane + o] = static_cast<float>(c[2]) / 255.0f;
    }
  }
  return t;
}

}  // namespace bevpaint
