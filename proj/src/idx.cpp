#include "l2o/idx.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <stdexcept>

namespace l2o::idx {

namespace {

std::uint32_t read_be32(std::istream& in, const std::string& path) {
  std::array<unsigned char, 4> b{};
  if (!in.read(reinterpret_cast<char*>(b.data()), 4)) {
    throw std::runtime_error("idx: truncated header in " + path);
  }
  return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) | (std::uint32_t{b[2]} << 8) |
         std::uint32_t{b[3]};
}

void write_be32(std::ostream& out, std::uint32_t v) {
  const std::array<char, 4> b{static_cast<char>(v >> 24), static_cast<char>(v >> 16),
                              static_cast<char>(v >> 8), static_cast<char>(v)};
  out.write(b.data(), 4);
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw std::runtime_error("idx: cannot open " + path);
  }
  return in;
}

}  // namespace

Images read_images(const std::string& path) {
  auto in = open_in(path);
  if (read_be32(in, path) != kImagesMagic) {
    throw std::runtime_error("idx: bad image magic in " + path);
  }
  Images img;
  img.count = read_be32(in, path);
  img.rows = read_be32(in, path);
  img.cols = read_be32(in, path);
  img.pixels.resize(std::size_t{img.count} * img.rows * img.cols);
  if (!in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()))) {
    throw std::runtime_error("idx: truncated pixel data in " + path);
  }
  return img;
}

std::vector<std::uint8_t> read_labels(const std::string& path) {
  auto in = open_in(path);
  if (read_be32(in, path) != kLabelsMagic) {
    throw std::runtime_error("idx: bad label magic in " + path);
  }
  std::vector<std::uint8_t> labels(read_be32(in, path));
  if (!in.read(reinterpret_cast<char*>(labels.data()), static_cast<std::streamsize>(labels.size()))) {
    throw std::runtime_error("idx: truncated label data in " + path);
  }
  return labels;
}

Dataset load_dataset(const std::string& images_path, const std::string& labels_path) {
  const Images img = read_images(images_path);
  const auto labels = read_labels(labels_path);
  if (labels.size() != img.count) {
    throw std::runtime_error("idx: image/label count mismatch");
  }
  const Eigen::Index pixels = Eigen::Index{img.rows} * img.cols;
  Dataset d;
  d.features.resize(img.count, pixels);
  for (Eigen::Index i = 0; i < d.features.rows(); ++i) {
    for (Eigen::Index k = 0; k < pixels; ++k) {
      d.features(i, k) = img.pixels[static_cast<std::size_t>(i * pixels + k)] / 255.0;
    }
  }
  d.labels.assign(labels.begin(), labels.end());
  const int top = labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end());
  d.classes = std::max(10, top + 1);
  return d;
}

void write_images(const std::string& path, const Images& images) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("idx: cannot write " + path);
  write_be32(out, kImagesMagic);
  write_be32(out, images.count);
  write_be32(out, images.rows);
  write_be32(out, images.cols);
  out.write(reinterpret_cast<const char*>(images.pixels.data()), static_cast<std::streamsize>(images.pixels.size()));
}

void write_labels(const std::string& path, const std::vector<std::uint8_t>& labels) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("idx: cannot write " + path);
  write_be32(out, kLabelsMagic);
  write_be32(out, static_cast<std::uint32_t>(labels.size()));
  out.write(reinterpret_cast<const char*>(labels.data()), static_cast<std::streamsize>(labels.size()));
}

}  // namespace l2o::idx
