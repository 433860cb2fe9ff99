#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "l2o/optimizee.hpp"

namespace l2o::idx {

inline constexpr std::uint32_t kImagesMagic = 0x00000803;
inline constexpr std::uint32_t kLabelsMagic = 0x00000801;

struct Images {
  std::uint32_t count = 0;
  std::uint32_t rows = 0;
  std::uint32_t cols = 0;
  std::vector<std::uint8_t> pixels;
};

/// Reads big-endian IDX files. Throws std::runtime_error on a bad magic,
/// short read, or missing file.
Images read_images(const std::string& path);
std::vector<std::uint8_t> read_labels(const std::string& path);

/// Pixels scaled to [0, 1]; one image per row.
Dataset load_dataset(const std::string& images_path, const std::string& labels_path);

void write_images(const std::string& path, const Images& images);
void write_labels(const std::string& path, const std::vector<std::uint8_t>& labels);

}  // namespace l2o::idx
