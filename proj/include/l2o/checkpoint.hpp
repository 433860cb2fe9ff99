#pragma once

// Flat binary checkpoint for L2OParams.
//
// Layout, all fields little-endian:
//   bytes 0..3   magic "L2O1"
//   u64          hidden size
//   f64          preprocess p
//   f64          output scale
//   then 8 tensors in the order w1x, w1h, b1, w2x, w2h, b2, w_out, b_out,
//   each as u64 rows, u64 cols, rows*cols f64 values in row-major order.

#include <string>
#include <vector>

#include "l2o/model.hpp"

namespace l2o {

std::vector<char> encode_checkpoint(const L2OParams& phi);
L2OParams decode_checkpoint(const std::vector<char>& bytes);

void save_checkpoint(const std::string& path, const L2OParams& phi);
/// Throws std::runtime_error when the file is missing or malformed.
L2OParams load_checkpoint(const std::string& path);

}  // namespace l2o
