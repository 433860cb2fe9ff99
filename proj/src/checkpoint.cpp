#include "l2o/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <stdexcept>

namespace l2o {

namespace {

constexpr char kMagic[4] = {'L', '2', 'O', '1'};

void put_u64(std::vector<char>& out, std::uint64_t v) {
  for (int k = 0; k < 8; ++k) out.push_back(static_cast<char>((v >> (8 * k)) & 0xff));
}

void put_f64(std::vector<char>& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

class Reader {
 public:
  explicit Reader(const std::vector<char>& bytes) : bytes_(bytes) {}

  std::uint64_t u64() {
    if (pos_ + 8 > bytes_.size()) throw std::runtime_error("checkpoint: truncated data");
    std::uint64_t v = 0;
    for (int k = 0; k < 8; ++k) {
      v |= std::uint64_t{static_cast<unsigned char>(bytes_[pos_ + k])} << (8 * k);
    }
    pos_ += 8;
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  void magic() {
    if (bytes_.size() < 4 || std::memcmp(bytes_.data(), kMagic, 4) != 0) {
      throw std::runtime_error("checkpoint: bad magic (expected L2O1)");
    }
    pos_ = 4;
  }
  [[nodiscard]] bool done() const { return pos_ == bytes_.size(); }

 private:
  const std::vector<char>& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<char> encode_checkpoint(const L2OParams& phi) {
  std::vector<char> out(kMagic, kMagic + 4);
  put_u64(out, static_cast<std::uint64_t>(phi.hidden));
  put_f64(out, phi.preprocess_p);
  put_f64(out, phi.output_scale);
  for (const MatrixXd* t : phi.tensors()) {
    put_u64(out, static_cast<std::uint64_t>(t->rows()));
    put_u64(out, static_cast<std::uint64_t>(t->cols()));
    for (Eigen::Index i = 0; i < t->rows(); ++i)
      for (Eigen::Index j = 0; j < t->cols(); ++j) put_f64(out, (*t)(i, j));
  }
  return out;
}

L2OParams decode_checkpoint(const std::vector<char>& bytes) {
  Reader in(bytes);
  in.magic();
  const auto hidden = in.u64();
  if (hidden < 1 || hidden > (1u << 20)) throw std::runtime_error("checkpoint: implausible hidden size");
  const double p = in.f64();
  const double scale = in.f64();
  L2OParams phi = L2OParams::zeros(static_cast<int>(hidden), p, scale);
  for (MatrixXd* t : phi.tensors()) {
    const auto rows = in.u64();
    const auto cols = in.u64();
    if (rows != static_cast<std::uint64_t>(t->rows()) || cols != static_cast<std::uint64_t>(t->cols())) {
      throw std::runtime_error("checkpoint: tensor shape does not match hidden size");
    }
    for (Eigen::Index i = 0; i < t->rows(); ++i)
      for (Eigen::Index j = 0; j < t->cols(); ++j) (*t)(i, j) = in.f64();
  }
  if (!in.done()) throw std::runtime_error("checkpoint: trailing bytes");
  return phi;
}

void save_checkpoint(const std::string& path, const L2OParams& phi) {
  const auto bytes = encode_checkpoint(phi);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("checkpoint: cannot write " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("checkpoint: write failed for " + path);
}

L2OParams load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot read " + path);
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace l2o
