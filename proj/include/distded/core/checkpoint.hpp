#pragma once

/**
 * Parameter blobs: little-endian IEEE-754 float32, nets in the given order,
 * and within a net per layer the weights (row-major, out x in) then the
 * biases. The JSON manifest that accompanies a blob is owned by the caller.
 */

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "distded/core/dense_net.hpp"
#include "distded/core/hash.hpp"

namespace distded {

namespace detail {

inline void put_f32(std::string& out, float f) {
  std::uint32_t u = std::bit_cast<std::uint32_t>(f);
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((u >> (8 * i)) & 0xffu));
}

inline float get_f32(const std::string& in, std::size_t& pos) {
  if (pos + 4 > in.size()) throw FormatError("parameter blob is truncated");
  std::uint32_t u = 0;
  for (int i = 0; i < 4; ++i) u |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  pos += 4;
  return std::bit_cast<float>(u);
}

}  // namespace detail

template <class T>
void append_blob(std::string& out, const DenseNet<T>& net) {
  for (std::size_t l = 0; l < net.layer_count(); ++l) {
    const auto& w = net.weights[l];
    for (Eigen::Index r = 0; r < w.rows(); ++r)
      for (Eigen::Index c = 0; c < w.cols(); ++c) detail::put_f32(out, static_cast<float>(w(r, c)));
    for (Eigen::Index r = 0; r < net.biases[l].size(); ++r) detail::put_f32(out, static_cast<float>(net.biases[l](r)));
  }
}

/// Fills `net` (already shaped) from the blob, advancing `pos`.
template <class T>
void read_blob(const std::string& in, std::size_t& pos, DenseNet<T>& net) {
  for (std::size_t l = 0; l < net.layer_count(); ++l) {
    auto& w = net.weights[l];
    for (Eigen::Index r = 0; r < w.rows(); ++r)
      for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = static_cast<T>(detail::get_f32(in, pos));
    for (Eigen::Index r = 0; r < net.biases[l].size(); ++r) net.biases[l](r) = static_cast<T>(detail::get_f32(in, pos));
  }
}

inline void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open " + path + " for writing");
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("write failed for " + path);
}

inline std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path);
  return std::string(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
}

}  // namespace distded
