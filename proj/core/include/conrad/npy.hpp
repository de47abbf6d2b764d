#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace conrad {

/// Minimal NPY v1.0 container support: uint8 and int64 arrays, C order.
/// Covers the corruption-dataset files ([5*10000, 32, 32, 3] uint8 images
/// plus integer label vectors); anything fancier is rejected loudly.
struct NpyArray {
  std::vector<std::int64_t> shape;
  std::vector<std::uint8_t> u8;   // populated when dtype is |u1
  std::vector<std::int64_t> i64;  // populated when dtype is <i8
  bool is_u8 = false;

  std::int64_t numel() const;
};

NpyArray npy_load(const std::string& path);
void npy_save_u8(const std::string& path, const std::vector<std::int64_t>& shape,
                 const std::vector<std::uint8_t>& data);
void npy_save_i64(const std::string& path, const std::vector<std::int64_t>& shape,
                  const std::vector<std::int64_t>& data);

}  // namespace conrad
