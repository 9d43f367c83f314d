#pragma once

#include "dfdgcn/tensor.hpp"

#include <filesystem>
#include <string>

namespace dfdgcn::npy {

/// Reads a NumPy .npy array (format versions 1-3, C order, little-endian
/// float16/32/64 or signed/unsigned integers) as doubles.
Tensor read(const std::filesystem::path &path);
Tensor parse(const std::string &bytes, const std::string &origin);

/// Reads one array from a .npz archive (stored or deflated members).
/// `member` selects e.g. "data"; empty picks the first array.
Tensor read_npz(const std::filesystem::path &path, const std::string &member = "");

/// Writes a version 1.0 .npy file of little-endian float64.
void write(const std::filesystem::path &path, const Tensor &t);

} // namespace dfdgcn::npy
