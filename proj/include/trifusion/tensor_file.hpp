#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "trifusion/tensor.hpp"

namespace trifusion {

// Binary container for named f32 tensors:
//
//   "TNSR" | u32 version (=1)
//   then, repeated to end of file:
//   u32 name_len | name bytes (UTF-8) | u32 ndim | u32 dims[ndim] | f32 payload
//
// All integers and floats are little-endian; payloads are row-major.

inline constexpr std::uint32_t kTensorFileVersion = 1;

using NamedTensor = std::pair<std::string, Tensor>;

/// Serializes entries in order. Throws FormatError on duplicate names or
/// non-finite values (offset = where the entry would start).
std::string encode_tensors(const std::vector<NamedTensor>& entries);

/// Parses a complete buffer. Throws FormatError with the offset of the first
/// malformed byte.
std::vector<NamedTensor> decode_tensors(const std::string& bytes);

void write_tensors(const std::filesystem::path& path, const std::vector<NamedTensor>& entries);
std::vector<NamedTensor> read_tensors(const std::filesystem::path& path);

/// Returns the entry called `name`; FormatError if absent.
const Tensor& find_tensor(const std::vector<NamedTensor>& entries, const std::string& name);

}  // namespace trifusion
