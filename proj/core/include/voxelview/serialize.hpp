#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "voxelview/tensor.hpp"

namespace voxelview {

// Flat binary container of named arrays, little-endian:
//   magic "VVTNSR01" (8 bytes), u32 version, u64 entry count, then per entry
//   u64 name length, name bytes, u64 rank, rank x u64 extents, raw doubles.
void write_tensor_container(std::ostream& os,
                            const std::vector<std::pair<std::string, Tensor>>& entries);
std::map<std::string, Tensor> read_tensor_container(std::istream& is);

}  // namespace voxelview
