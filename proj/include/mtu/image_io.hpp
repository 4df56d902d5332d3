#pragma once

#include <filesystem>
#include <stdexcept>

#include "mtu/types.hpp"

namespace mtu::io {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// 8-bit RGB(A) or grey PNG -> 3-channel plane in [0, 1]. Alpha is dropped,
/// grey is replicated.
ImagePlane read_png(const std::filesystem::path& path);

/// Clamps to [0, 1] and quantises to 8 bits (round to nearest).
void write_png(const ImagePlane& image, const std::filesystem::path& path);

/// Flow file: "MTFL", u32 version, u32 width, u32 height, u32 scale (1 or
/// 4), then dx and dy planes as little-endian float32.
FlowField read_flow(const std::filesystem::path& path);
void write_flow(const FlowField& flow, const std::filesystem::path& path);

/// Writes to a sibling temporary file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, const std::string& bytes);

}  // namespace mtu::io
