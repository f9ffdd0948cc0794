#pragma once

// File helpers and 8-bit PNG reading/writing (libpng simplified API).

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace rsovseg {

std::string read_file(const std::filesystem::path& path);
/// Writes to a sibling temporary file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

struct Raster {
  int height = 0;
  int width = 0;
  int channels = 0;  // 1 (gray) or 3 (RGB)
  std::vector<std::uint8_t> pixels;  // row-major, interleaved

  bool operator==(const Raster&) const = default;
};

/// Reads any PNG and converts it to `channels` (1 or 3) channels.
Raster read_png(const std::filesystem::path& path, int channels);
void write_png(const std::filesystem::path& path, const Raster& raster);
std::vector<std::uint8_t> encode_png(const Raster& raster);

}  // namespace rsovseg
