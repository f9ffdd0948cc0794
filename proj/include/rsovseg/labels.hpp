#pragma once

#include <cstdint>
#include <vector>

namespace rsovseg {

inline constexpr std::uint8_t kIgnoreIndex = 255;

/// Row-major per-pixel class indices. Used both for ground truth (where
/// `kIgnoreIndex` marks unlabeled pixels) and for predictions.
struct LabelMap {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> labels;

  LabelMap() = default;
  LabelMap(int h, int w, std::uint8_t fill = 0)
      : height(h), width(w), labels(static_cast<std::size_t>(h) * w, fill) {}

  std::uint8_t& at(int r, int c) { return labels[static_cast<std::size_t>(r) * width + c]; }
  std::uint8_t at(int r, int c) const { return labels[static_cast<std::size_t>(r) * width + c]; }
  bool operator==(const LabelMap&) const = default;
};

using GroundTruthMask = LabelMap;

}  // namespace rsovseg
