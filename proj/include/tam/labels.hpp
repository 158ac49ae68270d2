#pragma once

#include <array>
#include <cmath>
#include <string>
#include <vector>

namespace tam {

inline constexpr int kNumAUs = 12;
inline constexpr int kNumExprClasses = 8;
inline constexpr float kVaSentinel = -5.0f;
inline constexpr int kExprSentinel = -1;
inline constexpr int kAuSentinel = -1;

// Per-frame ground truth. Sentinels (-5.0 for valence/arousal, -1 for expr
// and AU entries) mark abnormal labels in raw data; sanitized frames carry
// none.
struct FrameLabels {
  float valence = kVaSentinel;
  float arousal = kVaSentinel;
  int expr = kExprSentinel;
  std::array<int, kNumAUs> aus{};

  bool va_valid() const { return valence != kVaSentinel && arousal != kVaSentinel; }
  bool expr_valid() const { return expr >= 0 && expr < kNumExprClasses; }
  bool aus_valid() const {
    for (int a : aus)
      if (a != 0 && a != 1) return false;
    return true;
  }
  bool all_valid() const { return va_valid() && expr_valid() && aus_valid(); }
};

// Indices into a video's frames whose labels are valid for every task
// group; a frame missing any group is dropped entirely.
inline std::vector<std::size_t> valid_frame_indices(const std::vector<FrameLabels>& labels) {
  std::vector<std::size_t> keep;
  keep.reserve(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i].all_valid()) keep.push_back(i);
  return keep;
}

}  // namespace tam
