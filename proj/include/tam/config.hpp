#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace tam {

// All tunables of the model and training loop. Field names double as
// config-file keys and CLI flag names.
struct ModelConfig {
  int u = 24;                 // region count (tokens per frame)
  int d = 24;                 // token width
  int n_heads = 4;
  int ffn_hidden = 1024;
  int image_size = 32;
  int backbone_channels = 64;  // C_f, width of the last backbone stage
  int backbone_stages = 3;     // stride-2 conv stages
  int perspectives = 2;        // 1 = single-block ablation
  std::string concat_mode = "token";  // "token" (2U x D) or "feature" (U x 2D)
  std::string smoothing = "ts";       // "ts" | "bts" | "none"
  double lr = 1e-4;
  int epochs = 100;
  int batch_videos = 1;   // videos per optimizer step (gradient accumulation)
  int chunk_len = 0;      // 0 = whole video; otherwise max frames per chunk
  std::uint64_t seed = 0;
  std::string composite_formula = "sum";  // "sum" | "mean"
  double target_composite = 0.0;  // > 0: stop once the train composite reaches it

  void validate() const {
    if (u < 1 || d < 1) throw std::invalid_argument("config: u and d must be >= 1");
    if (n_heads < 1 || d % n_heads != 0) {
      throw std::invalid_argument("config: n_heads must be >= 1 and divide d (d=" +
                                  std::to_string(d) + ", n_heads=" + std::to_string(n_heads) + ")");
    }
    if (ffn_hidden < 1) throw std::invalid_argument("config: ffn_hidden must be >= 1");
    if (epochs < 1) throw std::invalid_argument("config: epochs must be >= 1");
    if (perspectives != 1 && perspectives != 2) {
      throw std::invalid_argument("config: perspectives must be 1 or 2");
    }
    if (concat_mode != "token" && concat_mode != "feature") {
      throw std::invalid_argument("config: concat_mode must be 'token' or 'feature'");
    }
    if (smoothing != "ts" && smoothing != "bts" && smoothing != "none") {
      throw std::invalid_argument("config: smoothing must be 'ts', 'bts' or 'none'");
    }
    if (composite_formula != "sum" && composite_formula != "mean") {
      throw std::invalid_argument("config: composite_formula must be 'sum' or 'mean'");
    }
    if (backbone_stages < 1) throw std::invalid_argument("config: backbone_stages must be >= 1");
    if (backbone_channels < 1) throw std::invalid_argument("config: backbone_channels must be >= 1");
    if (image_size < (1 << backbone_stages)) {
      throw std::invalid_argument("config: image_size too small for " +
                                  std::to_string(backbone_stages) + " stride-2 stages");
    }
    if (lr <= 0) throw std::invalid_argument("config: lr must be > 0");
    if (batch_videos < 1) throw std::invalid_argument("config: batch_videos must be >= 1");
    if (chunk_len != 0 && chunk_len < 10) {
      throw std::invalid_argument("config: chunk_len must be 0 (whole video) or >= 10");
    }
    if (target_composite < 0) throw std::invalid_argument("config: target_composite must be >= 0");
  }

  // Width of the per-task representation entering the queries, smoothers and
  // heads. Feature-axis concatenation doubles the token width.
  int rep_width() const {
    return (perspectives == 2 && concat_mode == "feature") ? 2 * d : d;
  }

  // Backbone stage widths: halve from C_f going backwards (16/32/64 defaults).
  std::vector<int> backbone_widths() const {
    std::vector<int> w(static_cast<std::size_t>(backbone_stages));
    int c = backbone_channels;
    for (int s = backbone_stages - 1; s >= 0; --s) {
      w[static_cast<std::size_t>(s)] = c;
      c = std::max(1, c / 2);
    }
    return w;
  }

  int feature_map_size() const {
    int s = image_size;
    for (int i = 0; i < backbone_stages; ++i) s = (s - 1) / 2 + 1;
    return s;
  }

  std::vector<std::pair<std::string, std::string>> to_kv() const;
  static ModelConfig from_kv(const std::vector<std::pair<std::string, std::string>>& kv);
};

}  // namespace tam
