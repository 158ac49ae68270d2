#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tam/labels.hpp"
#include "tam/tensor.hpp"

namespace tam {

// One video's frames and labels as loaded from disk. Frames are a
// [T x 3 x S x S] tensor in [0,1]; labels may contain sentinels until
// sanitized.
struct LabeledVideo {
  std::string video_id;
  std::vector<int> frame_indices;
  TensorPtr<float> frames;
  std::vector<FrameLabels> labels;

  int frame_count() const { return frames ? frames->dim(0) : 0; }
};

struct ManifestEntry {
  std::string video_id;
  int frame_count = 0;
  std::string frames_file;  // relative to the manifest directory
  std::string labels_file;
};

// Writes a deterministic synthetic dataset: a brightness strip encodes
// valence, a second strip arousal, and a 4x3 grid of patches encodes the 12
// AU bits; the expression class is popcount(AUs) mod 8 by construction.
// Produces per-video frame tensors and label CSVs, manifest.csv over all
// videos, and an 80/20 video-level train/val manifest pair. A
// sentinel_fraction > 0 masks one label group per selected frame.
void generate_synthetic(int n_videos, int frames_per_video, int image_size, std::uint64_t seed,
                        double sentinel_fraction, const std::string& out_dir);

std::vector<ManifestEntry> load_manifest(const std::string& path);
std::vector<LabeledVideo> load_dataset(const std::string& manifest_path);

void write_labels_csv(const std::string& path, const std::string& video_id,
                      const std::vector<int>& frame_indices,
                      const std::vector<FrameLabels>& labels);

// Drops every frame with any invalid label group; videos left with zero
// frames disappear from the result.
LabeledVideo sanitize_video(const LabeledVideo& v);
std::vector<LabeledVideo> sanitize_videos(const std::vector<LabeledVideo>& videos);

// Ground-truth construction for one synthetic frame, exposed for tests.
struct SynthVideoPlan {
  double omega_v = 0, phase_v = 0, omega_a = 0, phase_a = 0;
  std::vector<std::array<int, kNumAUs>> block_aus;  // one pattern per 4-frame block
};

FrameLabels synth_frame_labels(const SynthVideoPlan& plan, int t);

}  // namespace tam
