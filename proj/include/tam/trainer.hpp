#pragma once

#include <string>
#include <vector>

#include "tam/config.hpp"
#include "tam/dataset.hpp"
#include "tam/metrics.hpp"
#include "tam/model.hpp"

namespace tam {

// Per-frame decisions from one forward pass: AUs thresholded at 0.5 on the
// sigmoid output, expression argmaxed, valence/arousal straight from the
// tanh head.
std::vector<FramePrediction> predict_video(const Model<float>& model, const LabeledVideo& video);

// Pools every video's frames and scores them jointly.
MetricReport evaluate_dataset(const Model<float>& model, const std::vector<LabeledVideo>& videos,
                              const std::string& formula);

struct TrainResult {
  MetricReport final_report;   // train-set metrics at the last epoch run
  double best_composite = 0;
  int epochs_run = 0;
  std::string best_checkpoint;  // paths under out_dir
  std::string last_checkpoint;
  std::string log_file;
};

// Full training run: sanitize + drop short videos, then per epoch iterate
// videos in manifest order (whole videos, or contiguous chunks when
// chunk_len is set), average the joint loss per optimizer step, Adam, and
// log per-epoch loss plus train-set metrics as CSV. Checkpoints are written
// for the best-composite epoch and the final state. Stops early once
// target_composite (if > 0) is reached.
TrainResult train(const ModelConfig& config, const std::string& manifest_path,
                  const std::string& out_dir);

void predictions_to_csv(const Model<float>& model, const std::vector<LabeledVideo>& videos,
                        const std::string& out_path);

// Two rows per frame: the token-mean of each transformer block's output
// ("a" then "b"), D values each. Single-perspective models emit one row.
void export_embeddings(const Model<float>& model, const std::vector<LabeledVideo>& videos,
                       const std::string& out_path);

}  // namespace tam
