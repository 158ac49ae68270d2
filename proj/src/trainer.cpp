#include "tam/trainer.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "tam/adam.hpp"
#include "tam/checkpoint.hpp"
#include "tam/losses.hpp"
#include "tam/rng.hpp"
#include "tam/smoothing.hpp"

namespace fs = std::filesystem;

namespace tam {

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

struct Chunk {
  const LabeledVideo* video;
  int begin, end;  // frame range [begin, end)
  int len() const { return end - begin; }
};

// Contiguous chunks of at most max_len frames; a tail shorter than
// min_frames merges into the previous chunk so every chunk stays a valid
// smoothing sequence.
std::vector<Chunk> chunk_video(const LabeledVideo& v, int max_len, int min_frames) {
  std::vector<Chunk> chunks;
  const int t = v.frame_count();
  if (max_len <= 0 || t <= max_len) {
    chunks.push_back({&v, 0, t});
    return chunks;
  }
  for (int b = 0; b < t; b += max_len) chunks.push_back({&v, b, std::min(b + max_len, t)});
  if (chunks.size() > 1 && chunks.back().len() < min_frames) {
    chunks[chunks.size() - 2].end = chunks.back().end;
    chunks.pop_back();
  }
  return chunks;
}

TensorPtr<float> chunk_frames(const Chunk& c) {
  const auto& f = *c.video->frames;
  const int s1 = f.dim(1), s2 = f.dim(2), s3 = f.dim(3);
  const std::size_t block = static_cast<std::size_t>(s1) * s2 * s3;
  auto out = Tensor<float>::make({c.len(), s1, s2, s3});
  std::copy_n(f.data.begin() + static_cast<std::size_t>(c.begin) * block,
              static_cast<std::size_t>(c.len()) * block, out->data.begin());
  return out;
}

// Joint loss of Eq.-style objectives over one chunk: mean AU BCE + mean
// expression CE + the two-sided CCC loss over the chunk as a sequence.
TensorPtr<float> chunk_loss(const Model<float>& model, const Chunk& c) {
  auto out = model.forward_video(chunk_frames(c));
  const int t = c.len();

  std::vector<int> au_labels;
  au_labels.reserve(static_cast<std::size_t>(t) * kNumAUs);
  std::vector<int> expr_labels;
  expr_labels.reserve(static_cast<std::size_t>(t));
  auto label_v = Tensor<float>::make({t});
  auto label_a = Tensor<float>::make({t});
  for (int i = 0; i < t; ++i) {
    const auto& l = c.video->labels[static_cast<std::size_t>(c.begin + i)];
    if (!l.all_valid()) throw std::invalid_argument("chunk_loss: sentinel label (sanitize first)");
    for (int a : l.aus) au_labels.push_back(a);
    expr_labels.push_back(l.expr);
    label_v->data[i] = l.valence;
    label_a->data[i] = l.arousal;
  }

  auto l_au = au_bce_loss(out.au_logits, au_labels);
  auto l_expr = mean(ce_rows_with_labels(out.expr_logits, expr_labels));
  auto pred_v = reshape(slice_cols(out.va, 0, 1), {t});
  auto pred_a = reshape(slice_cols(out.va, 1, 1), {t});
  auto l_va = va_ccc_loss(pred_v, pred_a, label_v, label_a);
  return total_loss(l_au, l_expr, l_va);
}

}  // namespace

std::vector<FramePrediction> predict_video(const Model<float>& model, const LabeledVideo& video) {
  NoGradGuard ng;
  auto out = model.forward_video(video.frames);
  const int t = video.frame_count();
  std::vector<FramePrediction> preds(static_cast<std::size_t>(t));
  for (int i = 0; i < t; ++i) {
    auto& p = preds[static_cast<std::size_t>(i)];
    p.valence = out.va->data[static_cast<std::size_t>(i) * 2];
    p.arousal = out.va->data[static_cast<std::size_t>(i) * 2 + 1];
    const float* el = out.expr_logits->data.data() + static_cast<std::size_t>(i) * kNumExprClasses;
    p.expr = static_cast<int>(std::max_element(el, el + kNumExprClasses) - el);
    for (int a = 0; a < kNumAUs; ++a) {
      // sigmoid(x) >= 0.5 iff x >= 0
      p.aus[static_cast<std::size_t>(a)] =
          out.au_logits->data[static_cast<std::size_t>(i) * kNumAUs + a] >= 0 ? 1 : 0;
    }
  }
  return preds;
}

MetricReport evaluate_dataset(const Model<float>& model, const std::vector<LabeledVideo>& videos,
                              const std::string& formula) {
  std::vector<FramePrediction> preds;
  std::vector<FrameLabels> labels;
  for (const auto& v : videos) {
    auto vp = predict_video(model, v);
    preds.insert(preds.end(), vp.begin(), vp.end());
    labels.insert(labels.end(), v.labels.begin(), v.labels.end());
  }
  if (preds.empty()) throw std::runtime_error("evaluate: no frames to score");
  return compute_report(preds, labels, formula);
}

TrainResult train(const ModelConfig& config, const std::string& manifest_path,
                  const std::string& out_dir) {
  config.validate();
  auto videos = sanitize_videos(load_dataset(manifest_path));
  videos = filter_short_sequences(videos);
  if (videos.empty()) {
    throw std::runtime_error("train: no videos with >= 10 valid frames after sanitization");
  }

  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw std::runtime_error("cannot create directory " + out_dir + ": " + ec.message());

  Model<float> model(config);
  Adam<float> adam(model.params(), config.lr);
  Rng train_rng(config.seed);

  TrainResult res;
  res.log_file = (fs::path(out_dir) / "train_log.csv").string();
  res.best_checkpoint = (fs::path(out_dir) / "best.tamc").string();
  res.last_checkpoint = (fs::path(out_dir) / "last.tamc").string();
  std::ofstream log(res.log_file);
  if (!log) throw std::runtime_error("cannot open for writing: " + res.log_file);
  log << "epoch,loss,ccc_v,ccc_a,f1_expr_macro,f1_au_mean,composite\n";

  double best = -std::numeric_limits<double>::infinity();
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    double loss_sum = 0;
    std::size_t steps = 0;
    std::size_t vi = 0;
    while (vi < videos.size()) {
      const std::size_t batch_end = std::min(vi + static_cast<std::size_t>(config.batch_videos),
                                             videos.size());
      const double batch_n = static_cast<double>(batch_end - vi);
      model.params().zero_grad();
      double batch_loss = 0;
      for (; vi < batch_end; ++vi) {
        const auto chunks = chunk_video(videos[vi], config.chunk_len, 10);
        const double scale = 1.0 / (batch_n * static_cast<double>(chunks.size()));
        double video_loss = 0;
        for (const auto& c : chunks) {
          auto loss = chunk_loss(model, c);
          video_loss += static_cast<double>(loss->item());
          backward(mul_const(loss, scale));
        }
        batch_loss += video_loss / static_cast<double>(chunks.size());
      }
      adam.step();
      loss_sum += batch_loss / batch_n;
      ++steps;
    }
    const double epoch_loss = loss_sum / static_cast<double>(steps);

    res.final_report = evaluate_dataset(model, videos, config.composite_formula);
    res.epochs_run = epoch;
    const auto& r = res.final_report;
    log << epoch << "," << fmt(epoch_loss) << "," << fmt(r.ccc_v) << "," << fmt(r.ccc_a) << ","
        << fmt(r.f1_expr_macro) << "," << fmt(r.f1_au_mean) << "," << fmt(r.composite) << "\n";
    log.flush();

    if (r.composite > best) {
      best = r.composite;
      save_checkpoint(res.best_checkpoint, model, static_cast<std::uint64_t>(epoch),
                      train_rng.save_state(), &adam);
    }
    if (config.target_composite > 0 && r.composite >= config.target_composite) break;
  }
  res.best_composite = best;
  save_checkpoint(res.last_checkpoint, model, static_cast<std::uint64_t>(res.epochs_run),
                  train_rng.save_state(), &adam);
  if (!log) throw std::runtime_error("log write failed: " + res.log_file);
  return res;
}

void predictions_to_csv(const Model<float>& model, const std::vector<LabeledVideo>& videos,
                        const std::string& out_path) {
  std::ofstream os(out_path);
  if (!os) throw std::runtime_error("cannot open for writing: " + out_path);
  os << "video_id,frame_idx,valence,arousal,expr";
  for (int a = 1; a <= kNumAUs; ++a) os << ",au" << a;
  os << "\n";
  for (const auto& v : videos) {
    const auto preds = predict_video(model, v);
    for (std::size_t i = 0; i < preds.size(); ++i) {
      const auto& p = preds[i];
      os << v.video_id << "," << v.frame_indices[i] << "," << fmt(p.valence) << ","
         << fmt(p.arousal) << "," << p.expr;
      for (int a : p.aus) os << "," << a;
      os << "\n";
    }
  }
  if (!os) throw std::runtime_error("write failed: " + out_path);
}

void export_embeddings(const Model<float>& model, const std::vector<LabeledVideo>& videos,
                       const std::string& out_path) {
  std::ofstream os(out_path);
  if (!os) throw std::runtime_error("cannot open for writing: " + out_path);
  const int d = model.config().d;
  os << "video_id,frame_idx,block";
  for (int i = 0; i < d; ++i) os << ",e" << i;
  os << "\n";
  NoGradGuard ng;
  for (const auto& v : videos) {
    auto out = model.forward_video(v.frames, true);
    for (int t = 0; t < v.frame_count(); ++t) {
      auto write_row = [&](const char* block, const TensorPtr<float>& m) {
        os << v.video_id << "," << v.frame_indices[static_cast<std::size_t>(t)] << "," << block;
        for (int i = 0; i < d; ++i)
          os << "," << fmt(m->data[static_cast<std::size_t>(t) * d + i]);
        os << "\n";
      };
      write_row("a", out.block_a_mean);
      if (out.block_b_mean) write_row("b", out.block_b_mean);
    }
  }
  if (!os) throw std::runtime_error("write failed: " + out_path);
}

}  // namespace tam
