#include "tam/dataset.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "tam/rng.hpp"
#include "tam/serialize.hpp"

namespace fs = std::filesystem;

namespace tam {

namespace {

std::string fmt_float(float v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", static_cast<double>(v));
  return buf;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  fields.push_back(cur);
  return fields;
}

[[noreturn]] void parse_fail(const std::string& file, std::size_t line_no, const std::string& what) {
  throw std::runtime_error(file + ":" + std::to_string(line_no) + ": " + what);
}

int parse_int(const std::string& s, const std::string& file, std::size_t line_no) {
  try {
    std::size_t pos = 0;
    const int v = std::stoi(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    parse_fail(file, line_no, "expected integer, got '" + s + "'");
  }
}

float parse_float(const std::string& s, const std::string& file, std::size_t line_no) {
  try {
    std::size_t pos = 0;
    const float v = std::stof(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    parse_fail(file, line_no, "expected real number, got '" + s + "'");
  }
}

std::string labels_header() {
  std::string h = "video_id,frame_idx,valence,arousal,expr";
  for (int a = 1; a <= kNumAUs; ++a) h += ",au" + std::to_string(a);
  return h;
}

}  // namespace

FrameLabels synth_frame_labels(const SynthVideoPlan& plan, int t) {
  FrameLabels l;
  l.valence = static_cast<float>(0.8 * std::sin(plan.omega_v * t + plan.phase_v));
  l.arousal = static_cast<float>(0.8 * std::sin(plan.omega_a * t + plan.phase_a));
  l.aus = plan.block_aus[static_cast<std::size_t>(t / 4) % plan.block_aus.size()];
  const int active = std::accumulate(l.aus.begin(), l.aus.end(), 0);
  l.expr = active % kNumExprClasses;
  return l;
}

void write_labels_csv(const std::string& path, const std::string& video_id,
                      const std::vector<int>& frame_indices,
                      const std::vector<FrameLabels>& labels) {
  if (frame_indices.size() != labels.size()) {
    throw std::invalid_argument("write_labels_csv: index/label count mismatch");
  }
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  os << labels_header() << "\n";
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto& l = labels[i];
    os << video_id << "," << frame_indices[i] << "," << fmt_float(l.valence) << ","
       << fmt_float(l.arousal) << "," << l.expr;
    for (int a : l.aus) os << "," << a;
    os << "\n";
  }
  if (!os) throw std::runtime_error("write failed: " + path);
}

namespace {

std::vector<std::pair<int, FrameLabels>> load_labels_csv(const std::string& path,
                                                         const std::string& expect_video) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open: " + path);
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(is, line)) parse_fail(path, 1, "empty file");
  ++line_no;
  if (split_csv_line(line) != split_csv_line(labels_header())) {
    parse_fail(path, line_no, "bad header, expected '" + labels_header() + "'");
  }
  std::vector<std::pair<int, FrameLabels>> rows;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 5 + kNumAUs) {
      parse_fail(path, line_no, "expected " + std::to_string(5 + kNumAUs) + " fields, got " +
                                    std::to_string(f.size()));
    }
    if (f[0] != expect_video) {
      parse_fail(path, line_no, "video_id '" + f[0] + "' does not match manifest entry '" +
                                    expect_video + "'");
    }
    FrameLabels l;
    const int idx = parse_int(f[1], path, line_no);
    l.valence = parse_float(f[2], path, line_no);
    l.arousal = parse_float(f[3], path, line_no);
    l.expr = parse_int(f[4], path, line_no);
    for (int a = 0; a < kNumAUs; ++a) {
      const int bit = parse_int(f[static_cast<std::size_t>(5 + a)], path, line_no);
      if (bit != 0 && bit != 1 && bit != kAuSentinel) {
        parse_fail(path, line_no, "AU value must be 0, 1 or -1, got " + std::to_string(bit));
      }
      l.aus[static_cast<std::size_t>(a)] = bit;
    }
    if (l.expr != kExprSentinel && (l.expr < 0 || l.expr >= kNumExprClasses)) {
      parse_fail(path, line_no, "expr must be in [0,8) or -1, got " + std::to_string(l.expr));
    }
    rows.emplace_back(idx, l);
  }
  return rows;
}

}  // namespace

void generate_synthetic(int n_videos, int frames_per_video, int image_size, std::uint64_t seed,
                        double sentinel_fraction, const std::string& out_dir) {
  if (n_videos < 1) throw std::invalid_argument("generate_synthetic: n_videos must be >= 1");
  if (frames_per_video < 1) {
    throw std::invalid_argument("generate_synthetic: frames_per_video must be >= 1");
  }
  if (image_size < 8 || image_size % 8 != 0) {
    throw std::invalid_argument("generate_synthetic: image_size must be a multiple of 8");
  }
  if (sentinel_fraction < 0 || sentinel_fraction > 1) {
    throw std::invalid_argument("generate_synthetic: sentinel_fraction must be in [0,1]");
  }
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw std::runtime_error("cannot create directory " + out_dir + ": " + ec.message());

  Rng rng(seed);
  const int s = image_size;
  const int strip_h = s / 8;        // valence rows [0, s/8), arousal [s/8, s/4)
  const int grid_top = s / 4;       // AU patch grid occupies the rest
  const int patch_h = (s - grid_top) / 3;
  const int patch_w = s / 4;

  std::vector<ManifestEntry> manifest;
  for (int v = 0; v < n_videos; ++v) {
    char idbuf[16];
    std::snprintf(idbuf, sizeof(idbuf), "vid%03d", v);
    const std::string video_id = idbuf;

    SynthVideoPlan plan;
    plan.omega_v = 2.0 * Rng::kPi * (0.5 + rng.uniform()) / 32.0;
    plan.phase_v = 2.0 * Rng::kPi * rng.uniform();
    plan.omega_a = 2.0 * Rng::kPi * (0.5 + rng.uniform()) / 32.0;
    plan.phase_a = 2.0 * Rng::kPi * rng.uniform();

    // one AU pattern per 4-frame block; target expression classes cycle
    // through a per-video shuffled order, and the pattern's popcount is
    // chosen congruent to the target class mod 8
    const int n_blocks = (frames_per_video + 3) / 4;
    std::vector<int> class_order(kNumExprClasses);
    std::iota(class_order.begin(), class_order.end(), 0);
    rng.shuffle(class_order);
    std::vector<int> au_order(kNumAUs);
    std::iota(au_order.begin(), au_order.end(), 0);
    for (int b = 0; b < n_blocks; ++b) {
      const int target = class_order[static_cast<std::size_t>(b % kNumExprClasses)];
      int count = target;
      if (count + kNumExprClasses <= kNumAUs && rng.below(2) == 1) count += kNumExprClasses;
      rng.shuffle(au_order);
      std::array<int, kNumAUs> aus{};
      for (int i = 0; i < count; ++i) aus[static_cast<std::size_t>(au_order[static_cast<std::size_t>(i)])] = 1;
      plan.block_aus.push_back(aus);
    }

    auto frames = Tensor<float>::make({frames_per_video, 3, s, s});
    std::vector<FrameLabels> labels;
    std::vector<int> indices;
    for (int t = 0; t < frames_per_video; ++t) {
      const FrameLabels l = synth_frame_labels(plan, t);
      labels.push_back(l);
      indices.push_back(t);
      const float val_level = (l.valence + 1.0f) / 2.0f;
      const float aro_level = (l.arousal + 1.0f) / 2.0f;
      for (int c = 0; c < 3; ++c)
        for (int y = 0; y < s; ++y)
          for (int x = 0; x < s; ++x) {
            float px;
            if (y < strip_h) {
              px = val_level;
            } else if (y < 2 * strip_h) {
              px = aro_level;
            } else if (y >= grid_top && y < grid_top + 3 * patch_h) {
              const int au = ((y - grid_top) / patch_h) * 4 + std::min(x / patch_w, 3);
              px = l.aus[static_cast<std::size_t>(au)] ? 0.9f : 0.1f;
            } else {
              px = 0.5f;
            }
            px += static_cast<float>((rng.uniform() - 0.5) * 0.04);
            frames->data[((static_cast<std::size_t>(t) * 3 + c) * s + y) * s + x] =
                std::clamp(px, 0.0f, 1.0f);
          }
    }

    if (sentinel_fraction > 0) {
      for (auto& l : labels) {
        if (rng.uniform() >= sentinel_fraction) continue;
        switch (rng.below(3)) {
          case 0: l.expr = kExprSentinel; break;
          case 1: l.valence = l.arousal = kVaSentinel; break;
          default: l.aus.fill(kAuSentinel); break;
        }
      }
    }

    const std::string frames_name = video_id + ".frames.tamt";
    const std::string labels_name = video_id + ".labels.csv";
    save_tensor_file((fs::path(out_dir) / frames_name).string(), *frames);
    write_labels_csv((fs::path(out_dir) / labels_name).string(), video_id, indices, labels);
    manifest.push_back({video_id, frames_per_video, frames_name, labels_name});
  }

  auto write_manifest = [&](const std::string& name, std::size_t from, std::size_t to) {
    std::ofstream os((fs::path(out_dir) / name).string());
    if (!os) throw std::runtime_error("cannot open for writing: " + name);
    os << "video_id,frame_count,frames_file,labels_file\n";
    for (std::size_t i = from; i < to; ++i) {
      const auto& e = manifest[i];
      os << e.video_id << "," << e.frame_count << "," << e.frames_file << "," << e.labels_file
         << "\n";
    }
  };
  const auto n = manifest.size();
  const std::size_t train_n = std::max<std::size_t>(1, n * 8 / 10);
  write_manifest("manifest.csv", 0, n);
  write_manifest("manifest_train.csv", 0, train_n);
  write_manifest("manifest_val.csv", train_n, n);
}

std::vector<ManifestEntry> load_manifest(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open: " + path);
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(is, line)) parse_fail(path, 1, "empty file");
  ++line_no;
  if (split_csv_line(line) !=
      std::vector<std::string>{"video_id", "frame_count", "frames_file", "labels_file"}) {
    parse_fail(path, line_no, "bad header, expected 'video_id,frame_count,frames_file,labels_file'");
  }
  std::vector<ManifestEntry> entries;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 4) parse_fail(path, line_no, "expected 4 fields, got " + std::to_string(f.size()));
    ManifestEntry e{f[0], parse_int(f[1], path, line_no), f[2], f[3]};
    if (e.frame_count < 1) parse_fail(path, line_no, "frame_count must be >= 1");
    entries.push_back(std::move(e));
  }
  return entries;
}

std::vector<LabeledVideo> load_dataset(const std::string& manifest_path) {
  const auto entries = load_manifest(manifest_path);
  const fs::path root = fs::path(manifest_path).parent_path();
  std::vector<LabeledVideo> videos;
  for (const auto& e : entries) {
    const std::string frames_path = (root / e.frames_file).string();
    const std::string labels_path = (root / e.labels_file).string();
    if (!fs::exists(frames_path)) throw std::runtime_error("missing frames file: " + frames_path);
    if (!fs::exists(labels_path)) throw std::runtime_error("missing labels file: " + labels_path);

    LabeledVideo v;
    v.video_id = e.video_id;
    v.frames = load_tensor_file<float>(frames_path);
    if (v.frames->rank() != 4 || v.frames->dim(1) != 3) {
      throw std::runtime_error(frames_path + ": expected a [T x 3 x S x S] tensor, got " +
                               shape_str(v.frames->shape));
    }
    if (v.frames->dim(0) != e.frame_count) {
      throw std::runtime_error(frames_path + ": manifest says " + std::to_string(e.frame_count) +
                               " frames, tensor has " + std::to_string(v.frames->dim(0)));
    }
    for (auto rows = load_labels_csv(labels_path, e.video_id); auto& [idx, l] : rows) {
      v.frame_indices.push_back(idx);
      v.labels.push_back(l);
    }
    if (static_cast<int>(v.labels.size()) != e.frame_count) {
      throw std::runtime_error(labels_path + ": manifest says " + std::to_string(e.frame_count) +
                               " frames, CSV has " + std::to_string(v.labels.size()));
    }
    for (std::size_t i = 1; i < v.frame_indices.size(); ++i) {
      if (v.frame_indices[i] <= v.frame_indices[i - 1]) {
        throw std::runtime_error(labels_path + ": frame indices must be strictly increasing");
      }
    }
    videos.push_back(std::move(v));
  }
  return videos;
}

LabeledVideo sanitize_video(const LabeledVideo& v) {
  const auto keep = valid_frame_indices(v.labels);
  LabeledVideo out;
  out.video_id = v.video_id;
  if (keep.empty()) return out;
  const int s1 = v.frames->dim(1), s2 = v.frames->dim(2), s3 = v.frames->dim(3);
  const std::size_t block = static_cast<std::size_t>(s1) * s2 * s3;
  out.frames = Tensor<float>::make({static_cast<int>(keep.size()), s1, s2, s3});
  for (std::size_t i = 0; i < keep.size(); ++i) {
    std::copy_n(v.frames->data.begin() + keep[i] * block, block,
                out.frames->data.begin() + i * block);
    out.frame_indices.push_back(v.frame_indices[keep[i]]);
    out.labels.push_back(v.labels[keep[i]]);
  }
  return out;
}

std::vector<LabeledVideo> sanitize_videos(const std::vector<LabeledVideo>& videos) {
  std::vector<LabeledVideo> out;
  for (const auto& v : videos) {
    auto sv = sanitize_video(v);
    if (sv.frame_count() > 0) out.push_back(std::move(sv));
  }
  return out;
}

}  // namespace tam
