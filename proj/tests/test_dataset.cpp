#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "doctest.h"
#include "tam/dataset.hpp"
#include "tam/smoothing.hpp"
#include "tam/tensor.hpp"

namespace fs = std::filesystem;

using tam::FrameLabels;
using tam::LabeledVideo;
using tam::Tensor;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const char* name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string str() const { return path.string(); }
  std::string file(const char* name) const { return (path / name).string(); }
};

std::string read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  REQUIRE(is);
  return std::string(std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>());
}

// a 12-frame single-pixel-image video with three invalid frames (2, 5, 9)
LabeledVideo crafted_video() {
  LabeledVideo v;
  v.video_id = "crafted";
  v.frames = Tensor<float>::make({12, 3, 8, 8});
  for (int t = 0; t < 12; ++t) {
    v.frame_indices.push_back(t);
    FrameLabels l;
    l.valence = 0.1f * static_cast<float>(t);
    l.arousal = -0.05f * static_cast<float>(t);
    l.expr = t % tam::kNumExprClasses;
    for (auto& a : l.aus) a = t % 2;
    v.labels.push_back(l);
  }
  v.labels[2].expr = tam::kExprSentinel;
  v.labels[5].valence = tam::kVaSentinel;
  v.labels[9].aus[7] = tam::kAuSentinel;
  return v;
}

}  // namespace

TEST_CASE("generation is deterministic: same seed gives byte-identical output") {
  TempDir a("tam_gen_a"), b("tam_gen_b");
  tam::generate_synthetic(3, 8, 16, 99, 0.25, a.str());
  tam::generate_synthetic(3, 8, 16, 99, 0.25, b.str());
  std::set<std::string> names;
  for (const auto& e : fs::directory_iterator(a.path)) names.insert(e.path().filename().string());
  REQUIRE(names.size() == 3 * 2 + 3);  // frames + labels per video, 3 manifests
  for (const auto& n : names) {
    INFO(n);
    CHECK(read_file((a.path / n).string()) == read_file((b.path / n).string()));
  }
  TempDir c("tam_gen_c");
  tam::generate_synthetic(3, 8, 16, 100, 0.25, c.str());
  CHECK(read_file(a.file("vid000.frames.tamt")) != read_file(c.file("vid000.frames.tamt")));
}

TEST_CASE("generated data round-trips through the loader") {
  TempDir dir("tam_gen_rt");
  tam::generate_synthetic(4, 12, 16, 7, 0.0, dir.str());
  auto videos = tam::load_dataset(dir.file("manifest.csv"));
  REQUIRE(videos.size() == 4);
  for (const auto& v : videos) {
    CHECK(v.frame_count() == 12);
    CHECK(v.frames->shape == std::vector<int>{12, 3, 16, 16});
    CHECK(v.labels.size() == 12);
    for (float px : v.frames->data) {
      CHECK(px >= 0.0f);
      CHECK(px <= 1.0f);
    }
    for (const auto& l : v.labels) {
      CHECK(l.all_valid());
      CHECK(l.valence >= -0.8f);
      CHECK(l.valence <= 0.8f);
      int active = 0;
      for (int a : l.aus) active += a;
      CHECK(l.expr == active % tam::kNumExprClasses);
    }
  }
  // with no sentinels, sanitizing changes nothing
  auto clean = tam::sanitize_videos(videos);
  REQUIRE(clean.size() == videos.size());
  for (std::size_t i = 0; i < clean.size(); ++i) {
    CHECK(clean[i].frames->data == videos[i].frames->data);
    CHECK(clean[i].frame_indices == videos[i].frame_indices);
  }
}

TEST_CASE("sentinel masking survives the CSV round trip") {
  TempDir dir("tam_gen_sent");
  tam::generate_synthetic(4, 32, 16, 11, 0.5, dir.str());
  auto videos = tam::load_dataset(dir.file("manifest.csv"));
  int masked = 0, va_m = 0, expr_m = 0, au_m = 0;
  for (const auto& v : videos)
    for (const auto& l : v.labels) {
      if (l.all_valid()) continue;
      ++masked;
      if (!l.va_valid()) {
        ++va_m;
        CHECK(l.valence == tam::kVaSentinel);
        CHECK(l.arousal == tam::kVaSentinel);
      } else if (!l.expr_valid()) {
        ++expr_m;
        CHECK(l.expr == tam::kExprSentinel);
      } else {
        ++au_m;
        for (int a : l.aus) CHECK(a == tam::kAuSentinel);
      }
    }
  // 128 frames at 50%: all three mask kinds occur
  CHECK(masked > 30);
  CHECK(va_m > 0);
  CHECK(expr_m > 0);
  CHECK(au_m > 0);
}

TEST_CASE("train/val manifests split videos 80/20 in order") {
  TempDir dir("tam_gen_split");
  tam::generate_synthetic(5, 4, 8, 1, 0.0, dir.str());
  auto all = tam::load_manifest(dir.file("manifest.csv"));
  auto train = tam::load_manifest(dir.file("manifest_train.csv"));
  auto val = tam::load_manifest(dir.file("manifest_val.csv"));
  REQUIRE(all.size() == 5);
  REQUIRE(train.size() == 4);
  REQUIRE(val.size() == 1);
  CHECK(train[0].video_id == "vid000");
  CHECK(val[0].video_id == "vid004");

  TempDir one("tam_gen_one");
  tam::generate_synthetic(1, 4, 8, 1, 0.0, one.str());
  CHECK(tam::load_manifest(one.file("manifest_train.csv")).size() == 1);
  CHECK(tam::load_manifest(one.file("manifest_val.csv")).empty());
}

TEST_CASE("generator validates its arguments") {
  TempDir dir("tam_gen_bad");
  CHECK_THROWS_WITH_AS(tam::generate_synthetic(0, 4, 16, 1, 0, dir.str()),
                       doctest::Contains("n_videos"), std::invalid_argument);
  CHECK_THROWS_WITH_AS(tam::generate_synthetic(1, 4, 20, 1, 0, dir.str()),
                       doctest::Contains("multiple of 8"), std::invalid_argument);
  CHECK_THROWS_WITH_AS(tam::generate_synthetic(1, 4, 16, 1, 1.5, dir.str()),
                       doctest::Contains("sentinel_fraction"), std::invalid_argument);
}

TEST_CASE("loader errors name the offending file") {
  TempDir dir("tam_load_err");
  CHECK_THROWS_WITH_AS(tam::load_dataset(dir.file("manifest.csv")),
                       doctest::Contains("manifest.csv"), std::runtime_error);

  tam::generate_synthetic(1, 4, 8, 1, 0.0, dir.str());
  fs::remove(dir.file("vid000.frames.tamt"));
  CHECK_THROWS_WITH_AS(tam::load_dataset(dir.file("manifest.csv")),
                       doctest::Contains("vid000.frames.tamt"), std::runtime_error);
}

TEST_CASE("malformed label CSVs fail with file and line") {
  TempDir dir("tam_load_bad");
  tam::generate_synthetic(1, 4, 8, 1, 0.0, dir.str());
  {
    std::ofstream os(dir.file("vid000.labels.csv"), std::ios::app);
    os << "vid000,9,not_a_number,0,0,0,0,0,0,0,0,0,0,0,0,0\n";
  }
  CHECK_THROWS_WITH_AS(tam::load_dataset(dir.file("manifest.csv")),
                       doctest::Contains("labels.csv:6"), std::runtime_error);
}

TEST_CASE("loader cross-checks manifest frame counts and index order") {
  TempDir dir("tam_load_count");
  tam::generate_synthetic(1, 4, 8, 1, 0.0, dir.str());
  {
    std::ofstream os(dir.file("manifest.csv"));
    os << "video_id,frame_count,frames_file,labels_file\n";
    os << "vid000,5,vid000.frames.tamt,vid000.labels.csv\n";
  }
  CHECK_THROWS_WITH_AS(tam::load_dataset(dir.file("manifest.csv")),
                       doctest::Contains("manifest says 5"), std::runtime_error);
}

TEST_CASE("sanitizing drops exactly the frames with any invalid group") {
  auto v = crafted_video();
  // stamp each frame's first pixel so surviving frames are identifiable
  for (int t = 0; t < 12; ++t)
    v.frames->data[static_cast<std::size_t>(t) * 3 * 8 * 8] = static_cast<float>(t);

  auto clean = tam::sanitize_video(v);
  const std::vector<int> expect = {0, 1, 3, 4, 6, 7, 8, 10, 11};
  REQUIRE(clean.frame_count() == 9);
  CHECK(clean.frame_indices == expect);
  for (std::size_t i = 0; i < expect.size(); ++i) {
    CHECK(clean.frames->data[i * 3 * 8 * 8] == static_cast<float>(expect[i]));
    CHECK(clean.labels[i].all_valid());
  }

  // 9 surviving frames is below the 10-frame floor for training
  auto kept = tam::filter_short_sequences(std::vector<LabeledVideo>{clean});
  CHECK(kept.empty());
}

TEST_CASE("videos losing every frame disappear from the sanitized set") {
  LabeledVideo v;
  v.video_id = "allbad";
  v.frames = Tensor<float>::make({2, 3, 8, 8});
  v.frame_indices = {0, 1};
  v.labels.resize(2);  // default labels are fully sentinel
  auto out = tam::sanitize_videos({v});
  CHECK(out.empty());
}

TEST_CASE("label CSV writer and loader agree on sentinel encoding") {
  TempDir dir("tam_labels_rt");
  auto v = crafted_video();
  tam::write_labels_csv(dir.file("x.csv"), "crafted", v.frame_indices, v.labels);
  const auto text = read_file(dir.file("x.csv"));
  CHECK(text.find(",-5,") != std::string::npos);  // masked valence
  CHECK(text.find(",-1,") != std::string::npos);  // masked expression / AU bit
  CHECK(text.substr(0, 26) == "video_id,frame_idx,valence");
}
