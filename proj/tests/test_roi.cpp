#include <cmath>

#include "doctest.h"
#include "tam/config.hpp"
#include "tam/params.hpp"
#include "tam/rng.hpp"
#include "tam/roi.hpp"
#include "tam/tensor.hpp"

using tam::ModelConfig;
using tam::ParamRegistry;
using tam::RoiExtractor;
using tam::Tensor;
using tam::TensorPtr;

namespace {

ModelConfig small_config() {
  ModelConfig cfg;
  cfg.u = 4;
  cfg.d = 5;
  cfg.image_size = 16;
  cfg.backbone_channels = 8;
  cfg.backbone_stages = 3;
  cfg.seed = 11;
  return cfg;
}

struct Fixture {
  ModelConfig cfg = small_config();
  ParamRegistry<double> params;
  tam::Rng rng{42};
  RoiExtractor<double> roi{cfg, params, rng};
};

TensorPtr<double> random_image(const ModelConfig& cfg, tam::Rng& rng) {
  auto img = Tensor<double>::make({3, cfg.image_size, cfg.image_size});
  for (auto& v : img->data) v = rng.uniform();
  return img;
}

}  // namespace

TEST_CASE("backbone halves the grid per stage and ends at the configured width") {
  Fixture f;
  auto fm = f.roi.backbone_forward(random_image(f.cfg, f.rng));
  CHECK(fm->shape == std::vector<int>{8, 2, 2});
  CHECK(f.roi.feature_channels() == 8);
  CHECK(f.cfg.feature_map_size() == 2);

  auto bad = Tensor<double>::make({3, 8, 8});
  CHECK_THROWS_WITH_AS(f.roi.backbone_forward(bad), doctest::Contains("[3x8x8]"),
                       std::invalid_argument);
}

TEST_CASE("zero image with zero biases gives a zero feature map") {
  Fixture f;
  for (const auto& name : f.params.names())
    if (name.find("bias") != std::string::npos)
      for (auto& v : f.params.get(name)->data) v = 0;
  auto fm = f.roi.backbone_forward(Tensor<double>::make({3, 16, 16}));
  for (double v : fm->data) CHECK(v == 0.0);
}

TEST_CASE("attention maps stay inside (0, 1) and zeroed final conv gives 0.5 everywhere") {
  Fixture f;
  auto fm = f.roi.backbone_forward(random_image(f.cfg, f.rng));
  auto att = f.roi.attention_map_forward(fm);
  CHECK(att->shape == std::vector<int>{f.cfg.u, 2, 2});
  for (double v : att->data) {
    CHECK(v > 0.0);
    CHECK(v < 1.0);
  }

  for (auto& v : f.params.get("roi.att.conv2.weight")->data) v = 0;
  for (auto& v : f.params.get("roi.att.conv2.bias")->data) v = 0;
  auto flat = f.roi.attention_map_forward(fm);
  for (double v : flat->data) CHECK(v == 0.5);
}

TEST_CASE("uniform attention pools to the spatial mean") {
  Fixture f;
  tam::Rng rng(7);
  auto fm = Tensor<double>::make({8, 2, 2});
  for (auto& v : fm->data) v = rng.normal();

  // identity-like encoders: W = I rows (d <= cf here), b = 0
  for (int r = 0; r < f.cfg.u; ++r) {
    auto w = f.params.get("roi.enc." + std::to_string(r) + ".weight");
    for (auto& v : w->data) v = 0;
    for (int i = 0; i < f.cfg.d; ++i) w->data[static_cast<std::size_t>(i * 8 + i)] = 1;
    for (auto& v : f.params.get("roi.enc." + std::to_string(r) + ".bias")->data) v = 0;
  }
  auto att = Tensor<double>::full({f.cfg.u, 2, 2}, 0.37);
  auto out = f.roi.region_encode(fm, att);
  REQUIRE(out->shape == std::vector<int>{f.cfg.u, f.cfg.d});
  for (int r = 0; r < f.cfg.u; ++r) {
    for (int c = 0; c < f.cfg.d; ++c) {
      double mean = 0;
      for (int p = 0; p < 4; ++p) mean += fm->data[static_cast<std::size_t>(c * 4 + p)];
      mean /= 4;
      CHECK(out->data[static_cast<std::size_t>(r * f.cfg.d + c)] ==
            doctest::Approx(mean).epsilon(1e-12));
    }
  }
}

TEST_CASE("attention concentrated on one cell pools that cell alone") {
  Fixture f;
  tam::Rng rng(8);
  auto fm = Tensor<double>::make({8, 2, 2});
  for (auto& v : fm->data) v = rng.uniform(-1, 1);
  for (int r = 0; r < f.cfg.u; ++r) {
    auto w = f.params.get("roi.enc." + std::to_string(r) + ".weight");
    for (auto& v : w->data) v = 0;
    for (int i = 0; i < f.cfg.d; ++i) w->data[static_cast<std::size_t>(i * 8 + i)] = 1;
    for (auto& v : f.params.get("roi.enc." + std::to_string(r) + ".bias")->data) v = 0;
  }
  // near-delta mass on spatial cell 3 for every region
  auto att = Tensor<double>::full({f.cfg.u, 2, 2}, 1e-7);
  for (int r = 0; r < f.cfg.u; ++r) att->data[static_cast<std::size_t>(r * 4 + 3)] = 1.0;
  auto out = f.roi.region_encode(fm, att);
  for (int r = 0; r < f.cfg.u; ++r)
    for (int c = 0; c < f.cfg.d; ++c)
      CHECK(out->data[static_cast<std::size_t>(r * f.cfg.d + c)] ==
            doctest::Approx(fm->data[static_cast<std::size_t>(c * 4 + 3)]).epsilon(1e-3));
}

TEST_CASE("pooling is invariant to rescaling an attention map") {
  Fixture f;
  tam::Rng rng(9);
  auto fm = Tensor<double>::make({8, 2, 2});
  for (auto& v : fm->data) v = rng.normal();
  auto att = Tensor<double>::make({f.cfg.u, 2, 2});
  for (auto& v : att->data) v = rng.uniform(0.1, 0.9);
  auto scaled = Tensor<double>::make({f.cfg.u, 2, 2});
  for (std::size_t i = 0; i < att->data.size(); ++i) scaled->data[i] = att->data[i] * 5.0;

  auto a = f.roi.region_encode(fm, att);
  auto b = f.roi.region_encode(fm, scaled);
  for (std::size_t i = 0; i < a->data.size(); ++i)
    CHECK(a->data[i] == doctest::Approx(b->data[i]).epsilon(1e-12));
}

TEST_CASE("each region row depends only on its own encoder") {
  Fixture f;
  auto img = random_image(f.cfg, f.rng);
  auto before = f.roi.forward(img);
  auto w2 = f.params.get("roi.enc.2.weight");
  for (auto& v : w2->data) v += 0.5;
  auto after = f.roi.forward(img);
  for (int r = 0; r < f.cfg.u; ++r) {
    bool row_changed = false;
    for (int c = 0; c < f.cfg.d; ++c) {
      const auto i = static_cast<std::size_t>(r * f.cfg.d + c);
      if (before->data[i] != after->data[i]) row_changed = true;
    }
    CHECK(row_changed == (r == 2));
  }
}

TEST_CASE("region_encode validates map count and spatial agreement") {
  Fixture f;
  auto fm = Tensor<double>::make({8, 2, 2});
  CHECK_THROWS_WITH_AS(f.roi.region_encode(fm, Tensor<double>::make({3, 2, 2})),
                       doctest::Contains("attention maps"), std::invalid_argument);
  CHECK_THROWS_WITH_AS(f.roi.region_encode(fm, Tensor<double>::make({4, 4, 4})),
                       doctest::Contains("spatial"), std::invalid_argument);
}

TEST_CASE("default-size extractor produces the documented shapes") {
  ModelConfig cfg;
  cfg.seed = 3;
  ParamRegistry<float> params;
  tam::Rng rng(3);
  RoiExtractor<float> roi(cfg, params, rng);
  auto img = Tensor<float>::make({3, 32, 32});
  for (auto& v : img->data) v = 0.5f;
  auto fm = roi.backbone_forward(img);
  CHECK(fm->shape == std::vector<int>{64, 4, 4});
  auto tokens = roi.forward(img);
  CHECK(tokens->shape == std::vector<int>{24, 24});
}
