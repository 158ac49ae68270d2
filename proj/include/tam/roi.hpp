#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "tam/config.hpp"
#include "tam/params.hpp"
#include "tam/tensor.hpp"

namespace tam {

// Region-of-interest feature extraction: a small conv backbone, a 3-layer
// attention stack producing U sigmoid maps, and a distinct linear encoder
// per region. Output is U region vectors of width D per image.
template <class T>
class RoiExtractor {
 public:
  RoiExtractor(const ModelConfig& cfg, ParamRegistry<T>& params, Rng& rng)
      : u_(cfg.u), d_(cfg.d), image_size_(cfg.image_size) {
    const auto widths = cfg.backbone_widths();
    int in_c = 3;
    for (std::size_t s = 0; s < widths.size(); ++s) {
      const int out_c = widths[s];
      auto w = Tensor<T>::make({out_c, in_c, 3, 3});
      init_normal(w, rng, 1.0 / std::sqrt(static_cast<double>(in_c) * 9.0));
      auto b = Tensor<T>::make({out_c});
      const std::string stem = "roi.backbone.conv" + std::to_string(s);
      bk_w_.push_back(params.add(stem + ".weight", w));
      bk_b_.push_back(params.add(stem + ".bias", b));
      in_c = out_c;
    }
    cf_ = in_c;

    const int mid = std::max(1, cf_ / 2);
    const int att_in[3] = {cf_, mid, mid};
    const int att_out[3] = {mid, mid, u_};
    const int att_k[3] = {3, 3, 1};
    for (int s = 0; s < 3; ++s) {
      auto w = Tensor<T>::make({att_out[s], att_in[s], att_k[s], att_k[s]});
      init_normal(w, rng,
                  1.0 / std::sqrt(static_cast<double>(att_in[s]) * att_k[s] * att_k[s]));
      auto b = Tensor<T>::make({att_out[s]});
      const std::string stem = "roi.att.conv" + std::to_string(s);
      att_w_.push_back(params.add(stem + ".weight", w));
      att_b_.push_back(params.add(stem + ".bias", b));
    }

    for (int r = 0; r < u_; ++r) {
      auto w = Tensor<T>::make({d_, cf_});
      init_normal(w, rng, 1.0 / std::sqrt(static_cast<double>(cf_)));
      auto b = Tensor<T>::make({d_});
      const std::string stem = "roi.enc." + std::to_string(r);
      enc_w_.push_back(params.add(stem + ".weight", w));
      enc_b_.push_back(params.add(stem + ".bias", b));
    }
  }

  // [3 x S x S] image -> [C_f x H_f x W_f] feature map.
  TensorPtr<T> backbone_forward(const TensorPtr<T>& image) const {
    if (image->rank() != 3 || image->dim(0) != 3 || image->dim(1) != image_size_ ||
        image->dim(2) != image_size_) {
      throw std::invalid_argument("backbone_forward: expected [3x" + std::to_string(image_size_) +
                                  "x" + std::to_string(image_size_) + "] image, got " +
                                  shape_str(image->shape));
    }
    TensorPtr<T> x = image;
    for (std::size_t s = 0; s < bk_w_.size(); ++s)
      x = relu(add_channel_bias(conv2d(x, bk_w_[s], 2, 1), bk_b_[s]));
    return x;
  }

  // Feature map -> U sigmoid attention maps over the same spatial grid.
  TensorPtr<T> attention_map_forward(const TensorPtr<T>& fm) const {
    auto x = relu(add_channel_bias(conv2d(fm, att_w_[0], 1, 1), att_b_[0]));
    x = relu(add_channel_bias(conv2d(x, att_w_[1], 1, 1), att_b_[1]));
    x = add_channel_bias(conv2d(x, att_w_[2], 1, 0), att_b_[2]);
    return sigmoid(x);
  }

  // Mass-normalized attention pooling per region, then the region's own
  // linear encoder: rows are W_u * pooled_u + b_u. Output [U x D].
  TensorPtr<T> region_encode(const TensorPtr<T>& fm, const TensorPtr<T>& att) const {
    if (fm->rank() != 3 || att->rank() != 3 || fm->dim(1) != att->dim(1) ||
        fm->dim(2) != att->dim(2)) {
      throw std::invalid_argument("region_encode: spatial dims disagree: " + shape_str(fm->shape) +
                                  " vs " + shape_str(att->shape));
    }
    if (att->dim(0) != u_) {
      throw std::invalid_argument("region_encode: expected " + std::to_string(u_) +
                                  " attention maps, got " + shape_str(att->shape));
    }
    const int hw = fm->dim(1) * fm->dim(2);
    auto fm2d = reshape(fm, {fm->dim(0), hw});
    std::vector<TensorPtr<T>> rows;
    rows.reserve(static_cast<std::size_t>(u_));
    for (int r = 0; r < u_; ++r) {
      auto att_r = reshape(slice_axis0(att, r), {hw});
      auto pooled = sdiv(matvec(fm2d, att_r), sum(att_r));
      rows.push_back(add(matvec(enc_w_[static_cast<std::size_t>(r)], pooled),
                         enc_b_[static_cast<std::size_t>(r)]));
    }
    return stack_rows(rows);
  }

  TensorPtr<T> forward(const TensorPtr<T>& image) const {
    auto fm = backbone_forward(image);
    return region_encode(fm, attention_map_forward(fm));
  }

  int feature_channels() const { return cf_; }

 private:
  int u_, d_, image_size_, cf_ = 0;
  std::vector<TensorPtr<T>> bk_w_, bk_b_;
  std::vector<TensorPtr<T>> att_w_, att_b_;
  std::vector<TensorPtr<T>> enc_w_, enc_b_;
};

}  // namespace tam
