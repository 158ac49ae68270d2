#pragma once

#include <cmath>
#include <memory>
#include <stdexcept>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "tam/config.hpp"
#include "tam/interaction.hpp"
#include "tam/labels.hpp"
#include "tam/params.hpp"
#include "tam/roi.hpp"
#include "tam/smoothing.hpp"
#include "tam/tensor.hpp"

namespace tam {

// The full per-video network: every frame runs ROI extraction and the
// interaction module; the per-frame task features are smoothed along time
// per task; FC heads emit 12 AU logits, 8 expression logits, and a
// tanh-bounded valence/arousal pair per frame.
template <class T>
class Model {
 public:
  struct VideoOutput {
    TensorPtr<T> au_logits;    // [T x 12]
    TensorPtr<T> expr_logits;  // [T x 8]
    TensorPtr<T> va;           // [T x 2], in (-1, 1)
    // pooled per-frame block outputs (token means, [T x D]) for embedding
    // export; block_b is null in the single-perspective configuration
    TensorPtr<T> block_a_mean, block_b_mean;
  };

  explicit Model(const ModelConfig& cfg)
      : cfg_(cfg), init_rng_(cfg.seed ^ 0x9e3779b97f4a7c15ull) {
    cfg_.validate();
    roi_ = std::make_unique<RoiExtractor<T>>(cfg_, params_, init_rng_);
    interaction_ = std::make_unique<InteractionModule<T>>(cfg_, params_, init_rng_);

    const int w = cfg_.rep_width();
    // theta chosen so softplus(theta) = 1
    const double theta0 = std::log(std::exp(1.0) - 1.0);
    for (const char* task : {"au", "expr", "va"}) {
      SmootherParams<T> sp;
      sp.theta_mu = params_.add(std::string("smooth.") + task + ".theta_mu",
                                Tensor<T>::full({1}, static_cast<T>(theta0)));
      sp.f_init = params_.add(std::string("smooth.") + task + ".f_init", Tensor<T>::make({w}));
      smoothers_.push_back(sp);
    }

    auto head = [&](const std::string& name, int out) {
      auto wt = Tensor<T>::make({w, out});
      init_normal(wt, init_rng_, 1.0 / std::sqrt(static_cast<double>(w)));
      auto b = Tensor<T>::make({out});
      return std::pair{params_.add("head." + name + ".weight", wt),
                       params_.add("head." + name + ".bias", b)};
    };
    std::tie(head_au_w_, head_au_b_) = head("au", kNumAUs);
    std::tie(head_expr_w_, head_expr_b_) = head("expr", kNumExprClasses);
    std::tie(head_va_w_, head_va_b_) = head("va", 2);
  }

  // images: [T x 3 x S x S] frame stack (no gradient needed on pixels).
  VideoOutput forward_video(const TensorPtr<T>& images, bool want_block_means = false) const {
    if (images->rank() != 4 || images->dim(1) != 3 || images->dim(2) != cfg_.image_size ||
        images->dim(3) != cfg_.image_size) {
      throw std::invalid_argument("forward_video: expected [T x 3 x " +
                                  std::to_string(cfg_.image_size) + " x " +
                                  std::to_string(cfg_.image_size) + "] frames, got " +
                                  shape_str(images->shape));
    }
    const int t_len = images->dim(0);
    std::vector<TensorPtr<T>> au_rows, expr_rows, va_rows, a_rows, b_rows;
    for (int t = 0; t < t_len; ++t) {
      auto tokens = roi_->forward(slice_axis0(images, t));
      auto inter = interaction_->forward(tokens);
      au_rows.push_back(inter.au);
      expr_rows.push_back(inter.expr);
      va_rows.push_back(inter.va);
      if (want_block_means) {
        a_rows.push_back(token_mean(inter.block_a));
        if (inter.block_b) b_rows.push_back(token_mean(inter.block_b));
      }
    }
    auto f_au = smooth_task(stack_rows(au_rows), 0, t_len);
    auto f_expr = smooth_task(stack_rows(expr_rows), 1, t_len);
    auto f_va = smooth_task(stack_rows(va_rows), 2, t_len);

    VideoOutput out;
    out.au_logits = add_rowvec(matmul(f_au, head_au_w_), head_au_b_);
    out.expr_logits = add_rowvec(matmul(f_expr, head_expr_w_), head_expr_b_);
    out.va = tanh(add_rowvec(matmul(f_va, head_va_w_), head_va_b_));
    if (want_block_means) {
      out.block_a_mean = stack_rows(a_rows);
      if (!b_rows.empty()) out.block_b_mean = stack_rows(b_rows);
    }
    return out;
  }

  const ModelConfig& config() const { return cfg_; }
  ParamRegistry<T>& params() { return params_; }
  const ParamRegistry<T>& params() const { return params_; }
  const RoiExtractor<T>& roi() const { return *roi_; }
  const InteractionModule<T>& interaction() const { return *interaction_; }
  const SmootherParams<T>& smoother(int task) const {
    return smoothers_[static_cast<std::size_t>(task)];
  }

 private:
  TensorPtr<T> smooth_task(const TensorPtr<T>& features, int task, int t_len) const {
    const auto& sp = smoothers_[static_cast<std::size_t>(task)];
    if (cfg_.smoothing == "none") return features;
    if (cfg_.smoothing == "bts" && t_len >= 2) return smooth_bidirectional(features, sp);
    return smooth_sequence(features, sp);
  }

  static TensorPtr<T> token_mean(const TensorPtr<T>& tokens) {
    auto col_sums = matvec(transpose(tokens), Tensor<T>::full({tokens->dim(0)}, T(1)));
    return mul_const(col_sums, 1.0 / static_cast<double>(tokens->dim(0)));
  }

  ModelConfig cfg_;
  Rng init_rng_;
  ParamRegistry<T> params_;
  std::unique_ptr<RoiExtractor<T>> roi_;
  std::unique_ptr<InteractionModule<T>> interaction_;
  std::vector<SmootherParams<T>> smoothers_;
  TensorPtr<T> head_au_w_, head_au_b_, head_expr_w_, head_expr_b_, head_va_w_, head_va_b_;
};

}  // namespace tam
