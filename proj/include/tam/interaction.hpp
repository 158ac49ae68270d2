#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "tam/config.hpp"
#include "tam/params.hpp"
#include "tam/tensor.hpp"

namespace tam {

// Fixed sinusoidal positional table: PE[p, 2i] = sin(p / 10000^{2i/D}),
// PE[p, 2i+1] = cos of the same argument.
template <class T>
TensorPtr<T> positional_encoding(int u, int d) {
  auto pe = Tensor<T>::make({u, d});
  for (int p = 0; p < u; ++p)
    for (int i = 0; i < d; ++i) {
      const double angle =
          p / std::pow(10000.0, static_cast<double>(2 * (i / 2)) / static_cast<double>(d));
      pe->data[static_cast<std::size_t>(p) * d + i] =
          static_cast<T>(i % 2 == 0 ? std::sin(angle) : std::cos(angle));
    }
  return pe;
}

// One pre-norm transformer encoder block: x + MHA(LN(x)), then + FFN(LN(.)),
// scaled dot-product attention over the U tokens with n_heads heads.
template <class T>
class TransformerBlock {
 public:
  TransformerBlock(const ModelConfig& cfg, ParamRegistry<T>& params, Rng& rng,
                   const std::string& stem)
      : d_(cfg.d), n_heads_(cfg.n_heads), head_w_(cfg.d / cfg.n_heads) {
    auto lin = [&](const std::string& name, int in, int out) {
      auto w = Tensor<T>::make({in, out});
      init_normal(w, rng, 1.0 / std::sqrt(static_cast<double>(in)));
      auto b = Tensor<T>::make({out});
      return std::pair{params.add(stem + "." + name + ".weight", w),
                       params.add(stem + "." + name + ".bias", b)};
    };
    std::tie(wq_, bq_) = lin("mha.q", d_, d_);
    std::tie(wk_, bk_) = lin("mha.k", d_, d_);
    std::tie(wv_, bv_) = lin("mha.v", d_, d_);
    std::tie(wo_, bo_) = lin("mha.out", d_, d_);
    std::tie(w1_, b1_) = lin("ffn.w1", d_, cfg.ffn_hidden);
    std::tie(w2_, b2_) = lin("ffn.w2", cfg.ffn_hidden, d_);
    ln1_g_ = params.add(stem + ".ln1.gain", Tensor<T>::full({d_}, T(1)));
    ln1_b_ = params.add(stem + ".ln1.bias", Tensor<T>::make({d_}));
    ln2_g_ = params.add(stem + ".ln2.gain", Tensor<T>::full({d_}, T(1)));
    ln2_b_ = params.add(stem + ".ln2.bias", Tensor<T>::make({d_}));
  }

  TensorPtr<T> forward(const TensorPtr<T>& tokens) const {
    if (tokens->rank() != 2 || tokens->dim(1) != d_) {
      throw std::invalid_argument("transformer_block: expected [U x " + std::to_string(d_) +
                                  "] tokens, got " + shape_str(tokens->shape));
    }
    auto x1 = add(tokens, mha(layer_norm(tokens, ln1_g_, ln1_b_, 1e-5)));
    auto h = layer_norm(x1, ln2_g_, ln2_b_, 1e-5);
    auto ff = add_rowvec(matmul(relu(add_rowvec(matmul(h, w1_), b1_)), w2_), b2_);
    return add(x1, ff);
  }

 private:
  TensorPtr<T> mha(const TensorPtr<T>& x) const {
    auto q = add_rowvec(matmul(x, wq_), bq_);
    auto k = add_rowvec(matmul(x, wk_), bk_);
    auto v = add_rowvec(matmul(x, wv_), bv_);
    const double scale = 1.0 / std::sqrt(static_cast<double>(head_w_));
    std::vector<TensorPtr<T>> ctx;
    ctx.reserve(static_cast<std::size_t>(n_heads_));
    for (int h = 0; h < n_heads_; ++h) {
      auto qh = slice_cols(q, h * head_w_, head_w_);
      auto kh = slice_cols(k, h * head_w_, head_w_);
      auto vh = slice_cols(v, h * head_w_, head_w_);
      auto att = softmax(mul_const(matmul(qh, transpose(kh)), scale), 1);
      ctx.push_back(matmul(att, vh));
    }
    return add_rowvec(matmul(concat_cols(ctx), wo_), bo_);
  }

  int d_, n_heads_, head_w_;
  TensorPtr<T> wq_, bq_, wk_, bk_, wv_, bv_, wo_, bo_;
  TensorPtr<T> w1_, b1_, w2_, b2_;
  TensorPtr<T> ln1_g_, ln1_b_, ln2_g_, ln2_b_;
};

// Attention of one trainable query vector over the representation tokens:
// alpha = softmax(rep . q / sqrt(width)), output = sum_t alpha_t rep[t].
// Tokens serve as both keys and values.
template <class T>
TensorPtr<T> task_query_attend(const TensorPtr<T>& rep, const TensorPtr<T>& q) {
  if (rep->rank() != 2 || q->rank() != 1 || rep->dim(1) != static_cast<int>(q->numel())) {
    throw std::invalid_argument("task_query_attend: incompatible shapes " + shape_str(rep->shape) +
                                " and " + shape_str(q->shape));
  }
  const double scale = 1.0 / std::sqrt(static_cast<double>(q->numel()));
  auto alpha = softmax(mul_const(matvec(rep, q), scale), 0);
  return matvec(transpose(rep), alpha);
}

// Interaction module: positional encoding added once, one or two transformer
// blocks over the same input, concatenation of the block outputs, and one
// query per task reducing the representation to a single vector.
template <class T>
class InteractionModule {
 public:
  struct Output {
    TensorPtr<T> au, expr, va;          // task features, width rep_width
    TensorPtr<T> block_a, block_b;      // raw block outputs [U x D] (b null if 1 block)
  };

  InteractionModule(const ModelConfig& cfg, ParamRegistry<T>& params, Rng& rng)
      : perspectives_(cfg.perspectives), concat_mode_(cfg.concat_mode) {
    pe_ = positional_encoding<T>(cfg.u, cfg.d);
    blocks_.emplace_back(cfg, params, rng, "interaction.block0");
    if (perspectives_ == 2) blocks_.emplace_back(cfg, params, rng, "interaction.block1");
    const int w = cfg.rep_width();
    for (const char* task : {"au", "expr", "va"}) {
      auto q = Tensor<T>::make({w});
      init_normal(q, rng, 1.0 / std::sqrt(static_cast<double>(w)));
      queries_.push_back(params.add(std::string("interaction.query.") + task, q));
    }
  }

  TensorPtr<T> add_positional(const TensorPtr<T>& tokens) const {
    if (tokens->shape != pe_->shape) {
      throw std::invalid_argument("add_positional: expected " + shape_str(pe_->shape) +
                                  " tokens, got " + shape_str(tokens->shape));
    }
    return add(tokens, pe_);
  }

  // Block outputs combined into the overall representation: token-axis
  // concat stacks to [2U x D]; feature-axis concat widens to [U x 2D].
  TensorPtr<T> combine(const TensorPtr<T>& a, const TensorPtr<T>& b) const {
    if (!b) return a;
    if (concat_mode_ == "token") return concat_axis0<T>({a, b});
    return concat_cols<T>({a, b});
  }

  Output forward(const TensorPtr<T>& tokens) const {
    auto x = add_positional(tokens);
    Output out;
    out.block_a = blocks_[0].forward(x);
    if (perspectives_ == 2) out.block_b = blocks_[1].forward(x);
    auto rep = combine(out.block_a, out.block_b);
    out.au = task_query_attend(rep, queries_[0]);
    out.expr = task_query_attend(rep, queries_[1]);
    out.va = task_query_attend(rep, queries_[2]);
    return out;
  }

  const TensorPtr<T>& pe() const { return pe_; }

 private:
  int perspectives_;
  std::string concat_mode_;
  TensorPtr<T> pe_;
  std::vector<TransformerBlock<T>> blocks_;
  std::vector<TensorPtr<T>> queries_;
};

}  // namespace tam
