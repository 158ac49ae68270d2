#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "tam/labels.hpp"
#include "tam/tensor.hpp"

namespace tam {

// Differentiable task losses. Targets are plain values (no gradient);
// sentinel labels must never reach these ops — sanitize first.

// Elementwise binary cross-entropy on logits, stable in logit space:
// max(x,0) - x*y + log(1 + e^{-|x|}). Backward: sigmoid(x) - y.
template <class T>
TensorPtr<T> bce_with_logits(const TensorPtr<T>& logits, const std::vector<T>& targets) {
  if (targets.size() != logits->numel()) {
    throw std::invalid_argument("bce_with_logits: " + std::to_string(targets.size()) +
                                " targets for " + shape_str(logits->shape));
  }
  for (const T y : targets)
    if (y != T(0) && y != T(1))
      throw std::invalid_argument("bce_with_logits: targets must be 0 or 1");
  auto out = Tensor<T>::make(logits->shape, detail::track<T>(logits));
  const std::size_t n = out->numel();
  for (std::size_t i = 0; i < n; ++i) {
    const T x = logits->data[i];
    out->data[i] = std::max(x, T(0)) - x * targets[i] + std::log1p(std::exp(-std::abs(x)));
  }
  if (out->requires_grad) {
    out->parents = {logits};
    out->backward_fn = [targets](Tensor<T>& self) {
      auto& px = *self.parents[0];
      if (!px.requires_grad) return;
      const std::size_t m = self.numel();
      for (std::size_t i = 0; i < m; ++i) {
        const T x = px.data[i];
        const T s = x >= T(0) ? T(1) / (T(1) + std::exp(-x)) : std::exp(x) / (T(1) + std::exp(x));
        px.grad[i] += self.grad[i] * (s - targets[i]);
      }
    };
  }
  return out;
}

// Per-row softmax cross-entropy: losses[r] = logsumexp(x[r]) - x[r][label_r].
// Backward: softmax(x[r]) - onehot(label_r).
template <class T>
TensorPtr<T> ce_rows_with_labels(const TensorPtr<T>& logits, const std::vector<int>& labels) {
  if (logits->rank() != 2) {
    throw std::invalid_argument("ce_rows_with_labels: need rank 2, got " + shape_str(logits->shape));
  }
  const int rows = logits->dim(0), k = logits->dim(1);
  if (labels.size() != static_cast<std::size_t>(rows)) {
    throw std::invalid_argument("ce_rows_with_labels: " + std::to_string(labels.size()) +
                                " labels for " + std::to_string(rows) + " rows");
  }
  for (int l : labels)
    if (l < 0 || l >= k)
      throw std::invalid_argument("ce_rows_with_labels: label " + std::to_string(l) +
                                  " outside [0, " + std::to_string(k) + ")");
  auto out = Tensor<T>::make({rows}, detail::track<T>(logits));
  for (int r = 0; r < rows; ++r) {
    const T* x = logits->data.data() + static_cast<std::size_t>(r) * k;
    T mx = x[0];
    for (int j = 1; j < k; ++j) mx = std::max(mx, x[j]);
    T se = T(0);
    for (int j = 0; j < k; ++j) se += std::exp(x[j] - mx);
    out->data[r] = mx + std::log(se) - x[labels[static_cast<std::size_t>(r)]];
  }
  if (out->requires_grad) {
    out->parents = {logits};
    out->backward_fn = [labels, rows, k](Tensor<T>& self) {
      auto& px = *self.parents[0];
      if (!px.requires_grad) return;
      for (int r = 0; r < rows; ++r) {
        const T g = self.grad[r];
        if (g == T(0)) continue;
        const T* x = px.data.data() + static_cast<std::size_t>(r) * k;
        T* dx = px.grad.data() + static_cast<std::size_t>(r) * k;
        T mx = x[0];
        for (int j = 1; j < k; ++j) mx = std::max(mx, x[j]);
        T se = T(0);
        for (int j = 0; j < k; ++j) se += std::exp(x[j] - mx);
        for (int j = 0; j < k; ++j) dx[j] += g * std::exp(x[j] - mx) / se;
        dx[labels[static_cast<std::size_t>(r)]] -= g;
      }
    };
  }
  return out;
}

// Mean over all AU slots (and frames, when logits are a [T x 12] batch) of
// the per-AU binary cross-entropy.
template <class T>
TensorPtr<T> au_bce_loss(const TensorPtr<T>& au_logits, const std::vector<int>& au_labels) {
  std::vector<T> targets(au_labels.size());
  for (std::size_t i = 0; i < au_labels.size(); ++i) {
    if (au_labels[i] != 0 && au_labels[i] != 1)
      throw std::invalid_argument("au_bce_loss: AU labels must be 0 or 1 (sanitize first)");
    targets[i] = static_cast<T>(au_labels[i]);
  }
  return mean(bce_with_logits(au_logits, targets));
}

// Softmax cross-entropy for one frame's 8-way expression logits.
template <class T>
TensorPtr<T> expr_ce_loss(const TensorPtr<T>& expr_logits, int label) {
  auto rows = reshape(expr_logits, {1, static_cast<int>(expr_logits->numel())});
  return mean(ce_rows_with_labels(rows, {label}));
}

// Differentiable concordance correlation between prediction and target
// vectors: 2 cov / (var_x + var_y + (mean_x - mean_y)^2 + eps), population
// moments. Built from primitives so gradients flow to x.
template <class T>
TensorPtr<T> ccc_graph(const TensorPtr<T>& x, const TensorPtr<T>& y, double eps = 1e-8) {
  if (x->shape != y->shape || x->rank() != 1 || x->numel() < 2) {
    throw std::invalid_argument("ccc_graph: need matching rank-1 tensors of length >= 2, got " +
                                shape_str(x->shape) + " and " + shape_str(y->shape));
  }
  auto mx = mean(x);
  auto my = mean(y);
  auto xc = ssub(x, mx);
  auto yc = ssub(y, my);
  auto cov = mean(mul(xc, yc));
  auto vx = mean(mul(xc, xc));
  auto vy = mean(mul(yc, yc));
  auto dm = sub(mx, my);
  auto denom = add_const(add(add(vx, vy), mul(dm, dm)), eps);
  return div(mul_const(cov, 2.0), denom);
}

// (1 - CCC_valence) + (1 - CCC_arousal).
template <class T>
TensorPtr<T> va_ccc_loss(const TensorPtr<T>& pred_v, const TensorPtr<T>& pred_a,
                         const TensorPtr<T>& label_v, const TensorPtr<T>& label_a) {
  auto lv = add_const(mul_const(ccc_graph(pred_v, label_v), -1.0), 1.0);
  auto la = add_const(mul_const(ccc_graph(pred_a, label_a), -1.0), 1.0);
  return add(lv, la);
}

// Unweighted sum of the three task losses.
template <class T>
TensorPtr<T> total_loss(const TensorPtr<T>& l_au, const TensorPtr<T>& l_expr,
                        const TensorPtr<T>& l_va) {
  return add(add(l_au, l_expr), l_va);
}

}  // namespace tam
