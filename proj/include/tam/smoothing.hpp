#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "tam/tensor.hpp"

namespace tam {

// Trainable exponential smoothing over a [T x D] feature sequence:
//   f_t = (v_t + mu * f_{t-1}) / (1 + mu),   f_{-1} = f_init,
// with mu = softplus(theta_mu) > 0 (one scalar per task) and a trainable
// D-vector initial state.

template <class T>
struct SmootherParams {
  TensorPtr<T> theta_mu;  // [1], mu = softplus(theta_mu)
  TensorPtr<T> f_init;    // [D]
};

namespace detail {

template <class T>
void check_smooth_args(const TensorPtr<T>& v, const SmootherParams<T>& p, int min_t,
                       const char* op) {
  if (v->rank() != 2) {
    throw std::invalid_argument(std::string(op) + ": need [T x D] features, got " +
                                shape_str(v->shape));
  }
  if (v->dim(0) < min_t) {
    throw std::invalid_argument(std::string(op) + ": need at least " + std::to_string(min_t) +
                                " frames, got " + std::to_string(v->dim(0)));
  }
  if (p.theta_mu->numel() != 1 || p.f_init->rank() != 1 ||
      static_cast<int>(p.f_init->numel()) != v->dim(1)) {
    throw std::invalid_argument(std::string(op) + ": smoother parameters do not match " +
                                shape_str(v->shape));
  }
}

// Rows of the causal recurrence, kept as separate [D] nodes so the
// bidirectional variant can reuse the final one.
template <class T>
std::vector<TensorPtr<T>> smooth_rows(const TensorPtr<T>& v, const TensorPtr<T>& mu,
                                      const TensorPtr<T>& one_plus_mu, const TensorPtr<T>& f_init) {
  const int t_len = v->dim(0);
  std::vector<TensorPtr<T>> rows;
  rows.reserve(static_cast<std::size_t>(t_len));
  TensorPtr<T> prev = f_init;
  for (int t = 0; t < t_len; ++t) {
    auto vt = slice_axis0(v, t);
    auto ft = sdiv(add(vt, smul(prev, mu)), one_plus_mu);
    rows.push_back(ft);
    prev = ft;
  }
  return rows;
}

}  // namespace detail

// Causal pass: output[t] = f_t, length preserved.
template <class T>
TensorPtr<T> smooth_sequence(const TensorPtr<T>& v, const SmootherParams<T>& p) {
  detail::check_smooth_args(v, p, 1, "smooth_sequence");
  auto mu = softplus(p.theta_mu);
  auto one_plus_mu = add_const(mu, 1.0);
  return stack_rows(detail::smooth_rows(v, mu, one_plus_mu, p.f_init));
}

// Bidirectional variant: forward pass g as above; a second pass h runs the
// same recurrence backwards in time, seeded at the last forward value (the
// reverse sweep therefore starts producing new values at the penultimate
// frame); output (g + h) / 2.
template <class T>
TensorPtr<T> smooth_bidirectional(const TensorPtr<T>& v, const SmootherParams<T>& p) {
  detail::check_smooth_args(v, p, 2, "smooth_bidirectional");
  auto mu = softplus(p.theta_mu);
  auto one_plus_mu = add_const(mu, 1.0);
  auto g = detail::smooth_rows(v, mu, one_plus_mu, p.f_init);
  const int t_len = v->dim(0);

  std::vector<TensorPtr<T>> h(static_cast<std::size_t>(t_len));
  h[static_cast<std::size_t>(t_len - 1)] = g.back();
  for (int t = t_len - 2; t >= 0; --t) {
    auto vt = slice_axis0(v, t);
    h[static_cast<std::size_t>(t)] =
        sdiv(add(vt, smul(h[static_cast<std::size_t>(t + 1)], mu)), one_plus_mu);
  }
  return mul_const(add(stack_rows(g), stack_rows(h)), 0.5);
}

// Keeps exactly the sequences with at least `min_frames` frames (10 by
// default), order preserved.
template <class Seq>
std::vector<Seq> filter_short_sequences(const std::vector<Seq>& videos, int min_frames = 10) {
  std::vector<Seq> kept;
  for (const auto& v : videos)
    if (v.frame_count() >= min_frames) kept.push_back(v);
  return kept;
}

}  // namespace tam
