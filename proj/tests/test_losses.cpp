#include <cmath>
#include <vector>

#include "doctest.h"
#include "tam/losses.hpp"
#include "tam/rng.hpp"
#include "tam/tensor.hpp"

using tam::Tensor;
using tam::TensorPtr;

TEST_CASE("binary cross-entropy at zero logits is ln 2 regardless of target") {
  auto logits = Tensor<double>::from_values({4}, {0, 0, 0, 0});
  auto loss = tam::bce_with_logits(logits, std::vector<double>{0, 1, 0, 1});
  for (double v : loss->data) CHECK(v == doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("binary cross-entropy stays finite at extreme logits") {
  auto logits = Tensor<double>::from_values({4}, {1000, -1000, 1000, -1000});
  auto loss = tam::bce_with_logits(logits, std::vector<double>{1, 0, 0, 1});
  CHECK(loss->data[0] == doctest::Approx(0.0));
  CHECK(loss->data[1] == doctest::Approx(0.0));
  CHECK(loss->data[2] == doctest::Approx(1000.0));
  CHECK(loss->data[3] == doctest::Approx(1000.0));
  for (double v : loss->data) CHECK(std::isfinite(v));
}

TEST_CASE("binary cross-entropy gradient is sigmoid(x) - y") {
  auto logits = Tensor<double>::from_values({3}, {0.7, -1.2, 2.0});
  logits->requires_grad = true;
  auto loss = tam::sum(tam::bce_with_logits(logits, std::vector<double>{1, 0, 1}));
  tam::backward(loss);
  for (int i = 0; i < 3; ++i) {
    const double x = logits->data[static_cast<std::size_t>(i)];
    const double y = (i == 1) ? 0.0 : 1.0;
    const double s = 1.0 / (1.0 + std::exp(-x));
    CHECK(logits->grad[static_cast<std::size_t>(i)] == doctest::Approx(s - y).epsilon(1e-12));
  }
  CHECK_THROWS_WITH_AS(tam::bce_with_logits(logits, std::vector<double>{1, 0}),
                       doctest::Contains("targets"), std::invalid_argument);
  CHECK_THROWS_WITH_AS(tam::bce_with_logits(logits, std::vector<double>{1, 0, 0.5}),
                       doctest::Contains("0 or 1"), std::invalid_argument);
}

TEST_CASE("cross-entropy on uniform logits is ln K") {
  auto logits = Tensor<double>::make({2, 8});
  auto loss = tam::ce_rows_with_labels(logits, {3, 7});
  for (double v : loss->data) CHECK(v == doctest::Approx(std::log(8.0)).epsilon(1e-12));
}

TEST_CASE("cross-entropy is invariant to a per-row constant shift") {
  tam::Rng rng(31);
  auto logits = Tensor<double>::make({3, 5});
  for (auto& v : logits->data) v = rng.normal();
  auto shifted = Tensor<double>::make({3, 5});
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 5; ++c)
      shifted->data[static_cast<std::size_t>(r * 5 + c)] =
          logits->data[static_cast<std::size_t>(r * 5 + c)] + 10.0 * (r + 1);
  const std::vector<int> labels = {0, 4, 2};
  auto a = tam::ce_rows_with_labels(logits, labels);
  auto b = tam::ce_rows_with_labels(shifted, labels);
  for (int r = 0; r < 3; ++r)
    CHECK(a->data[static_cast<std::size_t>(r)] ==
          doctest::Approx(b->data[static_cast<std::size_t>(r)]).epsilon(1e-10));
}

TEST_CASE("cross-entropy gradient is softmax minus one-hot") {
  auto logits = Tensor<double>::from_values({1, 3}, {1.0, 2.0, 0.5});
  logits->requires_grad = true;
  tam::backward(tam::sum(tam::ce_rows_with_labels(logits, {1})));
  double se = 0;
  for (double v : logits->data) se += std::exp(v);
  for (int j = 0; j < 3; ++j) {
    const double p = std::exp(logits->data[static_cast<std::size_t>(j)]) / se;
    const double onehot = (j == 1) ? 1.0 : 0.0;
    CHECK(logits->grad[static_cast<std::size_t>(j)] == doctest::Approx(p - onehot).epsilon(1e-12));
  }
  CHECK_THROWS_WITH_AS(tam::ce_rows_with_labels(logits, {3}), doctest::Contains("outside"),
                       std::invalid_argument);
  CHECK_THROWS_WITH_AS(tam::ce_rows_with_labels(logits, {0, 1}), doctest::Contains("labels"),
                       std::invalid_argument);
}

TEST_CASE("task wrappers: AU mean, one-frame expression") {
  auto au = Tensor<double>::make({2, 12});
  auto l_au = tam::au_bce_loss(au, std::vector<int>(24, 0));
  CHECK(l_au->numel() == 1);
  CHECK(l_au->item() == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK_THROWS_WITH_AS(tam::au_bce_loss(au, std::vector<int>(24, -1)),
                       doctest::Contains("sanitize"), std::invalid_argument);

  auto expr = Tensor<double>::make({8});
  CHECK(tam::expr_ce_loss(expr, 5)->item() == doctest::Approx(std::log(8.0)).epsilon(1e-12));
}

TEST_CASE("concordance is 1 for identity, -1 for negation, ~0 for a flat prediction") {
  auto y = Tensor<double>::from_values({5}, {0.1, -0.4, 0.9, 0.3, -0.7});
  CHECK(tam::ccc_graph(y, y)->item() == doctest::Approx(1.0).epsilon(1e-6));

  auto neg = Tensor<double>::make({5});
  for (std::size_t i = 0; i < 5; ++i) neg->data[i] = -y->data[i];
  // mean(y) != 0, so the mean-difference term pulls it above -1 slightly
  CHECK(tam::ccc_graph(neg, y)->item() < -0.95);

  auto flat = Tensor<double>::full({5}, 0.2);
  CHECK(std::abs(tam::ccc_graph(flat, y)->item()) < 1e-6);
}

TEST_CASE("concordance is symmetric and penalizes affine distortion") {
  tam::Rng rng(77);
  auto x = Tensor<double>::make({20});
  auto y = Tensor<double>::make({20});
  for (auto& v : x->data) v = rng.normal();
  for (std::size_t i = 0; i < 20; ++i) y->data[i] = 0.5 * x->data[i] + 0.2 + 0.1 * rng.normal();
  CHECK(tam::ccc_graph(x, y)->item() == doctest::Approx(tam::ccc_graph(y, x)->item()).epsilon(1e-10));
  // scaling and shifting lowers concordance strictly below plain correlation's 1
  auto same_scaled = Tensor<double>::make({20});
  for (std::size_t i = 0; i < 20; ++i) same_scaled->data[i] = 3.0 * x->data[i] + 1.0;
  CHECK(tam::ccc_graph(same_scaled, x)->item() < 0.7);
  CHECK_THROWS_WITH_AS(tam::ccc_graph(x, Tensor<double>::make({5})),
                       doctest::Contains("matching"), std::invalid_argument);
}

TEST_CASE("valence/arousal loss on anti-correlated predictions: hand value") {
  auto v = Tensor<double>::from_values({4}, {0.5, -0.5, 0.25, -0.25});
  auto a = Tensor<double>::from_values({4}, {-0.1, 0.3, -0.2, 0.4});
  auto neg_v = Tensor<double>::make({4});
  auto neg_a = Tensor<double>::make({4});
  for (std::size_t i = 0; i < 4; ++i) {
    neg_v->data[i] = -v->data[i];
    neg_a->data[i] = -a->data[i];
  }
  // valence is zero-mean, so its CCC is exactly -1 (term 2); arousal has
  // var 0.065 each side and mean gap 0.2: CCC -0.13/0.17, term 1 + 13/17
  auto loss = tam::va_ccc_loss(neg_v, neg_a, v, a);
  CHECK(loss->item() == doctest::Approx(3.0 + 13.0 / 17.0).epsilon(1e-6));
  CHECK(tam::va_ccc_loss(v, a, v, a)->item() == doctest::Approx(0.0).epsilon(1e-6));
}

TEST_CASE("total loss sums the three parts and routes gradients to each") {
  auto a = Tensor<double>::full({1}, 1.5);
  auto b = Tensor<double>::full({1}, 0.25);
  auto c = Tensor<double>::full({1}, 2.25);
  a->requires_grad = b->requires_grad = c->requires_grad = true;
  auto total = tam::total_loss(a, b, c);
  CHECK(total->item() == 4.0);
  tam::backward(total);
  CHECK(a->grad[0] == 1.0);
  CHECK(b->grad[0] == 1.0);
  CHECK(c->grad[0] == 1.0);
}

TEST_CASE("concordance loss gradient pushes a flat prediction toward the target") {
  auto pred = Tensor<double>::full({6}, 0.0);
  pred->requires_grad = true;
  auto target = Tensor<double>::from_values({6}, {0.9, -0.9, 0.6, -0.6, 0.3, -0.3});
  auto loss = tam::add_const(tam::mul_const(tam::ccc_graph(pred, target), -1.0), 1.0);
  tam::backward(loss);
  // moving each coordinate toward the target must reduce the loss
  for (std::size_t i = 0; i < 6; ++i) {
    if (target->data[i] > 0) CHECK(pred->grad[i] < 0);
    if (target->data[i] < 0) CHECK(pred->grad[i] > 0);
  }
}
