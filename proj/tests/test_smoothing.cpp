#include <cmath>
#include <vector>

#include "doctest.h"
#include "tam/rng.hpp"
#include "tam/smoothing.hpp"
#include "tam/tensor.hpp"

using tam::SmootherParams;
using tam::smooth_bidirectional;
using tam::smooth_sequence;
using tam::Tensor;
using tam::TensorPtr;

namespace {

// theta giving softplus(theta) = mu
double theta_for(double mu) { return std::log(std::exp(mu) - 1.0); }

SmootherParams<double> make_params(double mu, const std::vector<double>& f_init) {
  SmootherParams<double> p;
  p.theta_mu = Tensor<double>::full({1}, theta_for(mu));
  p.f_init = Tensor<double>::from_values({static_cast<int>(f_init.size())}, f_init);
  return p;
}

struct FakeVideo {
  int n;
  int frame_count() const { return n; }
};

}  // namespace

TEST_CASE("vanishing mu returns the input unchanged") {
  auto v = Tensor<double>::from_values({3, 2}, {1, -2, 0.5, 4, -1, 0});
  auto p = make_params(1e-12, {10, 10});
  auto out = smooth_sequence(v, p);
  for (std::size_t i = 0; i < v->data.size(); ++i)
    CHECK(out->data[i] == doctest::Approx(v->data[i]).epsilon(1e-9));
  auto both = smooth_bidirectional(v, p);
  for (std::size_t i = 0; i < v->data.size(); ++i)
    CHECK(both->data[i] == doctest::Approx(v->data[i]).epsilon(1e-9));
}

TEST_CASE("a constant sequence started at its own value is a fixed point") {
  auto v = Tensor<double>::full({5, 3}, 0.7);
  auto p = make_params(2.5, {0.7, 0.7, 0.7});
  auto out = smooth_sequence(v, p);
  for (double x : out->data) CHECK(x == doctest::Approx(0.7).epsilon(1e-12));
  auto both = smooth_bidirectional(v, p);
  for (double x : both->data) CHECK(x == doctest::Approx(0.7).epsilon(1e-12));
}

TEST_CASE("causal pass, mu=1, f_init=0: hand-computed outputs") {
  // f_t = (v_t + f_{t-1}) / 2 -> [0, 0.5] for v = [0, 1]
  auto v = Tensor<double>::from_values({2, 1}, {0, 1});
  auto p = make_params(1.0, {0.0});
  auto out = smooth_sequence(v, p);
  CHECK(out->data[0] == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(out->data[1] == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("bidirectional pass, mu=1, f_init=0: hand-computed outputs") {
  // forward g = [0, 0.5]; backward h seeded at g[1]: h = [0.25, 0.5];
  // average = [0.125, 0.5]
  auto v = Tensor<double>::from_values({2, 1}, {0, 1});
  auto p = make_params(1.0, {0.0});
  auto out = smooth_bidirectional(v, p);
  CHECK(out->data[0] == doctest::Approx(0.125).epsilon(1e-12));
  CHECK(out->data[1] == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("outputs stay inside the hull of inputs and the initial state") {
  tam::Rng rng(21);
  auto v = Tensor<double>::make({12, 4});
  for (auto& x : v->data) x = rng.uniform(-3, 3);
  std::vector<double> f0(4);
  for (auto& x : f0) x = rng.uniform(-3, 3);
  auto p = make_params(1.7, f0);
  for (auto out : {smooth_sequence(v, p), smooth_bidirectional(v, p)}) {
    for (int c = 0; c < 4; ++c) {
      double lo = f0[static_cast<std::size_t>(c)], hi = lo;
      for (int t = 0; t < 12; ++t) {
        const double x = v->data[static_cast<std::size_t>(t * 4 + c)];
        lo = std::min(lo, x);
        hi = std::max(hi, x);
      }
      for (int t = 0; t < 12; ++t) {
        const double y = out->data[static_cast<std::size_t>(t * 4 + c)];
        CHECK(y >= lo - 1e-6);
        CHECK(y <= hi + 1e-6);
      }
    }
  }
}

TEST_CASE("smoothing is linear in its inputs") {
  tam::Rng rng(22);
  auto a = Tensor<double>::make({6, 2});
  auto b = Tensor<double>::make({6, 2});
  for (auto& x : a->data) x = rng.normal();
  for (auto& x : b->data) x = rng.normal();
  auto combo = Tensor<double>::make({6, 2});
  for (std::size_t i = 0; i < combo->data.size(); ++i)
    combo->data[i] = 2.0 * a->data[i] - 1.0 * b->data[i];

  // keep f_init consistent with the same linear combination
  auto pa = make_params(0.8, {0.3, -0.1});
  auto pb = make_params(0.8, {0.5, 0.2});
  auto pc = make_params(0.8, {2 * 0.3 - 0.5, 2 * -0.1 - 0.2});
  auto sa = smooth_sequence(a, pa);
  auto sb = smooth_sequence(b, pb);
  auto sc = smooth_sequence(combo, pc);
  for (std::size_t i = 0; i < sc->data.size(); ++i)
    CHECK(sc->data[i] == doctest::Approx(2 * sa->data[i] - sb->data[i]).epsilon(1e-10));
}

TEST_CASE("argument validation: rank, frame minimum, parameter widths") {
  auto p = make_params(1.0, {0.0});
  CHECK_THROWS_WITH_AS(smooth_sequence(Tensor<double>::make({4}), p),
                       doctest::Contains("[T x D]"), std::invalid_argument);
  CHECK_THROWS_WITH_AS(smooth_bidirectional(Tensor<double>::make({1, 1}), p),
                       doctest::Contains("at least 2"), std::invalid_argument);
  CHECK_THROWS_WITH_AS(smooth_sequence(Tensor<double>::make({3, 2}), p),
                       doctest::Contains("parameters"), std::invalid_argument);
}

TEST_CASE("short-sequence filter keeps 10 frames and drops 9") {
  std::vector<FakeVideo> vids = {{9}, {10}, {3}, {25}, {11}};
  auto kept = tam::filter_short_sequences(vids);
  REQUIRE(kept.size() == 3);
  CHECK(kept[0].n == 10);
  CHECK(kept[1].n == 25);
  CHECK(kept[2].n == 11);
}

TEST_CASE("sensitivity to the initial state matches the closed form") {
  // d f_t / d f_init = (mu / (1 + mu))^{t+1} for the causal pass
  const double mu = 1.6;
  for (int t : {0, 1, 5}) {
    const int t_len = t + 1;
    auto v = Tensor<double>::make({t_len, 1});
    tam::Rng rng(100 + static_cast<std::uint64_t>(t));
    for (auto& x : v->data) x = rng.normal();
    auto p = make_params(mu, {0.4});
    p.f_init->requires_grad = true;
    auto out = smooth_sequence(v, p);
    tam::backward(tam::sum(tam::slice_axis0(out, t)));
    const double expect = std::pow(mu / (1.0 + mu), t + 1);
    CHECK(p.f_init->grad[0] == doctest::Approx(expect).epsilon(1e-6));
  }
}

TEST_CASE("autodiff through theta matches a finite difference") {
  const double mu = 0.9;
  auto run = [&](double theta) {
    auto v = Tensor<double>::from_values({4, 2}, {0.1, -0.3, 0.7, 0.2, -0.5, 0.4, 0.9, -0.8});
    SmootherParams<double> p;
    p.theta_mu = Tensor<double>::full({1}, theta);
    p.f_init = Tensor<double>::from_values({2}, {0.2, -0.1});
    return smooth_bidirectional(v, p);
  };
  const double theta = theta_for(mu);
  {
    auto v = Tensor<double>::from_values({4, 2}, {0.1, -0.3, 0.7, 0.2, -0.5, 0.4, 0.9, -0.8});
    SmootherParams<double> p;
    p.theta_mu = Tensor<double>::full({1}, theta);
    p.theta_mu->requires_grad = true;
    p.f_init = Tensor<double>::from_values({2}, {0.2, -0.1});
    tam::backward(tam::sum(smooth_bidirectional(v, p)));
    const double h = 1e-5;
    auto up = run(theta + h);
    auto down = run(theta - h);
    double plus = 0, minus = 0;
    for (double x : up->data) plus += x;
    for (double x : down->data) minus += x;
    const double numeric = (plus - minus) / (2 * h);
    CHECK(p.theta_mu->grad[0] == doctest::Approx(numeric).epsilon(1e-4));
  }
}
