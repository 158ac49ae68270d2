#include "tam/grad_suite.hpp"

#include <chrono>
#include <cstdio>
#include <functional>
#include <memory>

#include "tam/grad_check.hpp"
#include "tam/losses.hpp"
#include "tam/model.hpp"
#include "tam/rng.hpp"
#include "tam/smoothing.hpp"
#include "tam/tensor.hpp"

namespace tam {

namespace {

using D = double;
using TP = TensorPtr<D>;
using LossFn = std::function<TP()>;

// Scaffolding for one random parameterization: leaves registered once at
// setup; the returned closure rebuilds the graph from the live leaf values
// on every evaluation, as grad_check requires.
struct Case {
  ParamRegistry<D> params;
  Rng rng;
  explicit Case(std::uint64_t seed) : rng(seed) {}

  TP leaf(const std::string& name, std::vector<int> shape, double lo = -1.0, double hi = 1.0) {
    auto t = Tensor<D>::make(std::move(shape));
    for (auto& v : t->data) v = lo + (hi - lo) * rng.uniform();
    return params.add(name, t);
  }

  // Sampled away from zero so kinked ops (relu) stay smooth at the
  // finite-difference step size.
  TP leaf_off_kink(const std::string& name, std::vector<int> shape) {
    auto t = Tensor<D>::make(std::move(shape));
    for (auto& v : t->data) {
      const double mag = 0.05 + 0.95 * rng.uniform();
      v = rng.below(2) ? mag : -mag;
    }
    return params.add(name, t);
  }

  // Fixed random weights so the scalarized loss discriminates coordinates.
  TP weights(std::vector<int> shape) {
    auto w = Tensor<D>::make(std::move(shape));
    for (auto& v : w->data) v = -1.0 + 2.0 * rng.uniform();
    return w;
  }
};

TP weigh(const TP& out, const TP& w) { return sum(mul(out, w)); }

struct Suite {
  GradSuiteResult result;
  std::uint64_t seed;

  void check(const std::string& name, const std::function<LossFn(Case&)>& setup,
             double tol = 1e-4, int points = 10) {
    double worst = 0;
    std::string detail;
    bool ok = true;
    for (int p = 0; p < points && ok; ++p) {
      Case c(seed + static_cast<std::uint64_t>(p) * 7919u);
      auto fn = setup(c);
      auto res = grad_check(c.params, fn, 1e-3, tol);
      worst = std::max(worst, res.max_rel_err);
      if (!res.ok) {
        ok = false;
        detail = res.failures.empty() ? "non-finite" : res.failures.front();
      }
    }
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%-24s max_rel=%-10.3g %s%s%s", name.c_str(), worst,
                  ok ? "pass" : "FAIL", detail.empty() ? "" : " ", detail.c_str());
    result.lines.emplace_back(buf);
    result.ok = result.ok && ok;
  }
};

void add_primitive_checks(Suite& s) {
  s.check("add", [](Case& c) -> LossFn {
    auto a = c.leaf("a", {2, 3}), b = c.leaf("b", {2, 3}), w = c.weights({2, 3});
    return [=] { return weigh(add(a, b), w); };
  });
  s.check("sub", [](Case& c) -> LossFn {
    auto a = c.leaf("a", {2, 3}), b = c.leaf("b", {2, 3}), w = c.weights({2, 3});
    return [=] { return weigh(sub(a, b), w); };
  });
  s.check("mul", [](Case& c) -> LossFn {
    auto a = c.leaf("a", {2, 3}), b = c.leaf("b", {2, 3}), w = c.weights({2, 3});
    return [=] { return weigh(mul(a, b), w); };
  });
  s.check("div", [](Case& c) -> LossFn {
    auto a = c.leaf("a", {2, 3}), b = c.leaf("b", {2, 3}, 0.5, 2.0), w = c.weights({2, 3});
    return [=] { return weigh(div(a, b), w); };
  });
  s.check("add_const", [](Case& c) -> LossFn {
    auto a = c.leaf("a", {4}), w = c.weights({4});
    return [=] { return weigh(add_const(a, 0.7), w); };
  });
  s.check("mul_const", [](Case& c) -> LossFn {
    auto a = c.leaf("a", {4}), w = c.weights({4});
    return [=] { return weigh(mul_const(a, -1.3), w); };
  });
  s.check("smul", [](Case& c) -> LossFn {
    auto x = c.leaf("x", {5}), v = c.leaf("s", {1}), w = c.weights({5});
    return [=] { return weigh(smul(x, v), w); };
  });
  s.check("sdiv", [](Case& c) -> LossFn {
    auto x = c.leaf("x", {5}), v = c.leaf("s", {1}, 0.5, 2.0), w = c.weights({5});
    return [=] { return weigh(sdiv(x, v), w); };
  });
  s.check("ssub", [](Case& c) -> LossFn {
    auto x = c.leaf("x", {5}), v = c.leaf("s", {1}), w = c.weights({5});
    return [=] { return weigh(ssub(x, v), w); };
  });
  s.check("relu", [](Case& c) -> LossFn {
    auto x = c.leaf_off_kink("x", {3, 4});
    auto w = c.weights({3, 4});
    return [=] { return weigh(relu(x), w); };
  });
  s.check("sigmoid", [](Case& c) -> LossFn {
    auto x = c.leaf("x", {3, 4}, -3, 3);
    auto w = c.weights({3, 4});
    return [=] { return weigh(sigmoid(x), w); };
  });
  s.check("tanh", [](Case& c) -> LossFn {
    auto x = c.leaf("x", {3, 4}, -2, 2);
    auto w = c.weights({3, 4});
    return [=] { return weigh(tanh(x), w); };
  });
  s.check("softplus", [](Case& c) -> LossFn {
    auto x = c.leaf("x", {6}, -3, 3), w = c.weights({6});
    return [=] { return weigh(softplus(x), w); };
  });
  s.check("sum", [](Case& c) -> LossFn {
    auto x = c.leaf("x", {2, 3});
    return [=] { return sum(x); };
  });
  s.check("mean", [](Case& c) -> LossFn {
    auto x = c.leaf("x", {7}), w = c.weights({7});
    return [=] { return mean(mul(x, w)); };
  });
  s.check("reshape", [](Case& c) -> LossFn {
    auto x = c.leaf("x", {2, 6}), w = c.weights({3, 4});
    return [=] { return weigh(reshape(x, {3, 4}), w); };
  });
  s.check("slice_axis0", [](Case& c) -> LossFn {
    auto x = c.leaf("x", {3, 4}), w = c.weights({4});
    return [=] { return weigh(slice_axis0(x, 1), w); };
  });
  s.check("slice_cols", [](Case& c) -> LossFn {
    auto x = c.leaf("x", {3, 5}), w = c.weights({3, 3});
    return [=] { return weigh(slice_cols(x, 1, 3), w); };
  });
  s.check("concat_axis0", [](Case& c) -> LossFn {
    auto a = c.leaf("a", {2, 3}), b = c.leaf("b", {1, 3}), w = c.weights({3, 3});
    return [=] { return weigh(concat_axis0<D>({a, b}), w); };
  });
  s.check("concat_cols", [](Case& c) -> LossFn {
    auto a = c.leaf("a", {2, 2}), b = c.leaf("b", {2, 3}), w = c.weights({2, 5});
    return [=] { return weigh(concat_cols<D>({a, b}), w); };
  });
  s.check("stack_rows", [](Case& c) -> LossFn {
    auto a = c.leaf("a", {4}), b = c.leaf("b", {4}), d = c.leaf("c", {4});
    auto w = c.weights({3, 4});
    return [=] { return weigh(stack_rows<D>({a, b, d}), w); };
  });
  s.check("transpose", [](Case& c) -> LossFn {
    auto x = c.leaf("x", {2, 4}), w = c.weights({4, 2});
    return [=] { return weigh(transpose(x), w); };
  });
  s.check("matmul", [](Case& c) -> LossFn {
    auto a = c.leaf("a", {2, 3}), b = c.leaf("b", {3, 4}), w = c.weights({2, 4});
    return [=] { return weigh(matmul(a, b), w); };
  });
  s.check("matvec", [](Case& c) -> LossFn {
    auto m = c.leaf("w", {3, 4}), x = c.leaf("x", {4}), w = c.weights({3});
    return [=] { return weigh(matvec(m, x), w); };
  });
  s.check("add_rowvec", [](Case& c) -> LossFn {
    auto x = c.leaf("x", {3, 4}), b = c.leaf("b", {4}), w = c.weights({3, 4});
    return [=] { return weigh(add_rowvec(x, b), w); };
  });
  s.check("conv2d_s1p0", [](Case& c) -> LossFn {
    auto x = c.leaf("x", {2, 5, 5}), k = c.leaf("k", {3, 2, 3, 3}), w = c.weights({3, 3, 3});
    return [=] { return weigh(conv2d(x, k, 1, 0), w); };
  });
  s.check("conv2d_s2p1", [](Case& c) -> LossFn {
    auto x = c.leaf("x", {2, 5, 5}), k = c.leaf("k", {3, 2, 3, 3}), w = c.weights({3, 3, 3});
    return [=] { return weigh(conv2d(x, k, 2, 1), w); };
  });
  s.check("add_channel_bias", [](Case& c) -> LossFn {
    auto x = c.leaf("x", {3, 2, 2}), b = c.leaf("b", {3}), w = c.weights({3, 2, 2});
    return [=] { return weigh(add_channel_bias(x, b), w); };
  });
  s.check("softmax_axis0", [](Case& c) -> LossFn {
    auto x = c.leaf("x", {5}, -2, 2), w = c.weights({5});
    return [=] { return weigh(softmax(x, 0), w); };
  });
  s.check("softmax_axis1", [](Case& c) -> LossFn {
    auto x = c.leaf("x", {3, 4}, -2, 2), w = c.weights({3, 4});
    return [=] { return weigh(softmax(x, 1), w); };
  });
  s.check("layer_norm", [](Case& c) -> LossFn {
    auto x = c.leaf("x", {3, 5});
    auto g = c.leaf("g", {5}, 0.5, 1.5), b = c.leaf("b", {5}), w = c.weights({3, 5});
    return [=] { return weigh(layer_norm(x, g, b, 1e-5), w); };
  });
  s.check("bce_with_logits", [](Case& c) -> LossFn {
    auto x = c.leaf("x", {8}, -3, 3);
    auto w = c.weights({8});
    std::vector<D> targets(8);
    for (auto& t : targets) t = static_cast<D>(c.rng.below(2));
    return [=] { return weigh(bce_with_logits(x, targets), w); };
  });
  s.check("ce_rows_with_labels", [](Case& c) -> LossFn {
    auto x = c.leaf("x", {3, 5}, -2, 2);
    auto w = c.weights({3});
    std::vector<int> labels(3);
    for (auto& l : labels) l = static_cast<int>(c.rng.below(5));
    return [=] { return weigh(ce_rows_with_labels(x, labels), w); };
  });
  s.check("ccc", [](Case& c) -> LossFn {
    auto x = c.leaf("x", {8}), y = c.leaf("y", {8});
    return [=] { return ccc_graph(x, y); };
  });
  s.check("va_ccc_loss", [](Case& c) -> LossFn {
    auto pv = c.leaf("pv", {6}), pa = c.leaf("pa", {6});
    auto lv = c.leaf("lv", {6}), la = c.leaf("la", {6});
    return [=] { return va_ccc_loss(pv, pa, lv, la); };
  });
  s.check("smooth_sequence", [](Case& c) -> LossFn {
    SmootherParams<D> p{c.leaf("theta", {1}), c.leaf("finit", {3})};
    auto v = c.leaf("v", {6, 3}), w = c.weights({6, 3});
    return [=] { return weigh(smooth_sequence(v, p), w); };
  });
  s.check("smooth_bidirectional", [](Case& c) -> LossFn {
    SmootherParams<D> p{c.leaf("theta", {1}), c.leaf("finit", {3})};
    auto v = c.leaf("v", {6, 3}), w = c.weights({6, 3});
    return [=] { return weigh(smooth_bidirectional(v, p), w); };
  });
}

ModelConfig micro_config(const std::string& smoothing) {
  ModelConfig cfg;
  cfg.u = 3;
  cfg.d = 6;
  cfg.n_heads = 2;
  cfg.ffn_hidden = 16;
  cfg.image_size = 8;
  cfg.backbone_channels = 8;
  cfg.backbone_stages = 3;
  cfg.perspectives = 2;
  cfg.smoothing = smoothing;
  cfg.seed = 99;
  return cfg;
}

// Full-model loss on a fixed random 2-frame video: covers every module,
// including the smoothing recurrence parameters and the CCC loss path.
void add_model_check(Suite& s, const std::string& smoothing) {
  auto cfg = micro_config(smoothing);
  auto model = std::make_shared<Model<D>>(cfg);
  Rng rng(s.seed + 1);
  auto images = Tensor<D>::make({2, 3, cfg.image_size, cfg.image_size});
  for (auto& v : images->data) v = rng.uniform();
  std::vector<int> au_labels;
  for (int i = 0; i < 2 * kNumAUs; ++i) au_labels.push_back(static_cast<int>(rng.below(2)));
  const std::vector<int> expr_labels = {static_cast<int>(rng.below(kNumExprClasses)),
                                        static_cast<int>(rng.below(kNumExprClasses))};
  auto label_v = Tensor<D>::from_values({2}, {0.3, -0.5});
  auto label_a = Tensor<D>::from_values({2}, {-0.2, 0.6});

  auto loss_fn = [=]() {
    auto out = model->forward_video(images);
    auto l_au = au_bce_loss(out.au_logits, au_labels);
    auto l_expr = mean(ce_rows_with_labels(out.expr_logits, expr_labels));
    auto pred_v = reshape(slice_cols(out.va, 0, 1), {2});
    auto pred_a = reshape(slice_cols(out.va, 1, 1), {2});
    return total_loss(l_au, l_expr, va_ccc_loss(pred_v, pred_a, label_v, label_a));
  };

  auto res = grad_check(model->params(), loss_fn, 1e-3, 1e-3);
  char buf[256];
  std::snprintf(buf, sizeof(buf), "model_loss_%-13s max_rel=%-10.3g over %zu coords %s",
                smoothing.c_str(), res.max_rel_err, res.checked, res.ok ? "pass" : "FAIL");
  s.result.lines.emplace_back(buf);
  if (!res.ok)
    for (const auto& f : res.failures) s.result.lines.push_back("  " + f);
  s.result.ok = s.result.ok && res.ok;
}

}  // namespace

GradSuiteResult run_grad_suite(bool include_model_check, std::uint64_t seed) {
  const auto start = std::chrono::steady_clock::now();
  Suite s;
  s.seed = seed;
  add_primitive_checks(s);
  if (include_model_check) {
    add_model_check(s, "ts");
    add_model_check(s, "bts");
  }
  s.result.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return s.result;
}

}  // namespace tam
