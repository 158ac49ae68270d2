#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

namespace tam {

template <class T>
class Tensor;

template <class T>
using TensorPtr = std::shared_ptr<Tensor<T>>;

namespace detail {

inline bool& grad_mode_flag() {
  thread_local bool enabled = true;
  return enabled;
}

}  // namespace detail

inline bool grad_enabled() { return detail::grad_mode_flag(); }

// Disables tape recording on this thread while alive (inference, finite
// differences). Ops built under the guard carry no parents or backward_fn.
class NoGradGuard {
 public:
  NoGradGuard() : prev_(detail::grad_mode_flag()) { detail::grad_mode_flag() = false; }
  ~NoGradGuard() { detail::grad_mode_flag() = prev_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

inline std::string shape_str(const std::vector<int>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

inline std::size_t checked_numel(const std::vector<int>& shape) {
  if (shape.empty()) throw std::invalid_argument("tensor shape must have at least one dimension");
  std::size_t n = 1;
  for (int d : shape) {
    if (d <= 0) throw std::invalid_argument("tensor dimensions must be positive, got " + shape_str(shape));
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

// Row-major n-dimensional array with an optional gradient buffer and the
// links needed for reverse-mode differentiation. Interior nodes own their
// inputs through `parents` and carry a backward_fn; backward() releases
// both once gradients are propagated, so a recorded graph lives for
// exactly one forward/backward pass.
template <class T>
class Tensor : public std::enable_shared_from_this<Tensor<T>> {
 public:
  std::vector<int> shape;
  std::vector<T> data;
  std::vector<T> grad;  // same length as data once ensure_grad() ran
  bool requires_grad = false;

  std::vector<TensorPtr<T>> parents;
  std::function<void(Tensor<T>&)> backward_fn;

  static TensorPtr<T> make(std::vector<int> shape, bool requires_grad = false) {
    auto t = std::make_shared<Tensor<T>>();
    const std::size_t n = checked_numel(shape);
    t->shape = std::move(shape);
    t->data.assign(n, T(0));
    t->requires_grad = requires_grad;
    if (requires_grad) t->grad.assign(n, T(0));
    return t;
  }

  static TensorPtr<T> from_values(std::vector<int> shape, std::vector<T> values,
                                  bool requires_grad = false) {
    const std::size_t n = checked_numel(shape);
    if (values.size() != n) {
      throw std::invalid_argument("from_values: " + std::to_string(values.size()) +
                                  " values for shape " + shape_str(shape));
    }
    auto t = std::make_shared<Tensor<T>>();
    t->shape = std::move(shape);
    t->data = std::move(values);
    t->requires_grad = requires_grad;
    if (requires_grad) t->grad.assign(n, T(0));
    return t;
  }

  static TensorPtr<T> scalar(T v, bool requires_grad = false) {
    return from_values({1}, {v}, requires_grad);
  }

  static TensorPtr<T> full(std::vector<int> shape, T v, bool requires_grad = false) {
    auto t = make(std::move(shape), requires_grad);
    std::fill(t->data.begin(), t->data.end(), v);
    return t;
  }

  std::size_t numel() const { return data.size(); }
  int dim(int i) const { return shape[static_cast<std::size_t>(i)]; }
  int rank() const { return static_cast<int>(shape.size()); }
  bool is_leaf() const { return parents.empty(); }

  T item() const {
    if (data.size() != 1) {
      throw std::invalid_argument("item(): tensor " + shape_str(shape) + " is not scalar");
    }
    return data[0];
  }

  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), T(0));
  }

  void zero_grad() { std::fill(grad.begin(), grad.end(), T(0)); }
};

namespace detail {

template <class T>
inline bool any_requires(const TensorPtr<T>& t) {
  return t->requires_grad;
}

template <class T, class... Rest>
inline bool any_requires(const TensorPtr<T>& t, const Rest&... rest) {
  return t->requires_grad || any_requires(rest...);
}

template <class T, class... Parents>
inline bool track(const Parents&... parents) {
  return grad_mode_flag() && any_requires<T>(parents...);
}

template <class T>
inline void check_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape != b.shape) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape) +
                                " vs " + shape_str(b.shape));
  }
}

template <class T>
inline void check_scalar(const Tensor<T>& s, const char* op) {
  if (s.numel() != 1) {
    throw std::invalid_argument(std::string(op) + ": expected scalar, got " + shape_str(s.shape));
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// elementwise binary ops (same shape)
// ---------------------------------------------------------------------------

template <class T>
TensorPtr<T> add(const TensorPtr<T>& a, const TensorPtr<T>& b) {
  detail::check_same_shape(*a, *b, "add");
  auto out = Tensor<T>::make(a->shape, detail::track<T>(a, b));
  const std::size_t n = out->numel();
  for (std::size_t i = 0; i < n; ++i) out->data[i] = a->data[i] + b->data[i];
  if (out->requires_grad) {
    out->parents = {a, b};
    out->backward_fn = [](Tensor<T>& self) {
      auto& pa = *self.parents[0];
      auto& pb = *self.parents[1];
      const std::size_t m = self.numel();
      if (pa.requires_grad)
        for (std::size_t i = 0; i < m; ++i) pa.grad[i] += self.grad[i];
      if (pb.requires_grad)
        for (std::size_t i = 0; i < m; ++i) pb.grad[i] += self.grad[i];
    };
  }
  return out;
}

template <class T>
TensorPtr<T> sub(const TensorPtr<T>& a, const TensorPtr<T>& b) {
  detail::check_same_shape(*a, *b, "sub");
  auto out = Tensor<T>::make(a->shape, detail::track<T>(a, b));
  const std::size_t n = out->numel();
  for (std::size_t i = 0; i < n; ++i) out->data[i] = a->data[i] - b->data[i];
  if (out->requires_grad) {
    out->parents = {a, b};
    out->backward_fn = [](Tensor<T>& self) {
      auto& pa = *self.parents[0];
      auto& pb = *self.parents[1];
      const std::size_t m = self.numel();
      if (pa.requires_grad)
        for (std::size_t i = 0; i < m; ++i) pa.grad[i] += self.grad[i];
      if (pb.requires_grad)
        for (std::size_t i = 0; i < m; ++i) pb.grad[i] -= self.grad[i];
    };
  }
  return out;
}

template <class T>
TensorPtr<T> mul(const TensorPtr<T>& a, const TensorPtr<T>& b) {
  detail::check_same_shape(*a, *b, "mul");
  auto out = Tensor<T>::make(a->shape, detail::track<T>(a, b));
  const std::size_t n = out->numel();
  for (std::size_t i = 0; i < n; ++i) out->data[i] = a->data[i] * b->data[i];
  if (out->requires_grad) {
    out->parents = {a, b};
    out->backward_fn = [](Tensor<T>& self) {
      auto& pa = *self.parents[0];
      auto& pb = *self.parents[1];
      const std::size_t m = self.numel();
      if (pa.requires_grad)
        for (std::size_t i = 0; i < m; ++i) pa.grad[i] += self.grad[i] * pb.data[i];
      if (pb.requires_grad)
        for (std::size_t i = 0; i < m; ++i) pb.grad[i] += self.grad[i] * pa.data[i];
    };
  }
  return out;
}

template <class T>
TensorPtr<T> div(const TensorPtr<T>& a, const TensorPtr<T>& b) {
  detail::check_same_shape(*a, *b, "div");
  auto out = Tensor<T>::make(a->shape, detail::track<T>(a, b));
  const std::size_t n = out->numel();
  for (std::size_t i = 0; i < n; ++i) out->data[i] = a->data[i] / b->data[i];
  if (out->requires_grad) {
    out->parents = {a, b};
    out->backward_fn = [](Tensor<T>& self) {
      auto& pa = *self.parents[0];
      auto& pb = *self.parents[1];
      const std::size_t m = self.numel();
      if (pa.requires_grad)
        for (std::size_t i = 0; i < m; ++i) pa.grad[i] += self.grad[i] / pb.data[i];
      if (pb.requires_grad)
        for (std::size_t i = 0; i < m; ++i)
          pb.grad[i] -= self.grad[i] * pa.data[i] / (pb.data[i] * pb.data[i]);
    };
  }
  return out;
}

// ---------------------------------------------------------------------------
// scalar-constant and scalar-tensor broadcasts
// ---------------------------------------------------------------------------

template <class T>
TensorPtr<T> add_const(const TensorPtr<T>& a, double c) {
  auto out = Tensor<T>::make(a->shape, detail::track<T>(a));
  const std::size_t n = out->numel();
  for (std::size_t i = 0; i < n; ++i) out->data[i] = a->data[i] + static_cast<T>(c);
  if (out->requires_grad) {
    out->parents = {a};
    out->backward_fn = [](Tensor<T>& self) {
      auto& pa = *self.parents[0];
      if (!pa.requires_grad) return;
      const std::size_t m = self.numel();
      for (std::size_t i = 0; i < m; ++i) pa.grad[i] += self.grad[i];
    };
  }
  return out;
}

template <class T>
TensorPtr<T> mul_const(const TensorPtr<T>& a, double c) {
  auto out = Tensor<T>::make(a->shape, detail::track<T>(a));
  const std::size_t n = out->numel();
  const T k = static_cast<T>(c);
  for (std::size_t i = 0; i < n; ++i) out->data[i] = a->data[i] * k;
  if (out->requires_grad) {
    out->parents = {a};
    out->backward_fn = [k](Tensor<T>& self) {
      auto& pa = *self.parents[0];
      if (!pa.requires_grad) return;
      const std::size_t m = self.numel();
      for (std::size_t i = 0; i < m; ++i) pa.grad[i] += self.grad[i] * k;
    };
  }
  return out;
}

// x * s with s a 1-element tensor broadcast over x.
template <class T>
TensorPtr<T> smul(const TensorPtr<T>& x, const TensorPtr<T>& s) {
  detail::check_scalar(*s, "smul");
  auto out = Tensor<T>::make(x->shape, detail::track<T>(x, s));
  const std::size_t n = out->numel();
  const T k = s->data[0];
  for (std::size_t i = 0; i < n; ++i) out->data[i] = x->data[i] * k;
  if (out->requires_grad) {
    out->parents = {x, s};
    out->backward_fn = [](Tensor<T>& self) {
      auto& px = *self.parents[0];
      auto& ps = *self.parents[1];
      const std::size_t m = self.numel();
      if (px.requires_grad) {
        const T k2 = ps.data[0];
        for (std::size_t i = 0; i < m; ++i) px.grad[i] += self.grad[i] * k2;
      }
      if (ps.requires_grad) {
        T acc = T(0);
        for (std::size_t i = 0; i < m; ++i) acc += self.grad[i] * px.data[i];
        ps.grad[0] += acc;
      }
    };
  }
  return out;
}

// x / s with s a 1-element tensor broadcast over x.
template <class T>
TensorPtr<T> sdiv(const TensorPtr<T>& x, const TensorPtr<T>& s) {
  detail::check_scalar(*s, "sdiv");
  auto out = Tensor<T>::make(x->shape, detail::track<T>(x, s));
  const std::size_t n = out->numel();
  const T k = s->data[0];
  for (std::size_t i = 0; i < n; ++i) out->data[i] = x->data[i] / k;
  if (out->requires_grad) {
    out->parents = {x, s};
    out->backward_fn = [](Tensor<T>& self) {
      auto& px = *self.parents[0];
      auto& ps = *self.parents[1];
      const std::size_t m = self.numel();
      const T k2 = ps.data[0];
      if (px.requires_grad) {
        for (std::size_t i = 0; i < m; ++i) px.grad[i] += self.grad[i] / k2;
      }
      if (ps.requires_grad) {
        T acc = T(0);
        for (std::size_t i = 0; i < m; ++i) acc += self.grad[i] * px.data[i];
        ps.grad[0] -= acc / (k2 * k2);
      }
    };
  }
  return out;
}

// x - s with s a 1-element tensor broadcast over x.
template <class T>
TensorPtr<T> ssub(const TensorPtr<T>& x, const TensorPtr<T>& s) {
  detail::check_scalar(*s, "ssub");
  auto out = Tensor<T>::make(x->shape, detail::track<T>(x, s));
  const std::size_t n = out->numel();
  const T k = s->data[0];
  for (std::size_t i = 0; i < n; ++i) out->data[i] = x->data[i] - k;
  if (out->requires_grad) {
    out->parents = {x, s};
    out->backward_fn = [](Tensor<T>& self) {
      auto& px = *self.parents[0];
      auto& ps = *self.parents[1];
      const std::size_t m = self.numel();
      if (px.requires_grad) {
        for (std::size_t i = 0; i < m; ++i) px.grad[i] += self.grad[i];
      }
      if (ps.requires_grad) {
        T acc = T(0);
        for (std::size_t i = 0; i < m; ++i) acc += self.grad[i];
        ps.grad[0] -= acc;
      }
    };
  }
  return out;
}

// ---------------------------------------------------------------------------
// elementwise unary ops
// ---------------------------------------------------------------------------

template <class T>
TensorPtr<T> relu(const TensorPtr<T>& x) {
  auto out = Tensor<T>::make(x->shape, detail::track<T>(x));
  const std::size_t n = out->numel();
  for (std::size_t i = 0; i < n; ++i) out->data[i] = x->data[i] > T(0) ? x->data[i] : T(0);
  if (out->requires_grad) {
    out->parents = {x};
    out->backward_fn = [](Tensor<T>& self) {
      auto& px = *self.parents[0];
      if (!px.requires_grad) return;
      const std::size_t m = self.numel();
      for (std::size_t i = 0; i < m; ++i)
        if (px.data[i] > T(0)) px.grad[i] += self.grad[i];
    };
  }
  return out;
}

template <class T>
TensorPtr<T> sigmoid(const TensorPtr<T>& x) {
  auto out = Tensor<T>::make(x->shape, detail::track<T>(x));
  const std::size_t n = out->numel();
  for (std::size_t i = 0; i < n; ++i) {
    const T v = x->data[i];
    // split on sign so exp() never overflows
    out->data[i] = v >= T(0) ? T(1) / (T(1) + std::exp(-v))
                             : std::exp(v) / (T(1) + std::exp(v));
  }
  if (out->requires_grad) {
    out->parents = {x};
    out->backward_fn = [](Tensor<T>& self) {
      auto& px = *self.parents[0];
      if (!px.requires_grad) return;
      const std::size_t m = self.numel();
      for (std::size_t i = 0; i < m; ++i) {
        const T y = self.data[i];
        px.grad[i] += self.grad[i] * y * (T(1) - y);
      }
    };
  }
  return out;
}

template <class T>
TensorPtr<T> tanh(const TensorPtr<T>& x) {
  auto out = Tensor<T>::make(x->shape, detail::track<T>(x));
  const std::size_t n = out->numel();
  for (std::size_t i = 0; i < n; ++i) out->data[i] = std::tanh(x->data[i]);
  if (out->requires_grad) {
    out->parents = {x};
    out->backward_fn = [](Tensor<T>& self) {
      auto& px = *self.parents[0];
      if (!px.requires_grad) return;
      const std::size_t m = self.numel();
      for (std::size_t i = 0; i < m; ++i) {
        const T y = self.data[i];
        px.grad[i] += self.grad[i] * (T(1) - y * y);
      }
    };
  }
  return out;
}

// ln(1 + e^x); derivative is sigmoid(x).
template <class T>
TensorPtr<T> softplus(const TensorPtr<T>& x) {
  auto out = Tensor<T>::make(x->shape, detail::track<T>(x));
  const std::size_t n = out->numel();
  for (std::size_t i = 0; i < n; ++i) {
    const T v = x->data[i];
    out->data[i] = std::max(v, T(0)) + std::log1p(std::exp(-std::abs(v)));
  }
  if (out->requires_grad) {
    out->parents = {x};
    out->backward_fn = [](Tensor<T>& self) {
      auto& px = *self.parents[0];
      if (!px.requires_grad) return;
      const std::size_t m = self.numel();
      for (std::size_t i = 0; i < m; ++i) {
        const T v = px.data[i];
        const T s = v >= T(0) ? T(1) / (T(1) + std::exp(-v)) : std::exp(v) / (T(1) + std::exp(v));
        px.grad[i] += self.grad[i] * s;
      }
    };
  }
  return out;
}

// ---------------------------------------------------------------------------
// reductions
// ---------------------------------------------------------------------------

template <class T>
TensorPtr<T> sum(const TensorPtr<T>& x) {
  auto out = Tensor<T>::make({1}, detail::track<T>(x));
  T acc = T(0);
  for (const T v : x->data) acc += v;
  out->data[0] = acc;
  if (out->requires_grad) {
    out->parents = {x};
    out->backward_fn = [](Tensor<T>& self) {
      auto& px = *self.parents[0];
      if (!px.requires_grad) return;
      const T g = self.grad[0];
      const std::size_t m = px.numel();
      for (std::size_t i = 0; i < m; ++i) px.grad[i] += g;
    };
  }
  return out;
}

template <class T>
TensorPtr<T> mean(const TensorPtr<T>& x) {
  return mul_const(sum(x), 1.0 / static_cast<double>(x->numel()));
}

// ---------------------------------------------------------------------------
// shape ops
// ---------------------------------------------------------------------------

template <class T>
TensorPtr<T> reshape(const TensorPtr<T>& x, std::vector<int> new_shape) {
  if (checked_numel(new_shape) != x->numel()) {
    throw std::invalid_argument("reshape: cannot view " + shape_str(x->shape) + " as " +
                                shape_str(new_shape));
  }
  auto out = Tensor<T>::make(std::move(new_shape), detail::track<T>(x));
  out->data = x->data;
  if (out->requires_grad) {
    out->parents = {x};
    out->backward_fn = [](Tensor<T>& self) {
      auto& px = *self.parents[0];
      if (!px.requires_grad) return;
      const std::size_t m = self.numel();
      for (std::size_t i = 0; i < m; ++i) px.grad[i] += self.grad[i];
    };
  }
  return out;
}

// Drops the leading axis: x[i, ...] for rank >= 2, x[i] as a 1-element
// tensor for rank 1.
template <class T>
TensorPtr<T> slice_axis0(const TensorPtr<T>& x, int index) {
  const int d0 = x->dim(0);
  if (index < 0 || index >= d0) {
    throw std::invalid_argument("slice_axis0: index " + std::to_string(index) +
                                " out of range for " + shape_str(x->shape));
  }
  std::vector<int> out_shape(x->shape.begin() + 1, x->shape.end());
  if (out_shape.empty()) out_shape = {1};
  const std::size_t block = x->numel() / static_cast<std::size_t>(d0);
  auto out = Tensor<T>::make(out_shape, detail::track<T>(x));
  const std::size_t base = static_cast<std::size_t>(index) * block;
  for (std::size_t i = 0; i < block; ++i) out->data[i] = x->data[base + i];
  if (out->requires_grad) {
    out->parents = {x};
    out->backward_fn = [base](Tensor<T>& self) {
      auto& px = *self.parents[0];
      if (!px.requires_grad) return;
      const std::size_t m = self.numel();
      for (std::size_t i = 0; i < m; ++i) px.grad[base + i] += self.grad[i];
    };
  }
  return out;
}

// Columns [c0, c0+len) of a 2-d tensor.
template <class T>
TensorPtr<T> slice_cols(const TensorPtr<T>& x, int c0, int len) {
  if (x->rank() != 2) throw std::invalid_argument("slice_cols: need rank 2, got " + shape_str(x->shape));
  const int rows = x->dim(0), cols = x->dim(1);
  if (c0 < 0 || len <= 0 || c0 + len > cols) {
    throw std::invalid_argument("slice_cols: invalid range [" + std::to_string(c0) + ", " +
                                std::to_string(c0 + len) + ") for " + shape_str(x->shape));
  }
  auto out = Tensor<T>::make({rows, len}, detail::track<T>(x));
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < len; ++c)
      out->data[static_cast<std::size_t>(r) * len + c] =
          x->data[static_cast<std::size_t>(r) * cols + c0 + c];
  if (out->requires_grad) {
    out->parents = {x};
    out->backward_fn = [c0, len, cols, rows](Tensor<T>& self) {
      auto& px = *self.parents[0];
      if (!px.requires_grad) return;
      for (int r = 0; r < rows; ++r)
        for (int c = 0; c < len; ++c)
          px.grad[static_cast<std::size_t>(r) * cols + c0 + c] +=
              self.grad[static_cast<std::size_t>(r) * len + c];
    };
  }
  return out;
}

// Concatenates along axis 0; parts must share trailing dimensions.
template <class T>
TensorPtr<T> concat_axis0(const std::vector<TensorPtr<T>>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_axis0: no parts");
  std::vector<int> tail(parts[0]->shape.begin() + 1, parts[0]->shape.end());
  int d0 = 0;
  bool rec = false;
  for (const auto& p : parts) {
    std::vector<int> t(p->shape.begin() + 1, p->shape.end());
    if (t != tail) {
      throw std::invalid_argument("concat_axis0: trailing shape mismatch " +
                                  shape_str(parts[0]->shape) + " vs " + shape_str(p->shape));
    }
    d0 += p->dim(0);
    rec = rec || p->requires_grad;
  }
  std::vector<int> out_shape{d0};
  out_shape.insert(out_shape.end(), tail.begin(), tail.end());
  auto out = Tensor<T>::make(out_shape, grad_enabled() && rec);
  std::size_t off = 0;
  for (const auto& p : parts) {
    std::copy(p->data.begin(), p->data.end(), out->data.begin() + off);
    off += p->numel();
  }
  if (out->requires_grad) {
    out->parents = parts;
    out->backward_fn = [](Tensor<T>& self) {
      std::size_t off2 = 0;
      for (auto& p : self.parents) {
        const std::size_t m = p->numel();
        if (p->requires_grad)
          for (std::size_t i = 0; i < m; ++i) p->grad[i] += self.grad[off2 + i];
        off2 += m;
      }
    };
  }
  return out;
}

// Stacks 1-d tensors of equal width into an [n x d] matrix.
template <class T>
TensorPtr<T> stack_rows(const std::vector<TensorPtr<T>>& rows) {
  if (rows.empty()) throw std::invalid_argument("stack_rows: no rows");
  const int d = static_cast<int>(rows[0]->numel());
  bool rec = false;
  for (const auto& r : rows) {
    if (r->rank() != 1 || static_cast<int>(r->numel()) != d) {
      throw std::invalid_argument("stack_rows: row shape mismatch " + shape_str(rows[0]->shape) +
                                  " vs " + shape_str(r->shape));
    }
    rec = rec || r->requires_grad;
  }
  auto out = Tensor<T>::make({static_cast<int>(rows.size()), d}, grad_enabled() && rec);
  for (std::size_t r = 0; r < rows.size(); ++r)
    std::copy(rows[r]->data.begin(), rows[r]->data.end(), out->data.begin() + r * d);
  if (out->requires_grad) {
    out->parents = rows;
    out->backward_fn = [d](Tensor<T>& self) {
      for (std::size_t r = 0; r < self.parents.size(); ++r) {
        auto& p = *self.parents[r];
        if (!p.requires_grad) continue;
        for (int i = 0; i < d; ++i) p.grad[i] += self.grad[r * d + i];
      }
    };
  }
  return out;
}

// Concatenates 2-d tensors along columns; equal row counts required.
template <class T>
TensorPtr<T> concat_cols(const std::vector<TensorPtr<T>>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no parts");
  const int rows = parts[0]->dim(0);
  int cols = 0;
  bool rec = false;
  for (const auto& p : parts) {
    if (p->rank() != 2 || p->dim(0) != rows) {
      throw std::invalid_argument("concat_cols: shape mismatch " + shape_str(parts[0]->shape) +
                                  " vs " + shape_str(p->shape));
    }
    cols += p->dim(1);
    rec = rec || p->requires_grad;
  }
  auto out = Tensor<T>::make({rows, cols}, grad_enabled() && rec);
  int c0 = 0;
  for (const auto& p : parts) {
    const int pc = p->dim(1);
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < pc; ++c)
        out->data[static_cast<std::size_t>(r) * cols + c0 + c] =
            p->data[static_cast<std::size_t>(r) * pc + c];
    c0 += pc;
  }
  if (out->requires_grad) {
    out->parents = parts;
    out->backward_fn = [rows, cols](Tensor<T>& self) {
      int cc = 0;
      for (auto& pp : self.parents) {
        const int pc = pp->dim(1);
        if (pp->requires_grad) {
          for (int r = 0; r < rows; ++r)
            for (int c = 0; c < pc; ++c)
              pp->grad[static_cast<std::size_t>(r) * pc + c] +=
                  self.grad[static_cast<std::size_t>(r) * cols + cc + c];
        }
        cc += pc;
      }
    };
  }
  return out;
}

// ---------------------------------------------------------------------------
// linear algebra
// ---------------------------------------------------------------------------

template <class T>
TensorPtr<T> transpose(const TensorPtr<T>& x) {
  if (x->rank() != 2) throw std::invalid_argument("transpose: need rank 2, got " + shape_str(x->shape));
  const int r = x->dim(0), c = x->dim(1);
  auto out = Tensor<T>::make({c, r}, detail::track<T>(x));
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j)
      out->data[static_cast<std::size_t>(j) * r + i] = x->data[static_cast<std::size_t>(i) * c + j];
  if (out->requires_grad) {
    out->parents = {x};
    out->backward_fn = [r, c](Tensor<T>& self) {
      auto& px = *self.parents[0];
      if (!px.requires_grad) return;
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j)
          px.grad[static_cast<std::size_t>(i) * c + j] +=
              self.grad[static_cast<std::size_t>(j) * r + i];
    };
  }
  return out;
}

// C[m x n] = A[m x k] * B[k x n]. Backward: dA = dC * B^T, dB = A^T * dC.
template <class T>
TensorPtr<T> matmul(const TensorPtr<T>& a, const TensorPtr<T>& b) {
  if (a->rank() != 2 || b->rank() != 2) {
    throw std::invalid_argument("matmul: need rank-2 operands, got " + shape_str(a->shape) +
                                " and " + shape_str(b->shape));
  }
  const int m = a->dim(0), k = a->dim(1), k2 = b->dim(0), n = b->dim(1);
  if (k != k2) {
    throw std::invalid_argument("matmul: inner dimensions disagree: " + shape_str(a->shape) +
                                " vs " + shape_str(b->shape));
  }
  auto out = Tensor<T>::make({m, n}, detail::track<T>(a, b));
  const T* ad = a->data.data();
  const T* bd = b->data.data();
  T* cd = out->data.data();
  for (int i = 0; i < m; ++i) {
    T* crow = cd + static_cast<std::size_t>(i) * n;
    for (int p = 0; p < k; ++p) {
      const T av = ad[static_cast<std::size_t>(i) * k + p];
      const T* brow = bd + static_cast<std::size_t>(p) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
  if (out->requires_grad) {
    out->parents = {a, b};
    out->backward_fn = [m, k, n](Tensor<T>& self) {
      auto& pa = *self.parents[0];
      auto& pb = *self.parents[1];
      const T* g = self.grad.data();
      if (pa.requires_grad) {
        T* da = pa.grad.data();
        const T* bd2 = pb.data.data();
        for (int i = 0; i < m; ++i)
          for (int p = 0; p < k; ++p) {
            T acc = T(0);
            const T* grow = g + static_cast<std::size_t>(i) * n;
            const T* brow = bd2 + static_cast<std::size_t>(p) * n;
            for (int j = 0; j < n; ++j) acc += grow[j] * brow[j];
            da[static_cast<std::size_t>(i) * k + p] += acc;
          }
      }
      if (pb.requires_grad) {
        T* db = pb.grad.data();
        const T* ad2 = pa.data.data();
        for (int i = 0; i < m; ++i) {
          const T* grow = g + static_cast<std::size_t>(i) * n;
          for (int p = 0; p < k; ++p) {
            const T av = ad2[static_cast<std::size_t>(i) * k + p];
            T* brow = db + static_cast<std::size_t>(p) * n;
            for (int j = 0; j < n; ++j) brow[j] += av * grow[j];
          }
        }
      }
    };
  }
  return out;
}

// y[m] = W[m x n] * x[n].
template <class T>
TensorPtr<T> matvec(const TensorPtr<T>& w, const TensorPtr<T>& x) {
  if (w->rank() != 2 || x->rank() != 1) {
    throw std::invalid_argument("matvec: need matrix and vector, got " + shape_str(w->shape) +
                                " and " + shape_str(x->shape));
  }
  const int m = w->dim(0), n = w->dim(1);
  if (n != static_cast<int>(x->numel())) {
    throw std::invalid_argument("matvec: inner dimensions disagree: " + shape_str(w->shape) +
                                " vs " + shape_str(x->shape));
  }
  auto out = Tensor<T>::make({m}, detail::track<T>(w, x));
  for (int i = 0; i < m; ++i) {
    T acc = T(0);
    const T* row = w->data.data() + static_cast<std::size_t>(i) * n;
    for (int j = 0; j < n; ++j) acc += row[j] * x->data[j];
    out->data[i] = acc;
  }
  if (out->requires_grad) {
    out->parents = {w, x};
    out->backward_fn = [m, n](Tensor<T>& self) {
      auto& pw = *self.parents[0];
      auto& px = *self.parents[1];
      if (pw.requires_grad) {
        for (int i = 0; i < m; ++i) {
          const T g = self.grad[i];
          T* row = pw.grad.data() + static_cast<std::size_t>(i) * n;
          for (int j = 0; j < n; ++j) row[j] += g * px.data[j];
        }
      }
      if (px.requires_grad) {
        for (int i = 0; i < m; ++i) {
          const T g = self.grad[i];
          const T* row = pw.data.data() + static_cast<std::size_t>(i) * n;
          for (int j = 0; j < n; ++j) px.grad[j] += g * row[j];
        }
      }
    };
  }
  return out;
}

// Adds a row vector b[d] to every row of x[n x d].
template <class T>
TensorPtr<T> add_rowvec(const TensorPtr<T>& x, const TensorPtr<T>& b) {
  if (x->rank() != 2 || b->rank() != 1 || x->dim(1) != static_cast<int>(b->numel())) {
    throw std::invalid_argument("add_rowvec: shape mismatch " + shape_str(x->shape) + " vs " +
                                shape_str(b->shape));
  }
  const int rows = x->dim(0), d = x->dim(1);
  auto out = Tensor<T>::make(x->shape, detail::track<T>(x, b));
  for (int r = 0; r < rows; ++r)
    for (int j = 0; j < d; ++j)
      out->data[static_cast<std::size_t>(r) * d + j] =
          x->data[static_cast<std::size_t>(r) * d + j] + b->data[j];
  if (out->requires_grad) {
    out->parents = {x, b};
    out->backward_fn = [rows, d](Tensor<T>& self) {
      auto& px = *self.parents[0];
      auto& pb = *self.parents[1];
      if (px.requires_grad) {
        const std::size_t m = self.numel();
        for (std::size_t i = 0; i < m; ++i) px.grad[i] += self.grad[i];
      }
      if (pb.requires_grad) {
        for (int r = 0; r < rows; ++r)
          for (int j = 0; j < d; ++j) pb.grad[j] += self.grad[static_cast<std::size_t>(r) * d + j];
      }
    };
  }
  return out;
}

// ---------------------------------------------------------------------------
// convolution
// ---------------------------------------------------------------------------

// Cross-correlation of input[c x h x w] with kernels[f x c x k x k], zero
// padding, square kernels. Output spatial size floor((h + 2p - k)/s) + 1.
template <class T>
TensorPtr<T> conv2d(const TensorPtr<T>& input, const TensorPtr<T>& kernels, int stride,
                    int padding) {
  if (input->rank() != 3 || kernels->rank() != 4) {
    throw std::invalid_argument("conv2d: need input rank 3 and kernels rank 4, got " +
                                shape_str(input->shape) + " and " + shape_str(kernels->shape));
  }
  const int c = input->dim(0), h = input->dim(1), w = input->dim(2);
  const int f = kernels->dim(0), kc = kernels->dim(1), kh = kernels->dim(2), kw = kernels->dim(3);
  if (kc != c) {
    throw std::invalid_argument("conv2d: channel mismatch " + shape_str(input->shape) + " vs " +
                                shape_str(kernels->shape));
  }
  if (kh != kw) throw std::invalid_argument("conv2d: kernels must be square, got " + shape_str(kernels->shape));
  if (stride < 1) throw std::invalid_argument("conv2d: stride must be >= 1");
  if (padding < 0) throw std::invalid_argument("conv2d: padding must be >= 0");
  const int k = kh;
  if (k > h + 2 * padding || k > w + 2 * padding) {
    throw std::invalid_argument("conv2d: kernel " + shape_str(kernels->shape) +
                                " larger than padded input " + shape_str(input->shape));
  }
  const int ho = (h + 2 * padding - k) / stride + 1;
  const int wo = (w + 2 * padding - k) / stride + 1;
  auto out = Tensor<T>::make({f, ho, wo}, detail::track<T>(input, kernels));

  auto in_at = [&](const std::vector<T>& buf, int ch, int y, int x) -> T {
    if (y < 0 || y >= h || x < 0 || x >= w) return T(0);
    return buf[(static_cast<std::size_t>(ch) * h + y) * w + x];
  };

  for (int of = 0; of < f; ++of)
    for (int oy = 0; oy < ho; ++oy)
      for (int ox = 0; ox < wo; ++ox) {
        T acc = T(0);
        for (int ch = 0; ch < c; ++ch)
          for (int i = 0; i < k; ++i)
            for (int j = 0; j < k; ++j) {
              const int iy = oy * stride - padding + i;
              const int ix = ox * stride - padding + j;
              acc += in_at(input->data, ch, iy, ix) *
                     kernels->data[((static_cast<std::size_t>(of) * c + ch) * k + i) * k + j];
            }
        out->data[(static_cast<std::size_t>(of) * ho + oy) * wo + ox] = acc;
      }

  if (out->requires_grad) {
    out->parents = {input, kernels};
    out->backward_fn = [c, h, w, f, k, stride, padding, ho, wo](Tensor<T>& self) {
      auto& pin = *self.parents[0];
      auto& pker = *self.parents[1];
      const bool gi = pin.requires_grad;
      const bool gk = pker.requires_grad;
      for (int of = 0; of < f; ++of)
        for (int oy = 0; oy < ho; ++oy)
          for (int ox = 0; ox < wo; ++ox) {
            const T g = self.grad[(static_cast<std::size_t>(of) * ho + oy) * wo + ox];
            if (g == T(0)) continue;
            for (int ch = 0; ch < c; ++ch)
              for (int i = 0; i < k; ++i)
                for (int j = 0; j < k; ++j) {
                  const int iy = oy * stride - padding + i;
                  const int ix = ox * stride - padding + j;
                  if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
                  const std::size_t ki = ((static_cast<std::size_t>(of) * c + ch) * k + i) * k + j;
                  const std::size_t ii = (static_cast<std::size_t>(ch) * h + iy) * w + ix;
                  if (gi) pin.grad[ii] += g * pker.data[ki];
                  if (gk) pker.grad[ki] += g * pin.data[ii];
                }
          }
    };
  }
  return out;
}

// Adds a per-channel bias b[f] over the spatial grid of x[f x h x w].
template <class T>
TensorPtr<T> add_channel_bias(const TensorPtr<T>& x, const TensorPtr<T>& b) {
  if (x->rank() != 3 || b->rank() != 1 || x->dim(0) != static_cast<int>(b->numel())) {
    throw std::invalid_argument("add_channel_bias: shape mismatch " + shape_str(x->shape) +
                                " vs " + shape_str(b->shape));
  }
  const int f = x->dim(0);
  const std::size_t hw = x->numel() / static_cast<std::size_t>(f);
  auto out = Tensor<T>::make(x->shape, detail::track<T>(x, b));
  for (int ch = 0; ch < f; ++ch)
    for (std::size_t i = 0; i < hw; ++i)
      out->data[ch * hw + i] = x->data[ch * hw + i] + b->data[ch];
  if (out->requires_grad) {
    out->parents = {x, b};
    out->backward_fn = [f, hw](Tensor<T>& self) {
      auto& px = *self.parents[0];
      auto& pb = *self.parents[1];
      if (px.requires_grad) {
        const std::size_t m = self.numel();
        for (std::size_t i = 0; i < m; ++i) px.grad[i] += self.grad[i];
      }
      if (pb.requires_grad) {
        for (int ch = 0; ch < f; ++ch) {
          T acc = T(0);
          for (std::size_t i = 0; i < hw; ++i) acc += self.grad[ch * hw + i];
          pb.grad[ch] += acc;
        }
      }
    };
  }
  return out;
}

// ---------------------------------------------------------------------------
// softmax and layer norm
// ---------------------------------------------------------------------------

// Softmax along `axis`, computed with max subtraction.
template <class T>
TensorPtr<T> softmax(const TensorPtr<T>& x, int axis) {
  if (axis < 0 || axis >= x->rank()) {
    throw std::invalid_argument("softmax: axis " + std::to_string(axis) + " invalid for " +
                                shape_str(x->shape));
  }
  const int n = x->dim(axis);
  std::size_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= static_cast<std::size_t>(x->dim(i));
  for (int i = axis + 1; i < x->rank(); ++i) inner *= static_cast<std::size_t>(x->dim(i));

  auto out = Tensor<T>::make(x->shape, detail::track<T>(x));
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * n * inner + in;
      T mx = x->data[base];
      for (int i = 1; i < n; ++i) mx = std::max(mx, x->data[base + i * inner]);
      T denom = T(0);
      for (int i = 0; i < n; ++i) {
        const T e = std::exp(x->data[base + i * inner] - mx);
        out->data[base + i * inner] = e;
        denom += e;
      }
      for (int i = 0; i < n; ++i) out->data[base + i * inner] /= denom;
    }

  if (out->requires_grad) {
    out->parents = {x};
    out->backward_fn = [n, outer, inner](Tensor<T>& self) {
      auto& px = *self.parents[0];
      if (!px.requires_grad) return;
      for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t in = 0; in < inner; ++in) {
          const std::size_t base = o * n * inner + in;
          T dot = T(0);
          for (int i = 0; i < n; ++i)
            dot += self.grad[base + i * inner] * self.data[base + i * inner];
          for (int i = 0; i < n; ++i) {
            const std::size_t idx = base + i * inner;
            px.grad[idx] += self.data[idx] * (self.grad[idx] - dot);
          }
        }
    };
  }
  return out;
}

// Per-token normalization over the last axis, then affine: for each token
// x of width d, y = gain * (x - mean) / sqrt(var + eps) + bias, with
// population variance.
template <class T>
TensorPtr<T> layer_norm(const TensorPtr<T>& x, const TensorPtr<T>& gain, const TensorPtr<T>& bias,
                        double eps) {
  const int d = x->shape.back();
  if (gain->rank() != 1 || bias->rank() != 1 || static_cast<int>(gain->numel()) != d ||
      static_cast<int>(bias->numel()) != d) {
    throw std::invalid_argument("layer_norm: gain/bias must be [" + std::to_string(d) + "], got " +
                                shape_str(gain->shape) + " and " + shape_str(bias->shape));
  }
  const std::size_t tokens = x->numel() / static_cast<std::size_t>(d);
  auto out = Tensor<T>::make(x->shape, detail::track<T>(x, gain, bias));
  // x-hat per token is re-derived in backward from data and eps
  for (std::size_t t = 0; t < tokens; ++t) {
    const std::size_t base = t * d;
    T m = T(0);
    for (int i = 0; i < d; ++i) m += x->data[base + i];
    m /= static_cast<T>(d);
    T var = T(0);
    for (int i = 0; i < d; ++i) {
      const T c = x->data[base + i] - m;
      var += c * c;
    }
    var /= static_cast<T>(d);
    const T inv = T(1) / std::sqrt(var + static_cast<T>(eps));
    for (int i = 0; i < d; ++i)
      out->data[base + i] = gain->data[i] * (x->data[base + i] - m) * inv + bias->data[i];
  }
  if (out->requires_grad) {
    out->parents = {x, gain, bias};
    out->backward_fn = [d, tokens, eps](Tensor<T>& self) {
      auto& px = *self.parents[0];
      auto& pg = *self.parents[1];
      auto& pb = *self.parents[2];
      std::vector<T> xhat(static_cast<std::size_t>(d));
      for (std::size_t t = 0; t < tokens; ++t) {
        const std::size_t base = t * d;
        T m = T(0);
        for (int i = 0; i < d; ++i) m += px.data[base + i];
        m /= static_cast<T>(d);
        T var = T(0);
        for (int i = 0; i < d; ++i) {
          const T c = px.data[base + i] - m;
          var += c * c;
        }
        var /= static_cast<T>(d);
        const T inv = T(1) / std::sqrt(var + static_cast<T>(eps));
        for (int i = 0; i < d; ++i) xhat[i] = (px.data[base + i] - m) * inv;

        if (pb.requires_grad)
          for (int i = 0; i < d; ++i) pb.grad[i] += self.grad[base + i];
        if (pg.requires_grad)
          for (int i = 0; i < d; ++i) pg.grad[i] += self.grad[base + i] * xhat[i];
        if (px.requires_grad) {
          T mean_h = T(0), mean_hx = T(0);
          for (int i = 0; i < d; ++i) {
            const T hh = self.grad[base + i] * pg.data[i];
            mean_h += hh;
            mean_hx += hh * xhat[i];
          }
          mean_h /= static_cast<T>(d);
          mean_hx /= static_cast<T>(d);
          for (int i = 0; i < d; ++i) {
            const T hh = self.grad[base + i] * pg.data[i];
            px.grad[base + i] += inv * (hh - mean_h - xhat[i] * mean_hx);
          }
        }
      }
    };
  }
  return out;
}

// ---------------------------------------------------------------------------
// backward driver
// ---------------------------------------------------------------------------

// Reverse-mode sweep from a scalar loss. Gradients accumulate additively
// across fan-out. The visited subgraph's tape (parents and backward_fn)
// is released afterwards.
template <class T>
void backward(const TensorPtr<T>& loss) {
  if (!loss || loss->numel() != 1) {
    throw std::invalid_argument("backward: loss must be a scalar tensor");
  }
  if (!loss->requires_grad) {
    throw std::invalid_argument("backward: loss does not require grad");
  }

  // iterative post-order so deep recurrences cannot blow the call stack
  std::vector<Tensor<T>*> order;
  std::unordered_set<Tensor<T>*> seen;
  std::vector<std::pair<Tensor<T>*, std::size_t>> stack;
  stack.emplace_back(loss.get(), 0);
  seen.insert(loss.get());
  while (!stack.empty()) {
    auto& top = stack.back();
    if (top.second < top.first->parents.size()) {
      Tensor<T>* p = top.first->parents[top.second++].get();
      if (seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(top.first);
      stack.pop_back();
    }
  }

  for (auto* node : order)
    if (node->requires_grad) node->ensure_grad();
  loss->grad[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if ((*it)->backward_fn) (*it)->backward_fn(**it);
  }
  for (auto* node : order) {
    if (!node->parents.empty()) {
      node->parents.clear();
      node->backward_fn = nullptr;
    }
  }
}

template <class To, class From>
TensorPtr<To> cast(const TensorPtr<From>& x) {
  auto out = Tensor<To>::make(x->shape, false);
  for (std::size_t i = 0; i < x->numel(); ++i) out->data[i] = static_cast<To>(x->data[i]);
  out->requires_grad = x->requires_grad;
  if (out->requires_grad) out->ensure_grad();
  return out;
}

}  // namespace tam
