#pragma once

#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "tam/rng.hpp"
#include "tam/tensor.hpp"

namespace tam {

// Ordered registry of named trainable tensors. Registration order is fixed
// so the optimizer, checkpoints, and the gradient checker all walk the same
// sequence.
template <class T>
class ParamRegistry {
 public:
  TensorPtr<T> add(const std::string& name, TensorPtr<T> p) {
    if (index_.count(name)) throw std::invalid_argument("duplicate parameter name: " + name);
    p->requires_grad = true;
    p->ensure_grad();
    index_[name] = names_.size();
    names_.push_back(name);
    params_.push_back(p);
    return p;
  }

  TensorPtr<T> get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::invalid_argument("unknown parameter: " + name);
    return params_[it->second];
  }

  bool has(const std::string& name) const { return index_.count(name) != 0; }
  std::size_t size() const { return params_.size(); }
  const std::vector<std::string>& names() const { return names_; }
  const std::vector<TensorPtr<T>>& tensors() const { return params_; }

  std::size_t total_scalars() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p->numel();
    return n;
  }

  void zero_grad() {
    for (auto& p : params_) p->zero_grad();
  }

 private:
  std::vector<std::string> names_;
  std::vector<TensorPtr<T>> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

// He-style fan-in scaling for conv and linear weights.
template <class T>
void init_normal(TensorPtr<T>& p, Rng& rng, double stddev) {
  for (auto& v : p->data) v = static_cast<T>(rng.normal() * stddev);
}

template <class T>
void init_constant(TensorPtr<T>& p, double v) {
  std::fill(p->data.begin(), p->data.end(), static_cast<T>(v));
}

}  // namespace tam
