#pragma once

#include <cmath>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "flowmat/numerics/tensor.hpp"

namespace flowmat::model {

// Named parameter tensors, iterated in sorted name order.
class ParamStore {
 public:
  Tensor& add(const std::string& name, Tensor t) {
    auto [it, inserted] = params_.emplace(name, std::move(t));
    if (!inserted) throw ValidationError("duplicate parameter " + name);
    return it->second;
  }

  const Tensor& get(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw ValidationError("unknown parameter " + name);
    return it->second;
  }
  Tensor& get(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) throw ValidationError("unknown parameter " + name);
    return it->second;
  }
  bool has(const std::string& name) const { return params_.count(name) != 0; }

  // Parameters whose name starts with any of `prefixes` and that take
  // gradients. An empty prefix list selects everything trainable.
  std::vector<Tensor> trainable(const std::vector<std::string>& prefixes = {}) const {
    std::vector<Tensor> out;
    for (const auto& [name, t] : params_) {
      if (!t.requires_grad()) continue;
      bool match = prefixes.empty();
      for (const auto& p : prefixes) match = match || name.rfind(p, 0) == 0;
      if (match) out.push_back(t);
    }
    return out;
  }

  void zero_grad() {
    for (auto& [name, t] : params_) t.zero_grad();
  }

  std::size_t count() const {
    std::size_t n = 0;
    for (const auto& [name, t] : params_) n += t.size();
    return n;
  }

  std::map<std::string, Tensor>& entries() { return params_; }
  const std::map<std::string, Tensor>& entries() const { return params_; }

 private:
  std::map<std::string, Tensor> params_;
};

// Deterministic parameter initialization from a single seed.
class Initializer {
 public:
  explicit Initializer(std::uint64_t seed) : rng_(seed) {}

  Tensor normal(Shape shape, double stddev, bool requires_grad = true) {
    std::normal_distribution<double> dist(0.0, stddev);
    std::vector<double> v(shape_numel(shape));
    for (auto& x : v) x = dist(rng_);
    return Tensor(std::move(shape), std::move(v), requires_grad);
  }
  // Weight of a linear map [fan_in x fan_out].
  Tensor linear(std::size_t fan_in, std::size_t fan_out) {
    return normal({fan_in, fan_out}, 1.0 / std::sqrt(static_cast<double>(fan_in)));
  }
  Tensor zeros(Shape shape, bool requires_grad = true) {
    return Tensor::zeros(std::move(shape), requires_grad);
  }
  Tensor ones(Shape shape, bool requires_grad = true) {
    return Tensor::full(std::move(shape), 1.0, requires_grad);
  }

 private:
  std::mt19937_64 rng_;
};

}  // namespace flowmat::model
