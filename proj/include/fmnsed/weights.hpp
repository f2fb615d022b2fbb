#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "fmnsed/error.hpp"
#include "fmnsed/tensor.hpp"

namespace fmnsed {

/// How a declared parameter is initialised when no checkpoint is supplied.
enum class ParamInit { fan_in, zero, one, head_bias, ssm_a_log, ssm_dt_bias };

struct ParamDecl {
  std::string name;
  Shape shape;
  ParamInit init = ParamInit::fan_in;
};

using ParamInventory = std::vector<ParamDecl>;

inline std::size_t inventory_floats(const ParamInventory& inv) {
  std::size_t n = 0;
  for (const auto& d : inv) n += shape_numel(d.shape);
  return n;
}

/// Named parameter tensors. Names are unique and every value is finite.
class WeightStore {
 public:
  void insert(std::string name, Tensor value) {
    for (float v : value.data()) {
      if (!std::isfinite(v)) throw WeightError("parameter '" + name + "' contains a non-finite value");
    }
    if (tensors_.contains(name)) throw WeightError("duplicate parameter '" + name + "'");
    tensors_.emplace(std::move(name), std::move(value));
  }

  bool contains(std::string_view name) const { return tensors_.find(name) != tensors_.end(); }

  const Tensor& get(std::string_view name) const {
    auto it = tensors_.find(name);
    if (it == tensors_.end()) throw WeightError("missing parameter '" + std::string(name) + "'");
    if (observer_) observer_(name);
    return it->second;
  }

  const Tensor& get(std::string_view name, const Shape& expected) const {
    const Tensor& t = get(name);
    if (t.shape() != expected) {
      throw WeightError("parameter '" + std::string(name) + "' has shape " + shape_str(t.shape()) + ", expected " +
                        shape_str(expected));
    }
    return t;
  }

  std::size_t size() const { return tensors_.size(); }

  std::size_t total_floats() const {
    std::size_t n = 0;
    for (const auto& [name, t] : tensors_) n += t.size();
    return n;
  }

  /// Entries in lexicographic name order.
  const std::map<std::string, Tensor, std::less<>>& entries() const { return tensors_; }

  /// Throws WeightError naming the first inventory entry that is missing or
  /// mis-shaped.
  void validate(const ParamInventory& inventory) const {
    for (const auto& decl : inventory) {
      auto it = tensors_.find(decl.name);
      if (it == tensors_.end()) throw WeightError("missing parameter '" + decl.name + "'");
      if (it->second.shape() != decl.shape) {
        throw WeightError("parameter '" + decl.name + "' has shape " + shape_str(it->second.shape()) +
                          ", expected " + shape_str(decl.shape));
      }
    }
  }

  /// Test hook: called with every name looked up through get(). Not
  /// thread-safe; install only around single-threaded forwards.
  void set_access_observer(std::function<void(std::string_view)> observer) { observer_ = std::move(observer); }

 private:
  std::map<std::string, Tensor, std::less<>> tensors_;
  std::function<void(std::string_view)> observer_;
};

/// Fresh weights for an inventory, deterministic in `seed`.
inline WeightStore random_weights(const ParamInventory& inventory, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  WeightStore store;
  for (const auto& decl : inventory) {
    Tensor t(decl.shape);
    switch (decl.init) {
      case ParamInit::fan_in: {
        std::size_t fan_in = 1;
        for (std::size_t i = 1; i < decl.shape.size(); ++i) fan_in *= decl.shape[i];
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        std::uniform_real_distribution<double> dist(-bound, bound);
        for (float& v : t.data()) v = static_cast<float>(dist(rng));
        break;
      }
      case ParamInit::zero: break;
      case ParamInit::one:
        for (float& v : t.data()) v = 1.0f;
        break;
      case ParamInit::head_bias:
        for (float& v : t.data()) v = -5.0f;
        break;
      case ParamInit::ssm_a_log: {
        std::uniform_real_distribution<double> dist(1.0, 16.0);
        for (float& v : t.data()) v = static_cast<float>(std::log(dist(rng)));
        break;
      }
      case ParamInit::ssm_dt_bias: {
        // inverse softplus of dt drawn log-uniformly from [1e-3, 1e-1]
        std::uniform_real_distribution<double> dist(std::log(1e-3), std::log(1e-1));
        for (float& v : t.data()) {
          const double dt = std::exp(dist(rng));
          v = static_cast<float>(dt + std::log(-std::expm1(-dt)));
        }
        break;
      }
    }
    store.insert(decl.name, std::move(t));
  }
  return store;
}

}  // namespace fmnsed
