#pragma once

#include "dcqa/errors.hpp"
#include "dcqa/types.hpp"

#include <memory>
#include <string>
#include <vector>

namespace dcqa {

// One learnable tensor. Gradients accumulate across backward passes
// until the optimizer consumes and clears them.
struct Parameter {
  std::string name;
  Mat value;
  Mat grad;

  Parameter(std::string n, Mat v)
      : name(std::move(n)), value(std::move(v)), grad(Mat::Zero(value.rows(), value.cols())) {}
};

// Owns every learnable tensor of a model (backend + head). Pointers
// returned by add() stay valid for the lifetime of the store.
class ParameterStore {
 public:
  ParameterStore() = default;
  ParameterStore(const ParameterStore&) = delete;
  ParameterStore& operator=(const ParameterStore&) = delete;

  Parameter* add(const std::string& name, Mat value) {
    if (find(name) != nullptr) throw ArgumentError("duplicate parameter name: " + name);
    params_.push_back(std::make_unique<Parameter>(name, std::move(value)));
    return params_.back().get();
  }

  Parameter* find(const std::string& name) {
    for (auto& p : params_)
      if (p->name == name) return p.get();
    return nullptr;
  }

  const Parameter* find(const std::string& name) const {
    for (auto& p : params_)
      if (p->name == name) return p.get();
    return nullptr;
  }

  std::size_t size() const { return params_.size(); }
  Parameter& at(std::size_t i) { return *params_[i]; }
  const Parameter& at(std::size_t i) const { return *params_[i]; }

  void zero_grads() {
    for (auto& p : params_) p->grad.setZero();
  }

  // Total learnable scalar count.
  long long total_scalars() const {
    long long total = 0;
    for (const auto& p : params_) total += static_cast<long long>(p->value.size());
    return total;
  }

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
};

}  // namespace dcqa
