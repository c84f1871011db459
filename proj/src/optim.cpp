#include "difc/optim.hpp"

#include <stdexcept>

namespace difc {

ParameterMask::ParameterMask(Tensor m) : mask(std::move(m)) {
  for (double v : mask.value()) {
    if (v != 0.0 && v != 1.0)
      throw std::invalid_argument("ParameterMask: entries must be exactly 0 or 1");
  }
}

ParameterMask ParameterMask::ones(const Shape& shape) {
  ParameterMask m;
  m.mask = Tensor::full(shape, 1.0);
  return m;
}

ParameterMask ParameterMask::zeros(const Shape& shape) {
  ParameterMask m;
  m.mask = Tensor::zeros(shape);
  return m;
}

bool ParameterMask::all_zero() const {
  for (double v : mask.value())
    if (v != 0.0) return false;
  return true;
}

bool ParameterMask::all_one() const {
  for (double v : mask.value())
    if (v != 1.0) return false;
  return true;
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0))
    throw std::invalid_argument("TrainConfig: learning_rate must be positive");
  if (max_epochs == 0)
    throw std::invalid_argument("TrainConfig: max_epochs must be positive");
  if (batch_size == 0)
    throw std::invalid_argument("TrainConfig: batch_size must be positive");
  if (weight_decay < 0.0)
    throw std::invalid_argument("TrainConfig: weight_decay must be non-negative");
  if (!(stop_train_accuracy > 0.0))
    throw std::invalid_argument(
        "TrainConfig: stop_train_accuracy must be positive");
}

void masked_sgd_step(Tensor& theta, const ParameterMask& mask, double eta) {
  if (mask.mask.shape() != theta.shape())
    throw std::invalid_argument("masked_sgd_step: mask shape does not match parameter");
  if (mask.all_zero()) return;  // nothing trainable; grad may legitimately be absent
  if (theta.grad().empty())
    throw std::invalid_argument("masked_sgd_step: parameter has no gradient");
  auto& vals = theta.mutable_value();
  const auto& g = theta.grad();
  const auto& m = mask.mask.value();
  for (std::size_t i = 0; i < vals.size(); ++i) {
    if (m[i] != 0.0) vals[i] -= eta * g[i];
  }
}

SgdOptimizer::SgdOptimizer(double learning_rate, double momentum,
                           double weight_decay)
    : lr_(learning_rate), momentum_(momentum), weight_decay_(weight_decay) {
  if (!(learning_rate > 0.0))
    throw std::invalid_argument("SgdOptimizer: learning_rate must be positive");
  if (weight_decay < 0.0)
    throw std::invalid_argument("SgdOptimizer: weight_decay must be non-negative");
}

void SgdOptimizer::add_parameter(Tensor param, ParameterMask mask) {
  if (mask.mask.shape() != param.shape())
    throw std::invalid_argument("SgdOptimizer: mask shape does not match parameter");
  if (mask.all_zero()) {
    param.set_requires_grad(false);
    return;
  }
  param.set_requires_grad(true);
  velocity_.emplace_back(param.size(), 0.0);
  params_.push_back(std::move(param));
  masks_.push_back(std::move(mask));
}

void SgdOptimizer::add_parameter(Tensor param) {
  auto mask = ParameterMask::ones(param.shape());
  add_parameter(std::move(param), std::move(mask));
}

void SgdOptimizer::step() {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor& theta = params_[i];
    if (theta.grad().empty()) continue;  // parameter unused by this loss
    auto& vals = theta.mutable_value();
    const auto& g = theta.grad();
    const auto& m = masks_[i].mask.value();
    auto& v = velocity_[i];
    for (std::size_t k = 0; k < vals.size(); ++k) {
      if (m[k] == 0.0) continue;
      v[k] = momentum_ * v[k] + g[k] + weight_decay_ * vals[k];
      vals[k] -= lr_ * v[k];
    }
  }
}

void SgdOptimizer::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

}  // namespace difc
