#pragma once

#include <cstdint>
#include <vector>

#include "difc/tensor.hpp"

namespace difc {

/// 0/1 gate per parameter entry. Entries with mask 0 are frozen: updates
/// never store to them, so they stay bit-identical forever.
struct ParameterMask {
  Tensor mask;

  ParameterMask() = default;
  explicit ParameterMask(Tensor m);  // validates entries are exactly 0 or 1

  static ParameterMask ones(const Shape& shape);
  static ParameterMask zeros(const Shape& shape);

  bool all_zero() const;
  bool all_one() const;
};

struct TrainConfig {
  double learning_rate{0.05};
  double momentum{0.0};
  double weight_decay{0.0};  // L2 coefficient folded into the gradient
  std::size_t max_epochs{100};
  std::size_t batch_size{1};
  // Stop after the first epoch whose training accuracy (in percent,
  // matching EpochMetrics) reaches this value. Values above 100 (the
  // default) disable the stop.
  double stop_train_accuracy{101.0};
  std::uint64_t seed{0};

  void validate() const;  // learning_rate > 0, weight_decay >= 0, counts > 0
};

/// theta -= eta * (grad ⊙ mask), skipping the store entirely where mask is 0.
/// Throws if theta has no populated gradient.
void masked_sgd_step(Tensor& theta, const ParameterMask& mask, double eta);

/// SGD with optional momentum over a set of masked parameters. Velocity is
/// kept on the masked gradient, so frozen entries never accumulate motion.
/// Parameters whose mask is all-zero are dropped from gradient tracking
/// outright; they only cost forward flops.
class SgdOptimizer {
 public:
  SgdOptimizer(double learning_rate, double momentum = 0.0,
               double weight_decay = 0.0);

  void add_parameter(Tensor param, ParameterMask mask);
  void add_parameter(Tensor param);  // all-ones mask

  void step();
  void zero_grad();

  const std::vector<Tensor>& parameters() const { return params_; }

 private:
  double lr_;
  double momentum_;
  double weight_decay_;
  std::vector<Tensor> params_;
  std::vector<ParameterMask> masks_;
  std::vector<std::vector<double>> velocity_;
};

}  // namespace difc
