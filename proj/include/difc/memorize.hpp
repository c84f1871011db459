#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "difc/optim.hpp"
#include "difc/program_matrix.hpp"
#include "difc/tensor.hpp"

namespace difc {

/// A per-line program generator: a learned embedding per line pushed
/// through one tanh layer and four softmax field heads, emitting one
/// ProgramMatrix row per line. Overfitting it to a fixed target is
/// compilation by memorization.
struct LineGenerator {
  MachineLayout layout;
  std::size_t lines{0};
  Tensor line_embed;  // {lines, embed}
  Tensor w1, b1;      // {embed, hidden}, {hidden}
  Tensor op_w, op_b;  // {hidden, |A|}, {|A|}
  Tensor a1_w, a1_b;  // {hidden, n}, {n}
  Tensor a2_w, a2_b;
  Tensor dst_w, dst_b;

  std::vector<Tensor> parameters() const;
};

LineGenerator make_line_generator(std::size_t lines,
                                  const MachineLayout& layout,
                                  std::size_t embed_dim, std::size_t hidden_dim,
                                  std::uint64_t seed);

/// The generator's current program: {lines, row_width}, each row four
/// softmax field distributions. Differentiable.
Tensor generator_rho(const LineGenerator& gen);

struct MemorizeReport {
  bool converged{false};       // mean per-line loss < tolerance in budget
  bool symbolic_match{false};  // decompiled output == decompiled target
  std::size_t epochs{0};
  double final_loss{0};
  std::vector<double> per_line_loss;  // at stop
  std::vector<double> loss_curve;     // mean per-line loss per epoch
};

/// Full-batch gradient training of the generator against the target's
/// field distributions (summed per-field cross-entropy). Stops early once
/// the mean per-line loss drops under `tolerance`. Non-convergence is a
/// reported status, not an error; shape mismatches throw.
MemorizeReport memorize(const ProgramMatrix& target, LineGenerator& gen,
                        const TrainConfig& config, double tolerance = 1e-2);

}  // namespace difc
