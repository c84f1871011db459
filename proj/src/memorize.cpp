#include "difc/memorize.hpp"

#include <array>
#include <cmath>
#include <stdexcept>

#include "difc/assembly.hpp"
#include "difc/rng.hpp"

namespace difc {

namespace {

Tensor dense_init(Rng& rng, std::size_t rows, std::size_t cols) {
  std::vector<double> data(rows * cols);
  const double sigma = 1.0 / std::sqrt(static_cast<double>(rows));
  for (double& v : data) v = rng.normal() * sigma;
  return Tensor(Shape{rows, cols}, std::move(data), /*requires_grad=*/true);
}

Tensor zero_bias(std::size_t len) {
  Tensor b = Tensor::zeros(Shape{len});
  b.set_requires_grad(true);
  return b;
}

Tensor head(const Tensor& h, const Tensor& w, const Tensor& b) {
  return softmax(add(contract(h, w, {{0, 0}}), b), 0);
}

// the four field distributions of one target row, as constants
std::array<Tensor, 4> target_fields(const ProgramMatrix& pm, std::size_t line) {
  const MachineLayout& lay = pm.layout;
  Tensor row = reshape(narrow(pm.rho, 0, line, 1), Shape{lay.row_width()});
  return {narrow(row, 0, lay.opcode_offset(), MachineLayout::opcode_width),
          narrow(row, 0, lay.a1_offset(), lay.n),
          narrow(row, 0, lay.a2_offset(), lay.n),
          narrow(row, 0, lay.dst_offset(), lay.n)};
}

}  // namespace

std::vector<Tensor> LineGenerator::parameters() const {
  return {line_embed, w1, b1, op_w, op_b, a1_w, a1_b, a2_w, a2_b, dst_w, dst_b};
}

LineGenerator make_line_generator(std::size_t lines,
                                  const MachineLayout& layout,
                                  std::size_t embed_dim, std::size_t hidden_dim,
                                  std::uint64_t seed) {
  layout.validate();
  if (lines == 0) throw std::invalid_argument("generator needs at least one line");
  if (embed_dim == 0 || hidden_dim == 0)
    throw std::invalid_argument("embed/hidden widths must be positive");
  Rng rng(seed);
  LineGenerator gen;
  gen.layout = layout;
  gen.lines = lines;
  gen.line_embed = dense_init(rng, lines, embed_dim);
  gen.w1 = dense_init(rng, embed_dim, hidden_dim);
  gen.b1 = zero_bias(hidden_dim);
  gen.op_w = dense_init(rng, hidden_dim, MachineLayout::opcode_width);
  gen.op_b = zero_bias(MachineLayout::opcode_width);
  gen.a1_w = dense_init(rng, hidden_dim, layout.n);
  gen.a1_b = zero_bias(layout.n);
  gen.a2_w = dense_init(rng, hidden_dim, layout.n);
  gen.a2_b = zero_bias(layout.n);
  gen.dst_w = dense_init(rng, hidden_dim, layout.n);
  gen.dst_b = zero_bias(layout.n);
  return gen;
}

Tensor generator_rho(const LineGenerator& gen) {
  std::vector<Tensor> rows;
  rows.reserve(gen.lines);
  const std::size_t e = gen.line_embed.shape()[1];
  for (std::size_t line = 0; line < gen.lines; ++line) {
    Tensor emb = reshape(narrow(gen.line_embed, 0, line, 1), Shape{e});
    Tensor h = tanh(add(contract(emb, gen.w1, {{0, 0}}), gen.b1));
    Tensor row = concat({head(h, gen.op_w, gen.op_b),
                         head(h, gen.a1_w, gen.a1_b),
                         head(h, gen.a2_w, gen.a2_b),
                         head(h, gen.dst_w, gen.dst_b)},
                        0);
    rows.push_back(reshape(row, Shape{1, gen.layout.row_width()}));
  }
  return concat(rows, 0);
}

MemorizeReport memorize(const ProgramMatrix& target, LineGenerator& gen,
                        const TrainConfig& config, double tolerance) {
  config.validate();
  if (!(gen.layout == target.layout))
    throw std::invalid_argument("generator layout does not match the target");
  if (gen.lines != target.lines())
    throw std::invalid_argument("generator emits " + std::to_string(gen.lines) +
                                " lines but the target has " +
                                std::to_string(target.lines()));

  SgdOptimizer opt(config.learning_rate, config.momentum);
  for (Tensor& p : gen.parameters()) opt.add_parameter(p);

  MemorizeReport report;
  const double norm = 1.0 / static_cast<double>(gen.lines);
  for (std::size_t epoch = 0; epoch < config.max_epochs; ++epoch) {
    Tensor rho = generator_rho(gen);
    Tensor loss;
    for (std::size_t line = 0; line < gen.lines; ++line) {
      Tensor row = reshape(narrow(rho, 0, line, 1),
                           Shape{gen.layout.row_width()});
      auto targets = target_fields(target, line);
      const MachineLayout& lay = gen.layout;
      Tensor line_loss = add(
          add(cross_entropy(narrow(row, 0, lay.opcode_offset(),
                                   MachineLayout::opcode_width),
                            targets[0]),
              cross_entropy(narrow(row, 0, lay.a1_offset(), lay.n), targets[1])),
          add(cross_entropy(narrow(row, 0, lay.a2_offset(), lay.n), targets[2]),
              cross_entropy(narrow(row, 0, lay.dst_offset(), lay.n),
                            targets[3])));
      loss = line == 0 ? line_loss : add(loss, line_loss);
    }
    const double mean_loss = loss.item() * norm;
    report.loss_curve.push_back(mean_loss);
    report.epochs = epoch + 1;
    report.final_loss = mean_loss;
    if (mean_loss < tolerance) {
      report.converged = true;
      break;
    }
    opt.zero_grad();
    backward(loss);
    opt.step();
  }

  // final snapshot: per-line losses and the symbolic comparison
  Tensor rho = generator_rho(gen);
  for (std::size_t line = 0; line < gen.lines; ++line) {
    Tensor row = reshape(narrow(rho, 0, line, 1), Shape{gen.layout.row_width()});
    auto targets = target_fields(target, line);
    const MachineLayout& lay = gen.layout;
    double line_loss =
        cross_entropy(narrow(row, 0, lay.opcode_offset(),
                             MachineLayout::opcode_width),
                      targets[0])
            .item();
    line_loss += cross_entropy(narrow(row, 0, lay.a1_offset(), lay.n),
                               targets[1])
                     .item();
    line_loss += cross_entropy(narrow(row, 0, lay.a2_offset(), lay.n),
                               targets[2])
                     .item();
    line_loss += cross_entropy(narrow(row, 0, lay.dst_offset(), lay.n),
                               targets[3])
                     .item();
    report.per_line_loss.push_back(line_loss);
  }

  ProgramMatrix produced;
  produced.layout = target.layout;
  produced.rho = Tensor(rho.shape(), rho.value());
  produced.programs = target.programs;
  report.symbolic_match = pretty_print(decompile(produced).program) ==
                          pretty_print(decompile(target).program);
  return report;
}

}  // namespace difc
