#include "difc/controller.hpp"

#include <cmath>
#include <stdexcept>
#include <string>
#include <unordered_set>

#include "difc/rng.hpp"

namespace difc {

void ControllerConfig::validate(std::size_t registers) const {
  if (vocab_size == 0) throw std::invalid_argument("vocab_size must be positive");
  if (max_tokens == 0) throw std::invalid_argument("max_tokens must be positive");
  if (embed_dim == 0 || hidden_dim == 0)
    throw std::invalid_argument("embed/hidden widths must be positive");
  if (num_entries == 0) throw std::invalid_argument("need at least one entry point");
  std::unordered_set<std::size_t> seen;
  for (std::size_t slot : reg_slots) {
    if (slot < 2)
      throw std::invalid_argument("register slots 0 and 1 are reserved");
    if (slot >= registers)
      throw std::invalid_argument("register slot " + std::to_string(slot) +
                                  " out of range (capacity " +
                                  std::to_string(registers) + ")");
    if (!seen.insert(slot).second)
      throw std::invalid_argument("duplicate register slot");
  }
  if (digit_tokens > vocab_size)
    throw std::invalid_argument("digit_tokens exceeds the vocabulary");
}

namespace {

Tensor dense_init(Rng& rng, std::size_t rows, std::size_t cols) {
  std::vector<double> data(rows * cols);
  const double sigma = 1.0 / std::sqrt(static_cast<double>(rows));
  for (double& v : data) v = rng.normal() * sigma;
  return Tensor(Shape{rows, cols}, std::move(data), /*requires_grad=*/true);
}

Tensor vec_init(Rng& rng, std::size_t len, double sigma) {
  std::vector<double> data(len);
  for (double& v : data) v = rng.normal() * sigma;
  return Tensor(Shape{len}, std::move(data), /*requires_grad=*/true);
}

Tensor zero_bias(std::size_t len) {
  Tensor b = Tensor::zeros(Shape{len});
  b.set_requires_grad(true);
  return b;
}

// {len, width} matrix whose rows stack the given 1-D tensors.
Tensor stack_rows(const std::vector<Tensor>& rows, std::size_t width) {
  std::vector<Tensor> shaped;
  shaped.reserve(rows.size());
  for (const Tensor& r : rows) shaped.push_back(reshape(r, Shape{1, width}));
  return concat(shaped, 0);
}

Tensor dense_tanh(const Tensor& x, const Tensor& w, const Tensor& b) {
  return tanh(add(contract(x, w, {{0, 0}}), b));
}

}  // namespace

std::vector<Tensor> Controller::parameters() const {
  std::vector<Tensor> out{token_embed, pos_embed, w1, b1, w2, b2,
                          select_w, select_b};
  if (config.encoder == EncoderKind::attention) out.push_back(attn_query);
  for (const Tensor& t : reg_w) out.push_back(t);
  for (const Tensor& t : reg_b) out.push_back(t);
  return out;
}

Controller make_controller(const ControllerConfig& config, std::uint64_t seed) {
  Controller ctrl;
  ctrl.config = config;
  Rng rng(seed);
  const std::size_t e = config.embed_dim;
  const std::size_t h = config.hidden_dim;
  // embedding rows are features, not reductions: unit-scale entries keep
  // one token's contribution visible through the mean pool
  {
    std::vector<double> data(config.vocab_size * e);
    for (double& v : data) v = rng.normal();
    ctrl.token_embed = Tensor(Shape{config.vocab_size, e}, std::move(data),
                              /*requires_grad=*/true);
  }
  // centered at 1 so training starts near plain mean pooling
  {
    std::vector<double> data(config.max_tokens * e);
    for (double& v : data) v = 1.0 + 0.5 * rng.normal();
    ctrl.pos_embed = Tensor(Shape{config.max_tokens, e}, std::move(data),
                            /*requires_grad=*/true);
  }
  ctrl.attn_query = vec_init(rng, e, 1.0);
  ctrl.w1 = dense_init(rng, e, h);
  ctrl.b1 = zero_bias(h);
  ctrl.w2 = dense_init(rng, h, h);
  ctrl.b2 = zero_bias(h);
  ctrl.select_w = dense_init(rng, h, config.num_entries);
  ctrl.select_b = zero_bias(config.num_entries);
  for (std::size_t i = 0; i < config.reg_slots.size(); ++i) {
    ctrl.reg_w.push_back(dense_init(rng, h, e));
    ctrl.reg_b.push_back(zero_bias(e));
  }
  return ctrl;
}

ControllerOutput controller_forward(const Controller& ctrl,
                                    const std::vector<std::size_t>& tokens) {
  const ControllerConfig& cfg = ctrl.config;
  if (tokens.empty()) throw std::invalid_argument("empty token sequence");
  if (tokens.size() > cfg.max_tokens)
    throw std::invalid_argument("sequence longer than the positional table");
  std::vector<Tensor> embedded;
  embedded.reserve(tokens.size());
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (tokens[i] >= cfg.vocab_size)
      throw std::invalid_argument("token id " + std::to_string(tokens[i]) +
                                  " outside the vocabulary");
    Tensor tok = reshape(narrow(ctrl.token_embed, 0, tokens[i], 1),
                         Shape{cfg.embed_dim});
    Tensor pos = reshape(narrow(ctrl.pos_embed, 0, i, 1), Shape{cfg.embed_dim});
    // multiplicative binding: position acts as a learned diagonal map, so
    // the pooled sum keeps who-was-where (an additive tag would wash out
    // under mean pooling and make operand order unrecoverable)
    embedded.push_back(mul(tok, pos));
  }
  Tensor stacked = stack_rows(embedded, cfg.embed_dim);

  Tensor pooled;
  if (cfg.encoder == EncoderKind::pooling) {
    Tensor w = Tensor::full(Shape{tokens.size()},
                            1.0 / static_cast<double>(tokens.size()));
    pooled = contract(w, stacked, {{0, 0}});
  } else {
    std::vector<Tensor> scores;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(cfg.embed_dim));
    scores.reserve(tokens.size());
    for (const Tensor& e : embedded)
      scores.push_back(reshape(scale(contract(ctrl.attn_query, e, {{0, 0}}),
                                     inv_sqrt),
                               Shape{1}));
    Tensor alpha = softmax(concat(scores, 0), 0);
    pooled = contract(alpha, stacked, {{0, 0}});
  }

  Tensor h1 = dense_tanh(pooled, ctrl.w1, ctrl.b1);
  Tensor h2 = dense_tanh(h1, ctrl.w2, ctrl.b2);

  ControllerOutput out;
  out.selection = softmax(add(contract(h2, ctrl.select_w, {{0, 0}}),
                              ctrl.select_b),
                          0);

  // digit reading of each position: the Word a pointer there would load
  std::vector<double> vals(tokens.size() * cfg.n, 0.0);
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const std::size_t v =
        tokens[i] < cfg.digit_tokens ? tokens[i] % cfg.n : 0;
    vals[i * cfg.n + v] = 1.0;
  }
  Tensor value_rows(Shape{tokens.size(), cfg.n}, std::move(vals));

  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(cfg.embed_dim));
  for (std::size_t i = 0; i < cfg.reg_slots.size(); ++i) {
    Tensor q = add(contract(h2, ctrl.reg_w[i], {{0, 0}}), ctrl.reg_b[i]);
    Tensor alpha = softmax(scale(contract(stacked, q, {{1, 0}}), inv_sqrt), 0);
    out.init_regs.push_back(contract(alpha, value_rows, {{0, 0}}));
  }
  return out;
}

MachineState controller_initial_state(const ControllerOutput& out,
                                      const std::vector<std::size_t>& entry_lines,
                                      const std::vector<std::size_t>& reg_slots,
                                      const MachineLayout& layout) {
  layout.validate();
  if (entry_lines.size() != out.selection.size())
    throw std::invalid_argument("selection width does not match entry count");
  if (reg_slots.size() != out.init_regs.size())
    throw std::invalid_argument("register head count does not match slots");
  for (std::size_t line : entry_lines)
    if (line >= layout.n)
      throw std::invalid_argument("entry line outside the line space");

  // c = sum_e selection_e * dirac(entry_e)
  std::vector<double> entries(entry_lines.size() * layout.n, 0.0);
  for (std::size_t e = 0; e < entry_lines.size(); ++e)
    entries[e * layout.n + entry_lines[e]] = 1.0;
  Tensor entry_rows(Shape{entry_lines.size(), layout.n}, std::move(entries));

  MachineState s;
  s.c = contract(out.selection, entry_rows, {{0, 0}});
  std::vector<double> mem(layout.mem_size * layout.n, 0.0);
  for (std::size_t row = 0; row < layout.mem_size; ++row)
    mem[row * layout.n] = 1.0;
  s.M = Tensor(Shape{layout.mem_size, layout.n}, std::move(mem));

  std::vector<Tensor> reg_rows(layout.registers);
  for (std::size_t r = 0; r < layout.registers; ++r)
    reg_rows[r] = one_hot(r == 0 ? 1 : 0, layout.n);
  for (std::size_t i = 0; i < reg_slots.size(); ++i) {
    if (reg_slots[i] < 2 || reg_slots[i] >= layout.registers)
      throw std::invalid_argument("register slot out of range");
    if (out.init_regs[i].size() != layout.n)
      throw std::invalid_argument("register head width does not match n");
    reg_rows[reg_slots[i]] = out.init_regs[i];
  }
  std::vector<Tensor> shaped;
  shaped.reserve(reg_rows.size());
  for (const Tensor& r : reg_rows) shaped.push_back(reshape(r, Shape{1, layout.n}));
  s.R = concat(shaped, 0);
  s.h = Tensor::scalar(0.0);
  s.t = 0;
  return s;
}

}  // namespace difc
