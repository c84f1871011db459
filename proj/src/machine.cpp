#include "difc/machine.hpp"

#include <algorithm>
#include <stdexcept>

#include <json.hpp>

namespace difc {

namespace {

Tensor make_halt_row(const MachineLayout& layout) {
  std::vector<double> row(layout.row_width(), 0.0);
  row[layout.opcode_offset() + machine_opcode_index(Opcode::halt)] = 1.0;
  row[layout.a1_offset() + 0] = 1.0;  // r0 everywhere: the write is a no-op
  row[layout.a2_offset() + 0] = 1.0;
  row[layout.dst_offset() + 0] = 1.0;
  return Tensor({layout.row_width()}, std::move(row));
}

/// u = R^T a over the register file; address mass outside [0, r) resolves
/// to the value 0, like the oracle's out-of-range reads.
Word resolve_reg(const Tensor& R, const Word& a, const Tensor& e0,
                 const Tensor& one) {
  const std::size_t r = R.shape()[0];
  Tensor a_r = narrow(a, 0, 0, r);
  Word u = contract(a_r, R, {{0, 0}});
  Tensor leak = sub(one, sum(a_r));
  return add(u, mul(leak, e0));
}

Word alu_value(const AluTable& table, const Tensor& op, const Word& u,
               const Word& v) {
  Tensor slice = contract(op, table.table, {{0, 0}});  // {n, n, n}
  Tensor partial = contract(u, slice, {{0, 0}});       // {n, n}
  return contract(v, partial, {{0, 0}});               // {n}
}

std::vector<std::size_t> argmax_rows(const Tensor& m) {
  const std::size_t rows = m.shape()[0];
  const std::size_t cols = m.shape()[1];
  std::vector<std::size_t> out(rows);
  for (std::size_t i = 0; i < rows; ++i) {
    const auto begin = m.value().begin() + static_cast<std::ptrdiff_t>(i * cols);
    out[i] = static_cast<std::size_t>(
        std::max_element(begin, begin + static_cast<std::ptrdiff_t>(cols)) -
        begin);
  }
  return out;
}

}  // namespace

MachineState initial_state(const MachineLayout& layout,
                           const std::vector<std::size_t>& mem0,
                           const std::vector<std::size_t>& regs0,
                           std::size_t entry_line) {
  layout.validate();
  if (mem0.size() > layout.mem_size)
    throw std::invalid_argument("initial memory larger than mem_size");
  if (regs0.size() > layout.registers)
    throw std::invalid_argument("more initial registers than the file holds");
  if (entry_line >= layout.n)
    throw std::invalid_argument("entry line outside the line space");

  const std::size_t n = layout.n;
  std::vector<double> mem(layout.mem_size * n, 0.0);
  for (std::size_t i = 0; i < layout.mem_size; ++i) {
    const std::size_t v = i < mem0.size() ? mem0[i] : 0;
    if (v >= n) throw std::invalid_argument("initial memory value >= n");
    mem[i * n + v] = 1.0;
  }
  std::vector<double> regs(layout.registers * n, 0.0);
  for (std::size_t i = 0; i < layout.registers; ++i) {
    std::size_t v = i < regs0.size() ? regs0[i] : 0;
    if (i == 0) v = 1;  // r0 holds the constant true flag
    if (v >= n) throw std::invalid_argument("initial register value >= n");
    regs[i * n + v] = 1.0;
  }

  MachineState s;
  s.M = Tensor({layout.mem_size, n}, std::move(mem));
  s.R = Tensor({layout.registers, n}, std::move(regs));
  s.c = one_hot(entry_line, n);
  s.h = Tensor::scalar(0.0);
  s.t = 0;
  return s;
}

Machine make_machine(const MachineLayout& layout) {
  layout.validate();
  Machine m;
  m.layout = layout;
  m.table = build_mod_table(machine_opcode_names(), layout.n);
  std::vector<double> inc(layout.n * layout.n, 0.0);
  for (std::size_t i = 0; i < layout.n; ++i)
    inc[i * layout.n + (i + 1) % layout.n] = 1.0;
  m.inc_matrix = Tensor({layout.n, layout.n}, std::move(inc));
  m.halt_row = make_halt_row(layout);
  m.e0 = one_hot(0, layout.n);
  m.one = Tensor::scalar(1.0);
  return m;
}

Instruction fetch(const ProgramMatrix& pm, const Word& c) {
  const MachineLayout& lay = pm.layout;
  if (c.dim() != 1 || c.shape()[0] != lay.n)
    throw std::invalid_argument("counter must be a Word of width n");

  const std::size_t rows = pm.lines();
  Tensor c_l = narrow(c, 0, 0, rows);
  Tensor inst_vec = contract(c_l, pm.rho, {{0, 0}});
  // counter mass past the last line executes an implicit halt
  Tensor leak = sub(Tensor::scalar(1.0), sum(c_l));
  inst_vec = add(inst_vec, mul(leak, make_halt_row(lay)));

  Instruction inst;
  inst.op = narrow(inst_vec, 0, lay.opcode_offset(), MachineLayout::opcode_width);
  inst.a1 = narrow(inst_vec, 0, lay.a1_offset(), lay.n);
  inst.a2 = narrow(inst_vec, 0, lay.a2_offset(), lay.n);
  inst.dst = narrow(inst_vec, 0, lay.dst_offset(), lay.n);
  inst.h_prob = element(inst.op, machine_opcode_index(Opcode::halt));
  inst.j_prob = element(inst.op, machine_opcode_index(Opcode::jump));
  inst.w_prob = element(inst.op, machine_opcode_index(Opcode::write));
  inst.jr_prob = element(inst.op, machine_opcode_index(Opcode::jumpr));
  inst.r_prob = element(inst.op, machine_opcode_index(Opcode::read));
  inst.s_prob = element(inst.op, machine_opcode_index(Opcode::store));
  inst.set_prob = element(inst.op, machine_opcode_index(Opcode::set));
  return inst;
}

Word read_mem(const Tensor& M, const Word& a) {
  if (M.dim() != 2 || a.dim() != 1 || M.shape()[0] != a.shape()[0])
    throw std::invalid_argument("address width must match the row count");
  return contract(a, M, {{0, 0}});
}

Tensor write_mem(const Tensor& M, const Word& a, const Word& val,
                 const Tensor& p) {
  const std::size_t rows = M.shape()[0];
  Tensor pa = mul(p, a);                                   // {rows}
  Tensor keep = sub(Tensor::full({rows}, 1.0), pa);        // 1 - p*a
  Tensor kept = mul(reshape(keep, {rows, 1}), M);
  Tensor written = contract(pa, val, {});                  // outer product
  return add(kept, written);
}

Tensor write_mem(const Tensor& M, const Word& a, const Word& val, double p) {
  return write_mem(M, a, val, Tensor::scalar(p));
}

Tensor write_reg(const Tensor& R, const Word& a, const Word& val) {
  return write_mem(R, a, val, Tensor::scalar(1.0));
}

Word alu(const AluTable& table, const Instruction& inst, const Tensor& R) {
  const Tensor e0 = one_hot(0, table.n());
  const Tensor one = Tensor::scalar(1.0);
  Word u = resolve_reg(R, inst.a1, e0, one);
  Word v = resolve_reg(R, inst.a2, e0, one);
  return alu_value(table, inst.op, u, v);
}

MachineState step(const MachineState& s, const ProgramMatrix& pm,
                  const Machine& m) {
  const MachineLayout& lay = m.layout;
  Instruction inst = fetch(pm, s.c);

  Word u = resolve_reg(s.R, inst.a1, m.e0, m.one);
  Word v = resolve_reg(s.R, inst.a2, m.e0, m.one);
  Word o_alu = alu_value(m.table, inst.op, u, v);

  Tensor inc_c = contract(s.c, m.inc_matrix, {{0, 0}});

  // read path: address is the value of register a1, truncated to memory;
  // out-of-range address mass reads the value 0
  Tensor addr = narrow(u, 0, 0, lay.mem_size);
  Tensor addr_leak = sub(m.one, sum(addr));
  Word mem_val = add(contract(addr, s.M, {{0, 0}}), mul(addr_leak, m.e0));

  // o = w_read*M[R[a1]] + w_store*inc(c) + w_set*a1 + rest*T[f](u, v)
  Tensor rest = sub(sub(sub(m.one, inst.r_prob), inst.s_prob), inst.set_prob);
  Word o = add(add(mul(inst.r_prob, mem_val), mul(inst.s_prob, inc_c)),
               add(mul(inst.set_prob, inst.a1), mul(rest, o_alu)));

  // halted mass changes nothing: every update is gated by the live mass
  Tensor live = sub(m.one, s.h);

  MachineState next;
  next.R = write_reg(s.R, mul(live, narrow(inst.dst, 0, 0, lay.registers)), o);
  next.M = write_mem(s.M, addr, v, mul(live, inst.w_prob));

  // p = P(condition register holds exactly 1); both jump flavors share it
  Tensor p_cond = element(u, 1);
  Tensor jp = mul(p_cond, inst.j_prob);
  Tensor jrp = mul(p_cond, inst.jr_prob);
  Tensor c_next = add(add(mul(sub(m.one, add(jp, jrp)), inc_c),
                          mul(jp, inst.a2)),
                      mul(jrp, v));
  next.c = mix(s.h, c_next, s.c);
  next.h = add(s.h, mul(live, inst.h_prob));
  next.t = s.t + 1;
  return next;
}

RunReport run(MachineState s0, const ProgramMatrix& pm, const Machine& m,
              std::size_t max_steps, RunMode mode, double halt_threshold) {
  if (max_steps == 0)
    throw std::invalid_argument("run needs a step budget of at least 1");
  if (!(halt_threshold > 0.0 && halt_threshold <= 1.0))
    throw std::invalid_argument("halt threshold must lie in (0, 1]");

  RunReport rep;
  rep.mode = mode;

  Tensor em = Tensor::zeros({m.layout.mem_size, m.layout.n});
  MachineState s = std::move(s0);
  for (std::size_t t = 0; t < max_steps; ++t) {
    Tensor h_before = s.h;
    s = step(s, pm, m);
    Tensor dh = sub(s.h, h_before);
    rep.halt_increments.push_back(dh.item());
    if (mode == RunMode::soft) em = add(em, mul(dh, s.M));
    if (mode == RunMode::thresholded && s.h.item() >= halt_threshold) break;
  }
  rep.steps = s.t;
  if (mode == RunMode::soft) {
    em = add(em, mul(sub(Tensor::scalar(1.0), s.h), s.M));
    rep.expected_memory = em;
  } else {
    rep.expected_memory = s.M;
    rep.timed_out = s.h.item() < halt_threshold;
  }
  rep.final_state = std::move(s);
  return rep;
}

Tensor loss_on_memory(const RunReport& report,
                      const std::vector<std::pair<std::size_t, Word>>& targets,
                      LossMode mode) {
  const Tensor& mem = mode == LossMode::expected_memory
                          ? report.expected_memory
                          : report.final_state.M;
  const std::size_t rows = mem.shape()[0];
  const std::size_t n = mem.shape()[1];
  Tensor total = Tensor::scalar(0.0);
  for (const auto& [address, target] : targets) {
    if (address >= rows)
      throw std::invalid_argument("loss target address " +
                                  std::to_string(address) +
                                  " outside memory of size " +
                                  std::to_string(rows));
    Tensor row = reshape(narrow(mem, 0, address, 1), {n});
    total = add(total, cross_entropy(row, target));
  }
  return total;
}

std::vector<std::size_t> decoded_memory(const MachineState& s) {
  return argmax_rows(s.M);
}

std::vector<std::size_t> decoded_registers(const MachineState& s) {
  return argmax_rows(s.R);
}

std::size_t decoded_counter(const MachineState& s) { return decode(s.c); }

std::string run_report_json(const RunReport& report) {
  nlohmann::json j;
  j["mode"] = report.mode == RunMode::soft ? "soft" : "thresholded";
  j["steps"] = report.steps;
  j["timed_out"] = report.timed_out;
  j["final_h"] = report.final_state.h.item();
  j["halting_trace"] = report.halt_increments;
  j["memory"] = decoded_memory(report.final_state);
  j["registers"] = decoded_registers(report.final_state);
  j["counter"] = decoded_counter(report.final_state);
  return j.dump(2);
}

}  // namespace difc
