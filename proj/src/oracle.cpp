#include <stdexcept>

#include "difc/assembly.hpp"
#include "difc/words.hpp"

namespace difc {

OracleState oracle_run(const Library& lib, const std::string& entry,
                       const std::vector<std::size_t>& mem0,
                       const std::vector<std::size_t>& regs0, std::size_t n,
                       std::size_t num_regs, std::size_t mem_size,
                       std::size_t max_steps) {
  auto it = lib.entry_points.find(entry);
  if (it == lib.entry_points.end())
    throw std::invalid_argument("oracle_run: unknown entry point '" + entry + "'");
  if (mem0.size() > mem_size || regs0.size() > num_regs)
    throw std::invalid_argument("oracle_run: initial state exceeds layout");
  for (std::size_t v : mem0)
    if (v >= n) throw std::invalid_argument("oracle_run: memory value >= n");
  for (std::size_t v : regs0)
    if (v >= n) throw std::invalid_argument("oracle_run: register value >= n");

  OracleState st;
  st.mem.assign(mem_size, 0);
  std::copy(mem0.begin(), mem0.end(), st.mem.begin());
  st.regs.assign(num_regs, 0);
  std::copy(regs0.begin(), regs0.end(), st.regs.begin());
  st.regs[0] = 1;  // convention: r0 holds the true flag
  st.pc = it->second;
  st.status = RunStatus::timeout;

  const std::size_t num_lines = lib.lines.size();
  auto reg_ok = [&](const Operand& o) { return o.value < num_regs; };

  while (st.steps < max_steps) {
    if (st.pc >= num_lines) {
      st.status = RunStatus::fault;
      return st;
    }
    const SymbolicInstruction& inst = lib.lines[st.pc];
    ++st.steps;
    switch (inst.op) {
      case Opcode::halt:
        st.status = RunStatus::halted;
        return st;
      case Opcode::jump: {
        if (!reg_ok(inst.args[0])) { st.status = RunStatus::fault; return st; }
        const bool taken = st.regs[inst.args[0].value] == 1;
        st.pc = taken ? inst.args[1].value : st.pc + 1;
        break;
      }
      case Opcode::jumpr: {
        if (!reg_ok(inst.args[0]) || !reg_ok(inst.args[1])) {
          st.status = RunStatus::fault;
          return st;
        }
        const bool taken = st.regs[inst.args[0].value] == 1;
        st.pc = taken ? st.regs[inst.args[1].value] : st.pc + 1;
        break;
      }
      case Opcode::store: {
        if (!reg_ok(inst.args[0])) { st.status = RunStatus::fault; return st; }
        st.regs[inst.args[0].value] = (st.pc + 1) % n;
        st.pc += 1;
        break;
      }
      case Opcode::read: {
        if (!reg_ok(inst.args[0]) || !reg_ok(inst.args[1])) {
          st.status = RunStatus::fault;
          return st;
        }
        const std::size_t addr = st.regs[inst.args[0].value];
        st.regs[inst.args[1].value] = addr < mem_size ? st.mem[addr] : 0;
        st.pc += 1;
        break;
      }
      case Opcode::write: {
        if (!reg_ok(inst.args[0]) || !reg_ok(inst.args[1])) {
          st.status = RunStatus::fault;
          return st;
        }
        const std::size_t addr = st.regs[inst.args[0].value];
        if (addr < mem_size) st.mem[addr] = st.regs[inst.args[1].value];
        st.pc += 1;
        break;
      }
      case Opcode::set: {
        if (!reg_ok(inst.args[1])) { st.status = RunStatus::fault; return st; }
        st.regs[inst.args[1].value] = inst.args[0].value % n;
        st.pc += 1;
        break;
      }
      case Opcode::copy:
      case Opcode::inc:
      case Opcode::dec: {
        if (!reg_ok(inst.args[0]) || !reg_ok(inst.args[1])) {
          st.status = RunStatus::fault;
          return st;
        }
        const std::size_t u = st.regs[inst.args[0].value];
        st.regs[inst.args[1].value] = alu_semantics(opcode_name(inst.op), u, u, n);
        st.pc += 1;
        break;
      }
      case Opcode::add:
      case Opcode::sub:
      case Opcode::max:
      case Opcode::min: {
        if (!reg_ok(inst.args[0]) || !reg_ok(inst.args[1]) ||
            !reg_ok(inst.args[2])) {
          st.status = RunStatus::fault;
          return st;
        }
        const std::size_t u = st.regs[inst.args[0].value];
        const std::size_t v = st.regs[inst.args[1].value];
        st.regs[inst.args[2].value] =
            alu_semantics(opcode_name(inst.op), u, v, n);
        st.pc += 1;
        break;
      }
      case Opcode::call:
      case Opcode::ret:
        // the linker lowers these; reaching one here is a library-construction bug
        st.status = RunStatus::fault;
        return st;
    }
  }
  return st;
}

}  // namespace difc
