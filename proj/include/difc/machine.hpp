#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "difc/program_matrix.hpp"
#include "difc/tensor.hpp"
#include "difc/words.hpp"

namespace difc {

/// Machine state S = (M, R, c, h): memory rows, register rows, the line
/// counter and the accumulated halting mass, all probabilistic. Plain
/// aggregate so controllers can hand in differentiable initializations.
struct MachineState {
  Tensor M;  // {mem_size, n}, each row a Word over values
  Tensor R;  // {registers, n}
  Tensor c;  // {n}: Word over lines, embedded in value space (L <= n)
  Tensor h;  // scalar in [0, 1], non-decreasing
  std::size_t t{0};
};

/// Dirac starting state: mem0/regs0 give the first cells/registers, the
/// rest hold 0. r0 is forced to 1 (the constant-true convention) and the
/// counter sits on entry_line.
MachineState initial_state(const MachineLayout& layout,
                           const std::vector<std::size_t>& mem0,
                           const std::vector<std::size_t>& regs0,
                           std::size_t entry_line);

/// The fetched instruction mixture: field distributions plus the derived
/// opcode masses the step rule needs.
struct Instruction {
  Tensor op;   // {14}
  Tensor a1, a2, dst;  // {n} each
  Tensor h_prob, j_prob, w_prob;  // scalars: halt, jump, write mass
  Tensor jr_prob, r_prob, s_prob, set_prob;  // jumpr, read, store, set mass
};

/// Fixed execution context: layout, the dense ALU lookup table and the
/// constants every step reuses (increment permutation, implicit halt row).
/// Counter mass that leaks past the last program line fetches the halt row,
/// so soft execution is total where the integer oracle would fault.
struct Machine {
  MachineLayout layout;
  AluTable table;      // {14, n, n, n}, frozen
  Tensor inc_matrix;   // {n, n}: row i is one_hot((i+1) % n)
  Tensor halt_row;     // {row_width}: compiled form of a bare halt
  Tensor e0;           // one_hot(0, n)
  Tensor one;          // scalar 1
};

Machine make_machine(const MachineLayout& layout);

/// Instruction fetch: every field is the c-weighted mixture of that field
/// across program lines (a dot product against rho).
Instruction fetch(const ProgramMatrix& pm, const Word& c);

/// r = M^T a: the a-weighted mixture of memory rows.
Word read_mem(const Tensor& M, const Word& a);

/// M' = (1 - p*a) ⊙ M + (p*a) ⊗ val. p in [0,1] may carry gradient.
Tensor write_mem(const Tensor& M, const Word& a, const Word& val,
                 const Tensor& p);
Tensor write_mem(const Tensor& M, const Word& a, const Word& val, double p);

/// R' = (1 - a) ⊙ R + a ⊗ val. Accepts sub-normalized a (mass that
/// addresses no register simply writes nowhere).
Tensor write_reg(const Tensor& R, const Word& a, const Word& val);

/// Register-resolved table lookup o = T[f](u, v) with u, v the a1/a2
/// mixtures of register values. Address mass outside the register file
/// resolves to the value 0, mirroring the oracle's out-of-range reads.
Word alu(const AluTable& table, const Instruction& inst, const Tensor& R);

/// One superposed step. Data paths: read pulls from memory at address
/// R[a1], store produces the incremented counter, set produces the a1
/// immediate itself, everything else flows through the ALU table. The dst
/// register is always written; memory updates with mass w_prob; the
/// counter follows (1-j)*inc(c) + j*((1-p)*inc(c) + p*l) for both jump
/// flavors, with p the mass on value 1 in the condition register. All
/// updates are gated by the live mass (1-h), so halted state is frozen.
MachineState step(const MachineState& s, const ProgramMatrix& pm,
                  const Machine& m);

enum class RunMode { soft, thresholded };

struct RunReport {
  MachineState final_state;
  std::vector<double> halt_increments;  // Δh per executed step
  std::size_t steps{0};
  RunMode mode{RunMode::soft};
  bool timed_out{false};  // thresholded: budget hit before threshold
  /// soft mode: Σ_t Δh_t · M_t + (1 - h_T) · M_T, the halting-weighted
  /// expected memory (training readout). thresholded mode: the final M.
  Tensor expected_memory;
};

/// soft: exactly max_steps steps, accumulating the expected memory.
/// thresholded: stop once h >= halt_threshold, or time out on budget.
RunReport run(MachineState s0, const ProgramMatrix& pm, const Machine& m,
              std::size_t max_steps, RunMode mode,
              double halt_threshold = 0.99);

enum class LossMode { expected_memory, final_memory };

/// Cross-entropy between selected memory rows and target Words.
Tensor loss_on_memory(const RunReport& report,
                      const std::vector<std::pair<std::size_t, Word>>& targets,
                      LossMode mode = LossMode::expected_memory);

// decoded views (argmax per row) for reports and oracle comparisons
std::vector<std::size_t> decoded_memory(const MachineState& s);
std::vector<std::size_t> decoded_registers(const MachineState& s);
std::size_t decoded_counter(const MachineState& s);

/// Decoded memory/registers, step count and halting trace as JSON text.
std::string run_report_json(const RunReport& report);

}  // namespace difc
