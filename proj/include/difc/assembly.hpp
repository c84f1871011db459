#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace difc {

/// Assembly-level instruction set. call/ret are assembler macros that the
/// linker lowers onto existing primitives; jumpr (register-indirect jump)
/// exists only at machine level, emitted when lowering ret.
enum class Opcode {
  halt, jump, jumpr, store, call, ret, read, write,
  copy, set, inc, dec, add, sub, max, min,
};

const char* opcode_name(Opcode op);
std::optional<Opcode> opcode_from_name(const std::string& name);
std::size_t opcode_arity(Opcode op);
bool is_machine_opcode(Opcode op);  // everything except call/ret

/// The 14 opcodes a ProgramMatrix row can select, in field order.
const std::vector<std::string>& machine_opcode_names();
std::size_t machine_opcode_index(Opcode op);
Opcode machine_opcode_at(std::size_t index);

struct Operand {
  enum class Kind { reg, imm, label };
  Kind kind{Kind::reg};
  std::size_t value{0};  // register index, immediate, or resolved line
  std::string name;      // label text when kind == label

  static Operand reg(std::size_t r) { return {Kind::reg, r, {}}; }
  static Operand imm(std::size_t v) { return {Kind::imm, v, {}}; }
  static Operand label(std::string s) { return {Kind::label, 0, std::move(s)}; }

  bool operator==(const Operand& o) const = default;
};

struct SymbolicInstruction {
  Opcode op{Opcode::halt};
  std::vector<Operand> args;

  bool operator==(const SymbolicInstruction& o) const = default;
};

struct SymbolicProgram {
  std::string name;
  std::vector<SymbolicInstruction> lines;
  std::map<std::string, std::size_t> labels;  // label → line index

  bool operator==(const SymbolicProgram& o) const = default;
};

class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, std::size_t col, const std::string& msg);
  std::size_t line;
  std::size_t col;
};

/// Parses one program: one instruction per line, whitespace-separated
/// operands, `label:` prefixes, `#` comments. Registers are written bare
/// or as rN. A program that ends in neither halt nor ret gets a halt
/// appended so execution cannot fall off the end. If n is given,
/// set-immediates are range-checked against it.
SymbolicProgram parse(const std::string& text, const std::string& name = "main",
                      std::size_t n = 0);

/// Canonical text form; parse(pretty_print(p)) reproduces p structurally.
std::string pretty_print(const SymbolicProgram& p);

/// Warnings about writes into the convention registers: r0 (constant 1)
/// always, r1 (return address) when the program takes part in call/ret.
std::vector<std::string> lint(const SymbolicProgram& p);

/// Machine-level program collection: concatenated lowered lines with
/// per-program entry points. call f → [store r1; jump r0 entry(f)];
/// ret → [inc r1 r1; jumpr r0 r1] (store saved the line of the call's own
/// jump, so returning must first step past it).
struct Library {
  std::vector<SymbolicInstruction> lines;
  std::map<std::string, std::size_t> entry_points;
  std::map<std::string, std::pair<std::size_t, std::size_t>> program_ranges;
  std::vector<std::string> program_order;

  std::size_t size() const { return lines.size(); }
};

class LinkError : public std::runtime_error {
 public:
  explicit LinkError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Lowers and concatenates programs; resolves labels and call targets to
/// absolute machine lines. max_lines (usually the machine's n) bounds the
/// concatenated length.
Library link(const std::vector<SymbolicProgram>& programs, std::size_t max_lines);

/// A library whose lines are already machine-level (used by decompile and
/// for single-program views of a linked library).
SymbolicProgram library_as_program(const Library& lib, const std::string& name);

// --- integer reference semantics -------------------------------------------

enum class RunStatus { halted, timeout, fault };

struct OracleState {
  std::vector<std::size_t> mem;
  std::vector<std::size_t> regs;
  std::size_t pc{0};
  RunStatus status{RunStatus::timeout};
  std::size_t steps{0};
};

/// Deterministic integer execution of a linked library: arithmetic mod n,
/// jump taken iff the condition register holds exactly 1, store writes
/// pc+1, reads outside memory yield 0, writes outside memory are dropped.
/// Total under the step budget: never throws on any reachable state.
OracleState oracle_run(const Library& lib, const std::string& entry,
                       const std::vector<std::size_t>& mem0,
                       const std::vector<std::size_t>& regs0, std::size_t n,
                       std::size_t num_regs, std::size_t mem_size,
                       std::size_t max_steps);

}  // namespace difc
