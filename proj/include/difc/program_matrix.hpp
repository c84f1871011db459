#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

#include "difc/assembly.hpp"
#include "difc/optim.hpp"
#include "difc/tensor.hpp"

namespace difc {

/// Dimensions of the differentiable machine a program matrix targets.
/// Everything lives in word size n: registers, memory cells, program lines
/// and immediate values all index into n-wide one-hot spaces.
struct MachineLayout {
  std::size_t n{16};
  std::size_t registers{8};
  std::size_t mem_size{8};

  static constexpr std::size_t opcode_width = 14;  // machine opcode count

  std::size_t opcode_offset() const { return 0; }
  std::size_t a1_offset() const { return opcode_width; }
  std::size_t a2_offset() const { return opcode_width + n; }
  std::size_t dst_offset() const { return opcode_width + 2 * n; }
  std::size_t row_width() const { return opcode_width + 3 * n; }

  /// Throws std::invalid_argument unless 2 <= registers <= n and
  /// 1 <= mem_size <= n (register conventions need r0 and r1 to exist).
  void validate() const;

  bool operator==(const MachineLayout& o) const = default;
};

/// One field of a program-matrix row.
enum class Field { opcode, a1, a2, dst };

/// Placement of one linked program inside the matrix: entry line and the
/// half-open line range [begin, end) it occupies.
struct ProgramInfo {
  std::string name;
  std::size_t entry{0};
  std::size_t begin{0};
  std::size_t end{0};

  bool operator==(const ProgramInfo& o) const = default;
};

/// A program as machine parameters: L rows, each the concatenation of an
/// opcode distribution (width 14) and arg1/arg2/dest Words (width n each).
/// Compiled matrices hold exact dirac rows; trainable ones hold softmax
/// outputs of a logit tensor (see program_matrix_from_logits).
struct ProgramMatrix {
  MachineLayout layout;
  Tensor rho;                       // shape {L, layout.row_width()}
  std::vector<ProgramInfo> programs;  // in link order

  std::size_t lines() const { return rho.shape().at(0); }
  const ProgramInfo& program(const std::string& name) const;
};

/// Lowers a linked library into dirac distributions. Field conventions for
/// operands an opcode does not use (chosen so the mandatory register write
/// is a self-no-op, see the machine module):
///   halt            a1 = a2 = dst = r0
///   jump  c, l      a1 = c, a2 = one_hot(l), dst = c
///   jumpr c, t      a1 = c, a2 = t,          dst = c
///   store d         a1 = a2 = dst = d
///   read  a, d      a1 = a, a2 = a, dst = d
///   write a, s      a1 = a, a2 = s, dst = a
///   set   v, d      a1 = a2 = one_hot(v), dst = d
///   copy/inc/dec s, d   a1 = a2 = s, dst = d
///   add/sub/max/min x, y, d   a1 = x, a2 = y, dst = d
/// Throws std::invalid_argument on layout violations (L > n, register
/// operand >= registers, immediate or line target >= n).
ProgramMatrix compile(const Library& lib, const MachineLayout& layout);

/// Trainable form: logits whose field-wise softmax is within 5e-5 of the
/// compiled dirac matrix. Inside each field the argmax entry gets +kappa
/// and the rest -kappa.
Tensor compile_logits(const Library& lib, const MachineLayout& layout,
                      double kappa = 10.0);

/// Field-wise softmax over a logit tensor of shape {L, row_width}; the
/// differentiable bridge from trainable logits to a valid ProgramMatrix.
Tensor program_matrix_from_logits(const Tensor& logits,
                                  const MachineLayout& layout);

/// A span of protected (frozen) entries: lines [line_begin, line_end) and
/// either one field or all of them.
struct ProtectSpan {
  std::size_t line_begin{0};
  std::size_t line_end{0};
  bool whole_row{true};
  Field field{Field::opcode};

  static ProtectSpan rows(std::size_t begin, std::size_t end) {
    return {begin, end, true, Field::opcode};
  }
  static ProtectSpan field_of(std::size_t line, Field f) {
    return {line, line + 1, false, f};
  }
};

ProtectSpan protect_all(const ProgramMatrix& pm);
ProtectSpan protect_program(const ProgramMatrix& pm, const std::string& name);

/// Mask for masked_sgd_step over rho (or its logits, same shape): zero on
/// protected entries, one elsewhere. Throws std::out_of_range when a span
/// exceeds the matrix.
ParameterMask freeze_mask(const ProgramMatrix& pm,
                          const std::vector<ProtectSpan>& protect);

/// decompile: argmax each field back to a symbolic line. Confidence of a
/// line is the smallest argmax probability across its four fields; lines
/// below the threshold are flagged uncertain.
struct DecompiledLine {
  SymbolicInstruction inst;
  double confidence{0.0};
  bool uncertain{false};
};

struct DecompileResult {
  SymbolicProgram program;
  std::vector<DecompiledLine> lines;
  std::size_t uncertain_count{0};
};

DecompileResult decompile(const ProgramMatrix& pm, double threshold = 0.5);

/// Versioned binary serialization (magic DIFCPGM1, little-endian) and a
/// JSON debug dump with per-line field argmaxes and confidences.
void save_program_matrix(const ProgramMatrix& pm, std::ostream& os);
void save_program_matrix(const ProgramMatrix& pm, const std::string& path);
ProgramMatrix load_program_matrix(std::istream& is);
ProgramMatrix load_program_matrix(const std::string& path);
std::string program_matrix_debug_json(const ProgramMatrix& pm,
                                      double threshold = 0.5);

}  // namespace difc
