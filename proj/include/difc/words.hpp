#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "difc/tensor.hpp"

namespace difc {

/// A Word is a 1-D probability vector over n integer values: nonnegative
/// entries summing to 1. dirac(k) means all mass on k.
/// A BitWord is a 1-D vector of independent bit probabilities, index 0 the
/// least-significant bit.
using Word = Tensor;
using BitWord = Tensor;

bool is_word(const Tensor& w, double tol = 1e-9);

Word one_hot(std::size_t k, std::size_t n);

/// Index of the maximum entry; ties break toward the smallest index.
std::size_t decode(const Word& w);

/// Expected bits under the distribution: bit_i = Σ_k w_k · bit_i(k).
/// Differentiable (a dot product against a fixed n×b table of encodings).
BitWord unit_to_binary(const Word& w, std::size_t bits);

/// Word of length 2^b with entry k = Π_i (bit_i if bit i of k set, else
/// 1−bit_i), the independent-coin interpretation. Sums to 1 by construction.
Word binary_to_unit(const BitWord& bits);

/// (opcode, arg1, arg2) → result distributions, all value widths n.
struct AluTable {
  Tensor table;  // shape (|A|, n, n, n); each [f,i,j,:] slice is one-hot
  std::vector<std::string> op_names;

  std::size_t num_ops() const { return op_names.size(); }
  std::size_t n() const { return table.shape().back(); }
};

/// Integer semantics of an ALU opcode, mod n. Opcodes without arithmetic
/// meaning (halt/jump/jumpr/store/read/write/set) pass through the first
/// argument; their real effects live in the machine's data paths.
/// Shared by the table builder and the integer oracle so they cannot drift.
std::size_t alu_semantics(const std::string& op, std::size_t i, std::size_t j,
                          std::size_t n);

/// table[f,i,j,:] = one_hot(semantics_f(i,j) mod n). Rejects n > 128: a
/// dense lookup at that size is the wrong tool, use the circuits module.
AluTable build_mod_table(const std::vector<std::string>& ops, std::size_t n);

/// c_k = T_{hijk} f_h a_i b_j, the triple contraction.
Word table_lookup(const AluTable& t, const Tensor& f, const Word& a, const Word& b);

void save_alu_table(const AluTable& t, const std::string& path);
AluTable load_alu_table(const std::string& path);

}  // namespace difc
