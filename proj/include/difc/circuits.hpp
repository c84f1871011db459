#pragma once

#include <cstdint>

#include "difc/words.hpp"

namespace difc {

// Probabilistic logic over bit probabilities in [0,1]. Exact Boolean
// semantics on {0,1}, differentiable everywhere. Gate expressions form a
// DAG on the autodiff tape, so acyclicity and evaluation order hold by
// construction. All gates are elementwise and broadcast like mul/add.
Tensor gate_and(const Tensor& a, const Tensor& b);  // a·b
Tensor gate_or(const Tensor& a, const Tensor& b);   // a + b − a·b
Tensor gate_xor(const Tensor& a, const Tensor& b);  // a + b − 2·a·b
Tensor gate_not(const Tensor& a);                   // 1 − a

/// Full-adder chain; result has width b+1 (carry-out is the top bit).
BitWord ripple_add(const BitWord& x, const BitWord& y);

struct SubResult {
  BitWord diff;   // width b, x − y mod 2^b
  Tensor borrow;  // scalar in [0,1]; on dirac inputs, 1 iff x < y
};

/// Two's-complement subtraction: invert, add one, add; borrow is the
/// complement of the final carry.
SubResult ripple_sub(const BitWord& x, const BitWord& y);

/// Shift-and-add multiplication; result has width 2b, never truncated.
BitWord shift_add_mul(const BitWord& x, const BitWord& y);

struct DivResult {
  BitWord quotient;   // width b
  BitWord remainder;  // width b
  Tensor div_by_zero; // scalar; nor over divisor bits
};

/// Restoring long division. A dirac zero divisor is total by convention:
/// every trial subtraction succeeds, so quotient saturates to all-ones and
/// the remainder equals x; the flag bit reports it.
DivResult long_divide(const BitWord& x, const BitWord& y);

// test/readout helpers for dirac bit vectors
BitWord bits_of(std::uint64_t v, std::size_t width);
std::uint64_t decode_bits(const BitWord& bits);  // rounds each bit

}  // namespace difc
