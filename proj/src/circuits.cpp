#include "difc/circuits.hpp"

#include <stdexcept>
#include <string>

namespace difc {

namespace {

Tensor bit(const BitWord& w, std::size_t i) { return narrow(w, 0, i, 1); }

Tensor zero_bit() { return Tensor({1}, {0.0}); }
Tensor one_bit() { return Tensor({1}, {1.0}); }

/// sel ? b : a, elementwise: a + sel·(b − a)
Tensor mux(const Tensor& sel, const Tensor& a, const Tensor& b) {
  return add(a, mul(sel, sub(b, a)));
}

void require_same_width(const BitWord& x, const BitWord& y, const char* op) {
  if (x.dim() != 1 || y.dim() != 1 || x.size() != y.size())
    throw std::invalid_argument(std::string(op) + ": operand widths differ");
}

struct AdderRow {
  std::vector<Tensor> sum;  // one 1-length tensor per bit
  Tensor carry;
};

/// Chains full adders over equal-width bit lists with the given carry-in.
AdderRow full_adder_chain(const std::vector<Tensor>& x,
                          const std::vector<Tensor>& y, Tensor carry) {
  AdderRow row;
  for (std::size_t i = 0; i < x.size(); ++i) {
    Tensor axb = gate_xor(x[i], y[i]);
    row.sum.push_back(gate_xor(axb, carry));
    carry = gate_or(gate_and(x[i], y[i]), gate_and(carry, axb));
  }
  row.carry = carry;
  return row;
}

std::vector<Tensor> split_bits(const BitWord& w) {
  std::vector<Tensor> out;
  for (std::size_t i = 0; i < w.size(); ++i) out.push_back(bit(w, i));
  return out;
}

}  // namespace

Tensor gate_and(const Tensor& a, const Tensor& b) { return mul(a, b); }

Tensor gate_or(const Tensor& a, const Tensor& b) {
  return sub(add(a, b), mul(a, b));
}

Tensor gate_xor(const Tensor& a, const Tensor& b) {
  return sub(add(a, b), scale(mul(a, b), 2.0));
}

Tensor gate_not(const Tensor& a) {
  return sub(Tensor::full(a.shape(), 1.0), a);
}

BitWord ripple_add(const BitWord& x, const BitWord& y) {
  require_same_width(x, y, "ripple_add");
  AdderRow row = full_adder_chain(split_bits(x), split_bits(y), zero_bit());
  row.sum.push_back(row.carry);
  return concat(row.sum);
}

SubResult ripple_sub(const BitWord& x, const BitWord& y) {
  require_same_width(x, y, "ripple_sub");
  std::vector<Tensor> ynot;
  for (std::size_t i = 0; i < y.size(); ++i) ynot.push_back(gate_not(bit(y, i)));
  // x + ~y + 1; carry-in 1 is the "+1" of the two's complement
  AdderRow row = full_adder_chain(split_bits(x), ynot, one_bit());
  SubResult r;
  r.diff = concat(row.sum);
  r.borrow = gate_not(row.carry);
  return r;
}

BitWord shift_add_mul(const BitWord& x, const BitWord& y) {
  require_same_width(x, y, "shift_add_mul");
  const std::size_t b = x.size();
  const std::size_t w = 2 * b;
  std::vector<Tensor> acc(w, zero_bit());
  for (std::size_t i = 0; i < b; ++i) {
    Tensor yi = bit(y, i);
    // partial product x·y_i shifted left by i, then accumulated; the chain
    // can only carry into bit b+i, never past the 2b window
    std::vector<Tensor> partial(w, zero_bit());
    for (std::size_t j = 0; j < b; ++j) partial[i + j] = gate_and(yi, bit(x, j));
    AdderRow row = full_adder_chain(acc, partial, zero_bit());
    acc = std::move(row.sum);
  }
  return concat(acc);
}

DivResult long_divide(const BitWord& x, const BitWord& y) {
  require_same_width(x, y, "long_divide");
  const std::size_t b = x.size();

  Tensor flag = one_bit();
  for (std::size_t i = 0; i < b; ++i) flag = gate_and(flag, gate_not(bit(y, i)));

  // remainder runs one bit wide so the shift-in cannot overflow
  std::vector<Tensor> rem(b + 1, zero_bit());
  std::vector<Tensor> ypad = split_bits(y);
  ypad.push_back(zero_bit());

  std::vector<Tensor> quot(b, zero_bit());
  for (std::size_t i = b; i-- > 0;) {
    // rem = (rem << 1) | x_i
    std::vector<Tensor> shifted(b + 1);
    shifted[0] = bit(x, i);
    for (std::size_t j = 1; j <= b; ++j) shifted[j] = rem[j - 1];
    // trial subtraction; keep it when it does not borrow
    AdderRow trial = full_adder_chain(
        shifted,
        [&] {
          std::vector<Tensor> ynot;
          for (auto& t : ypad) ynot.push_back(gate_not(t));
          return ynot;
        }(),
        one_bit());
    Tensor borrow = gate_not(trial.carry);
    quot[i] = gate_not(borrow);
    for (std::size_t j = 0; j <= b; ++j)
      rem[j] = mux(borrow, trial.sum[j], shifted[j]);
  }
  DivResult out;
  out.quotient = concat(quot);
  rem.pop_back();  // top bit is zero once the restore settles
  out.remainder = concat(rem);
  out.div_by_zero = flag;
  return out;
}

BitWord bits_of(std::uint64_t v, std::size_t width) {
  std::vector<double> bits(width);
  for (std::size_t i = 0; i < width; ++i)
    bits[i] = static_cast<double>((v >> i) & 1u);
  return BitWord({width}, std::move(bits));
}

std::uint64_t decode_bits(const BitWord& bits) {
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < bits.size(); ++i)
    if (bits.at(i) > 0.5) v |= std::uint64_t{1} << i;
  return v;
}

}  // namespace difc
