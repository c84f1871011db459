#include "difc/words.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "serial.hpp"

namespace difc {

namespace {

using serial::read_f64;
using serial::read_string;
using serial::read_u64;
using serial::write_f64;
using serial::write_string;
using serial::write_u64;

constexpr char kTableMagic[9] = "DIFCTBL1";

}  // namespace

bool is_word(const Tensor& w, double tol) {
  if (w.dim() != 1) return false;
  double total = 0.0;
  for (double v : w.value()) {
    if (v < -tol) return false;
    total += v;
  }
  return std::abs(total - 1.0) <= tol;
}

Word one_hot(std::size_t k, std::size_t n) {
  if (k >= n)
    throw std::out_of_range("one_hot: index " + std::to_string(k) +
                            " out of range for size " + std::to_string(n));
  std::vector<double> v(n, 0.0);
  v[k] = 1.0;
  return Tensor({n}, std::move(v));
}

std::size_t decode(const Word& w) {
  const auto& v = w.value();
  return static_cast<std::size_t>(
      std::max_element(v.begin(), v.end()) - v.begin());
}

BitWord unit_to_binary(const Word& w, std::size_t bits) {
  const std::size_t n = w.size();
  if (bits >= 64 || (n > (std::size_t{1} << bits)))
    throw std::invalid_argument("unit_to_binary: " + std::to_string(bits) +
                                " bits cannot hold " + std::to_string(n) +
                                " values");
  std::vector<double> enc(n * bits, 0.0);
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t i = 0; i < bits; ++i)
      enc[k * bits + i] = static_cast<double>((k >> i) & 1);
  Tensor table({n, bits}, std::move(enc));
  return contract(w, table, {{0, 0}});
}

Word binary_to_unit(const BitWord& bits) {
  if (bits.dim() != 1)
    throw std::invalid_argument("binary_to_unit: expects a 1-D bit vector");
  const std::size_t b = bits.size();
  if (b > 20)
    throw std::invalid_argument("binary_to_unit: 2^" + std::to_string(b) +
                                " outputs is beyond capacity");
  Tensor one({1}, {1.0});
  Tensor acc = one;
  for (std::size_t i = 0; i < b; ++i) {
    Tensor bi = narrow(bits, 0, i, 1);
    Tensor pair = concat({sub(one, bi), bi});
    // entry k + 2^i·s picks up (1-b_i) for s=0 and b_i for s=1
    acc = reshape(contract(pair, acc, {}), {acc.size() * 2});
  }
  return acc;
}

std::size_t alu_semantics(const std::string& op, std::size_t i, std::size_t j,
                          std::size_t n) {
  if (op == "add") return (i + j) % n;
  if (op == "sub") return (i + n - j) % n;
  if (op == "mul" || op == "mult") return (i * j) % n;
  if (op == "max") return std::max(i, j);
  if (op == "min") return std::min(i, j);
  if (op == "inc") return (i + 1) % n;
  if (op == "dec") return (i + n - 1) % n;
  if (op == "copy") return i;
  if (op == "halt" || op == "jump" || op == "jumpr" || op == "store" ||
      op == "read" || op == "write" || op == "set") {
    return i;  // pass-through; real effect handled by the machine
  }
  throw std::invalid_argument("alu_semantics: unknown opcode '" + op + "'");
}

AluTable build_mod_table(const std::vector<std::string>& ops, std::size_t n) {
  if (n == 0) throw std::invalid_argument("build_mod_table: n must be positive");
  if (n > 128)
    throw std::invalid_argument(
        "build_mod_table: n = " + std::to_string(n) +
        " exceeds the dense-table capacity of 128; use the circuits module");
  const std::size_t a = ops.size();
  std::vector<double> data(a * n * n * n, 0.0);
  for (std::size_t f = 0; f < a; ++f) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        const std::size_t out = alu_semantics(ops[f], i, j, n);
        data[((f * n + i) * n + j) * n + out] = 1.0;
      }
    }
  }
  AluTable t;
  t.table = Tensor({a, n, n, n}, std::move(data));
  t.op_names = ops;
  return t;
}

Word table_lookup(const AluTable& t, const Tensor& f, const Word& a,
                  const Word& b) {
  if (f.size() != t.num_ops() || a.size() != t.n() || b.size() != t.n())
    throw std::invalid_argument("table_lookup: operand sizes do not match table");
  Tensor by_op = contract(f, t.table, {{0, 0}});   // (n, n, n)
  Tensor by_a = contract(a, by_op, {{0, 0}});      // (n, n)
  return contract(b, by_a, {{0, 0}});              // (n,)
}

void save_alu_table(const AluTable& t, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("save_alu_table: cannot open " + path);
  os.write(kTableMagic, 8);
  write_u64(os, t.n());
  write_u64(os, t.num_ops());
  for (const auto& name : t.op_names) write_string(os, name);
  for (double v : t.table.value()) write_f64(os, v);
  if (!os) throw std::runtime_error("save_alu_table: write failed for " + path);
}

AluTable load_alu_table(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("load_alu_table: cannot open " + path);
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kTableMagic, 8) != 0)
    throw std::runtime_error("load_alu_table: bad magic in " + path);
  const std::size_t n = read_u64(is);
  const std::size_t a = read_u64(is);
  if (n == 0 || n > 128 || a == 0 || a > 64)
    throw std::runtime_error("load_alu_table: implausible header in " + path);
  AluTable t;
  for (std::size_t i = 0; i < a; ++i) t.op_names.push_back(read_string(is));
  std::vector<double> data(a * n * n * n);
  for (auto& v : data) v = read_f64(is);
  if (!is) throw std::runtime_error("load_alu_table: truncated file " + path);
  t.table = Tensor({a, n, n, n}, std::move(data));
  return t;
}

}  // namespace difc
