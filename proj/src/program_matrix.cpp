#include "difc/program_matrix.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "serial.hpp"

namespace difc {

namespace {

constexpr char kProgramMagic[9] = "DIFCPGM1";

/// Dirac indices one machine instruction compiles to, plus which fields
/// must stay inside register space. Kept next to decompile_line below:
/// the two switches are inverses and must change together.
struct RowFields {
  std::size_t op_index{0};
  std::size_t a1{0}, a2{0}, dst{0};
  bool a1_is_reg{true}, a2_is_reg{true};
};

RowFields row_fields(const SymbolicInstruction& inst) {
  const auto reg_of = [](const Operand& o) { return o.value; };
  RowFields f;
  f.op_index = machine_opcode_index(inst.op);
  switch (inst.op) {
    case Opcode::halt:
      f.a1 = f.a2 = f.dst = 0;  // r0: writing its own value back is a no-op
      break;
    case Opcode::jump:
      f.a1 = f.dst = reg_of(inst.args[0]);
      f.a2 = inst.args[1].value;  // resolved line, lives in value space
      f.a2_is_reg = false;
      break;
    case Opcode::jumpr:
      f.a1 = f.dst = reg_of(inst.args[0]);
      f.a2 = reg_of(inst.args[1]);
      break;
    case Opcode::store:
      f.a1 = f.a2 = f.dst = reg_of(inst.args[0]);
      break;
    case Opcode::read:
      f.a1 = f.a2 = reg_of(inst.args[0]);
      f.dst = reg_of(inst.args[1]);
      break;
    case Opcode::write:
      f.a1 = f.dst = reg_of(inst.args[0]);
      f.a2 = reg_of(inst.args[1]);
      break;
    case Opcode::set:
      f.a1 = f.a2 = inst.args[0].value;  // immediate Word
      f.a1_is_reg = f.a2_is_reg = false;
      f.dst = reg_of(inst.args[1]);
      break;
    case Opcode::copy:
    case Opcode::inc:
    case Opcode::dec:
      f.a1 = f.a2 = reg_of(inst.args[0]);
      f.dst = reg_of(inst.args[1]);
      break;
    case Opcode::add:
    case Opcode::sub:
    case Opcode::max:
    case Opcode::min:
      f.a1 = reg_of(inst.args[0]);
      f.a2 = reg_of(inst.args[1]);
      f.dst = reg_of(inst.args[2]);
      break;
    case Opcode::call:
    case Opcode::ret:
      throw std::invalid_argument("call/ret must be lowered by link() before compiling");
  }
  return f;
}

SymbolicInstruction decompile_line(Opcode op, std::size_t a1, std::size_t a2,
                                   std::size_t dst) {
  SymbolicInstruction inst;
  inst.op = op;
  switch (op) {
    case Opcode::halt:
      break;
    case Opcode::jump:
      inst.args = {Operand::reg(a1), Operand::imm(a2)};
      break;
    case Opcode::jumpr:
      inst.args = {Operand::reg(a1), Operand::reg(a2)};
      break;
    case Opcode::store:
      inst.args = {Operand::reg(dst)};
      break;
    case Opcode::read:
    case Opcode::copy:
    case Opcode::inc:
    case Opcode::dec:
      inst.args = {Operand::reg(a1), Operand::reg(dst)};
      break;
    case Opcode::write:
      inst.args = {Operand::reg(a1), Operand::reg(a2)};
      break;
    case Opcode::set:
      inst.args = {Operand::imm(a1), Operand::reg(dst)};
      break;
    case Opcode::add:
    case Opcode::sub:
    case Opcode::max:
    case Opcode::min:
      inst.args = {Operand::reg(a1), Operand::reg(a2), Operand::reg(dst)};
      break;
    case Opcode::call:
    case Opcode::ret:
      throw std::invalid_argument("program matrices cannot encode call/ret");
  }
  return inst;
}

void check_fields(const RowFields& f, const MachineLayout& layout,
                  std::size_t line) {
  const auto fail = [&](const std::string& what, std::size_t v, std::size_t cap) {
    throw std::invalid_argument("line " + std::to_string(line) + ": " + what +
                                " " + std::to_string(v) +
                                " out of range (capacity " +
                                std::to_string(cap) + ")");
  };
  const std::size_t r = layout.registers;
  if (f.a1_is_reg ? f.a1 >= r : f.a1 >= layout.n)
    fail(f.a1_is_reg ? "register" : "value", f.a1, f.a1_is_reg ? r : layout.n);
  if (f.a2_is_reg ? f.a2 >= r : f.a2 >= layout.n)
    fail(f.a2_is_reg ? "register" : "value", f.a2, f.a2_is_reg ? r : layout.n);
  if (f.dst >= r) fail("register", f.dst, r);
}

std::vector<ProgramInfo> program_infos(const Library& lib) {
  std::vector<ProgramInfo> infos;
  for (const auto& name : lib.program_order) {
    const auto range = lib.program_ranges.at(name);
    infos.push_back({name, lib.entry_points.at(name), range.first, range.second});
  }
  return infos;
}

std::size_t field_offset(const MachineLayout& layout, Field f) {
  switch (f) {
    case Field::opcode: return layout.opcode_offset();
    case Field::a1: return layout.a1_offset();
    case Field::a2: return layout.a2_offset();
    case Field::dst: return layout.dst_offset();
  }
  throw std::logic_error("unreachable");
}

std::size_t field_width(const MachineLayout& layout, Field f) {
  return f == Field::opcode ? MachineLayout::opcode_width : layout.n;
}

std::string operand_text(const Operand& o) {
  switch (o.kind) {
    case Operand::Kind::reg: return "r" + std::to_string(o.value);
    case Operand::Kind::imm: return std::to_string(o.value);
    case Operand::Kind::label: return o.name;
  }
  throw std::logic_error("unreachable");
}

std::string instruction_text(const SymbolicInstruction& inst) {
  std::string s = opcode_name(inst.op);
  for (const auto& a : inst.args) s += " " + operand_text(a);
  return s;
}

}  // namespace

void MachineLayout::validate() const {
  if (n < 2) throw std::invalid_argument("word size n must be at least 2");
  if (registers < 2 || registers > n)
    throw std::invalid_argument(
        "register count must lie in [2, n]: conventions reserve r0 and r1");
  if (mem_size == 0 || mem_size > n)
    throw std::invalid_argument("mem_size must lie in [1, n]");
}

const ProgramInfo& ProgramMatrix::program(const std::string& name) const {
  for (const auto& p : programs)
    if (p.name == name) return p;
  throw std::out_of_range("no program named '" + name + "' in matrix");
}

ProgramMatrix compile(const Library& lib, const MachineLayout& layout) {
  layout.validate();
  const std::size_t rows = lib.size();
  if (rows == 0) throw std::invalid_argument("cannot compile an empty library");
  if (rows > layout.n)
    throw std::invalid_argument("library has " + std::to_string(rows) +
                                " lines but the line space holds only " +
                                std::to_string(layout.n));
  const std::size_t w = layout.row_width();
  std::vector<double> data(rows * w, 0.0);
  for (std::size_t i = 0; i < rows; ++i) {
    const RowFields f = row_fields(lib.lines[i]);
    check_fields(f, layout, i);
    double* row = data.data() + i * w;
    row[layout.opcode_offset() + f.op_index] = 1.0;
    row[layout.a1_offset() + f.a1] = 1.0;
    row[layout.a2_offset() + f.a2] = 1.0;
    row[layout.dst_offset() + f.dst] = 1.0;
  }
  ProgramMatrix pm;
  pm.layout = layout;
  pm.rho = Tensor({rows, w}, std::move(data));
  pm.programs = program_infos(lib);
  return pm;
}

Tensor compile_logits(const Library& lib, const MachineLayout& layout,
                      double kappa) {
  // Reuses compile for validation and the dirac positions, then maps
  // {0,1} -> {-kappa,+kappa}.
  ProgramMatrix pm = compile(lib, layout);
  std::vector<double> logits = pm.rho.value();
  for (double& v : logits) v = v > 0.5 ? kappa : -kappa;
  return Tensor(pm.rho.shape(), std::move(logits), true);
}

Tensor program_matrix_from_logits(const Tensor& logits,
                                  const MachineLayout& layout) {
  if (logits.dim() != 2 || logits.shape()[1] != layout.row_width())
    throw std::invalid_argument("logit tensor shape " +
                                shape_to_string(logits.shape()) +
                                " does not match row width " +
                                std::to_string(layout.row_width()));
  std::vector<Tensor> fields;
  for (Field f : {Field::opcode, Field::a1, Field::a2, Field::dst}) {
    Tensor part = narrow(logits, 1, field_offset(layout, f), field_width(layout, f));
    fields.push_back(softmax(part, 1));
  }
  return concat(fields, 1);
}

ProtectSpan protect_all(const ProgramMatrix& pm) {
  return ProtectSpan::rows(0, pm.lines());
}

ProtectSpan protect_program(const ProgramMatrix& pm, const std::string& name) {
  const ProgramInfo& info = pm.program(name);
  return ProtectSpan::rows(info.begin, info.end);
}

ParameterMask freeze_mask(const ProgramMatrix& pm,
                          const std::vector<ProtectSpan>& protect) {
  const std::size_t rows = pm.lines();
  const std::size_t w = pm.layout.row_width();
  std::vector<double> mask(rows * w, 1.0);
  for (const auto& span : protect) {
    if (span.line_begin > span.line_end || span.line_end > rows)
      throw std::out_of_range("protected lines [" +
                              std::to_string(span.line_begin) + ", " +
                              std::to_string(span.line_end) +
                              ") exceed the matrix (" + std::to_string(rows) +
                              " lines)");
    const std::size_t off = span.whole_row ? 0 : field_offset(pm.layout, span.field);
    const std::size_t len = span.whole_row ? w : field_width(pm.layout, span.field);
    for (std::size_t i = span.line_begin; i < span.line_end; ++i)
      std::fill_n(mask.begin() + static_cast<std::ptrdiff_t>(i * w + off), len, 0.0);
  }
  return ParameterMask(Tensor(Shape{rows, w}, std::move(mask)));
}

DecompileResult decompile(const ProgramMatrix& pm, double threshold) {
  const std::size_t w = pm.layout.row_width();
  const auto& v = pm.rho.value();

  DecompileResult out;
  for (std::size_t i = 0; i < pm.lines(); ++i) {
    std::size_t arg[4];
    double conf = 1.0;
    for (Field f : {Field::opcode, Field::a1, Field::a2, Field::dst}) {
      const std::size_t off = i * w + field_offset(pm.layout, f);
      const auto begin = v.begin() + static_cast<std::ptrdiff_t>(off);
      const auto end = begin + static_cast<std::ptrdiff_t>(field_width(pm.layout, f));
      const auto best = std::max_element(begin, end);
      arg[static_cast<std::size_t>(f)] = static_cast<std::size_t>(best - begin);
      conf = std::min(conf, *best);
    }
    DecompiledLine line;
    line.inst = decompile_line(machine_opcode_at(arg[0]), arg[1], arg[2], arg[3]);
    line.confidence = conf;
    line.uncertain = conf < threshold;
    out.uncertain_count += line.uncertain ? 1 : 0;
    out.program.lines.push_back(line.inst);
    out.lines.push_back(std::move(line));
  }
  out.program.name =
      pm.programs.size() == 1 ? pm.programs[0].name : std::string("library");
  for (const auto& p : pm.programs) out.program.labels[p.name] = p.entry;
  return out;
}

void save_program_matrix(const ProgramMatrix& pm, std::ostream& os) {
  using namespace serial;
  os.write(kProgramMagic, 8);
  write_u64(os, pm.layout.n);
  write_u64(os, pm.layout.registers);
  write_u64(os, pm.layout.mem_size);
  write_u64(os, MachineLayout::opcode_width);
  write_u64(os, pm.lines());
  write_u64(os, pm.programs.size());
  for (const auto& p : pm.programs) {
    write_string(os, p.name);
    write_u64(os, p.entry);
    write_u64(os, p.begin);
    write_u64(os, p.end);
  }
  for (double x : pm.rho.value()) write_f64(os, x);
  if (!os) throw std::runtime_error("write failed while saving program matrix");
}

void save_program_matrix(const ProgramMatrix& pm, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open '" + path + "' for writing");
  save_program_matrix(pm, os);
}

ProgramMatrix load_program_matrix(std::istream& is) {
  using namespace serial;
  char magic[8];
  is.read(magic, 8);
  if (!is || std::string(magic, 8) != std::string(kProgramMagic, 8))
    throw std::runtime_error("not a program matrix file (bad magic)");

  ProgramMatrix pm;
  pm.layout.n = read_u64(is);
  pm.layout.registers = read_u64(is);
  pm.layout.mem_size = read_u64(is);
  const std::size_t opw = read_u64(is);
  const std::size_t rows = read_u64(is);
  const std::size_t num_programs = read_u64(is);
  if (!is || opw != MachineLayout::opcode_width)
    throw std::runtime_error("program matrix opcode width " +
                             std::to_string(opw) + " not supported");
  pm.layout.validate();
  if (rows == 0 || rows > pm.layout.n)
    throw std::runtime_error("corrupt program matrix: bad line count");
  if (num_programs > rows)
    throw std::runtime_error("corrupt program matrix: bad program count");

  for (std::size_t p = 0; p < num_programs; ++p) {
    ProgramInfo info;
    info.name = read_string(is);
    info.entry = read_u64(is);
    info.begin = read_u64(is);
    info.end = read_u64(is);
    if (info.begin > info.end || info.end > rows || info.entry >= rows)
      throw std::runtime_error("corrupt program matrix: bad range for '" +
                               info.name + "'");
    pm.programs.push_back(std::move(info));
  }

  const std::size_t w = pm.layout.row_width();
  std::vector<double> data(rows * w);
  for (auto& x : data) x = read_f64(is);
  if (!is) throw std::runtime_error("truncated program matrix file");

  // Every stored field must still be a distribution.
  for (std::size_t i = 0; i < rows; ++i) {
    for (Field f : {Field::opcode, Field::a1, Field::a2, Field::dst}) {
      const std::size_t off = i * w + field_offset(pm.layout, f);
      double total = 0.0;
      for (std::size_t k = 0; k < field_width(pm.layout, f); ++k) {
        const double x = data[off + k];
        if (!(x >= 0.0 && x <= 1.0 + 1e-9))
          throw std::runtime_error("corrupt program matrix: entry outside [0,1]");
        total += x;
      }
      if (std::abs(total - 1.0) > 1e-6)
        throw std::runtime_error("corrupt program matrix: field does not sum to 1");
    }
  }
  pm.rho = Tensor({rows, w}, std::move(data));
  return pm;
}

ProgramMatrix load_program_matrix(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open '" + path + "' for reading");
  return load_program_matrix(is);
}

std::string program_matrix_debug_json(const ProgramMatrix& pm, double threshold) {
  const DecompileResult dec = decompile(pm, threshold);
  const auto& v = pm.rho.value();
  const std::size_t w = pm.layout.row_width();

  nlohmann::json j;
  j["layout"] = {{"n", pm.layout.n},
                 {"registers", pm.layout.registers},
                 {"mem_size", pm.layout.mem_size},
                 {"opcodes", MachineLayout::opcode_width}};
  j["programs"] = nlohmann::json::array();
  for (const auto& p : pm.programs)
    j["programs"].push_back({{"name", p.name},
                             {"entry", p.entry},
                             {"begin", p.begin},
                             {"end", p.end}});
  j["lines"] = nlohmann::json::array();
  for (std::size_t i = 0; i < pm.lines(); ++i) {
    nlohmann::json fields;
    for (Field f : {Field::opcode, Field::a1, Field::a2, Field::dst}) {
      const std::size_t off = i * w + field_offset(pm.layout, f);
      const auto begin = v.begin() + static_cast<std::ptrdiff_t>(off);
      const auto end = begin + static_cast<std::ptrdiff_t>(field_width(pm.layout, f));
      const auto best = std::max_element(begin, end);
      const std::size_t idx = static_cast<std::size_t>(best - begin);
      const char* key = f == Field::opcode ? "opcode"
                        : f == Field::a1  ? "a1"
                        : f == Field::a2  ? "a2"
                                          : "dst";
      nlohmann::json entry = {{"argmax", idx}, {"p", *best}};
      if (f == Field::opcode) entry["name"] = machine_opcode_names()[idx];
      fields[key] = entry;
    }
    j["lines"].push_back({{"line", i},
                          {"text", instruction_text(dec.lines[i].inst)},
                          {"confidence", dec.lines[i].confidence},
                          {"uncertain", dec.lines[i].uncertain},
                          {"fields", fields}});
  }
  return j.dump(2);
}

}  // namespace difc
